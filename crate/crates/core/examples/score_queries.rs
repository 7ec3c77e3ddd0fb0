//! Stage II end to end: builds a bank, scores a nominal and a defective
//! query with a JSON config, and prints scores plus the localization map.
//!
//!     cargo run --release --example score_queries [OUT_DIR]

mod common;

use std::fs;

use hetmm::manifest::write_feature_set;
use hetmm::pipeline::{run_build, run_score, RunConfig};

fn main() -> hetmm::Result<()> {
    let dir = common::out_dir("score-queries");
    let texture = common::Texture::new(7);
    let mut r = common::rng(3);
    let train: Vec<_> = (0..20)
        .map(|i| (texture.image(&mut r, &format!("good_{i:03}")), [64, 64]))
        .collect();
    write_feature_set(dir.join("train"), "train.json", &train)?;
    run_build(dir.join("train/train.json"), dir.join("bank"))?;

    let queries = vec![
        (texture.image(&mut r, "nominal"), [64, 64]),
        (texture.defect(&mut r, "defect", 9, 5, 3), [64, 64]),
    ];
    write_feature_set(dir.join("test"), "queries.json", &queries)?;
    let config = r#"{"preset": "mtd", "sigma": 4.0}"#;
    fs::write(dir.join("config.json"), config).map_err(|e| hetmm::Error::Io {
        path: dir.join("config.json"),
        source: e,
    })?;
    let cfg = RunConfig::read(dir.join("config.json"))?;
    println!(
        "config {config} resolves to alpha {} with layers {:?}",
        cfg.matching.alpha,
        cfg.matching
            .layers
            .iter()
            .map(|l| (l.layer_id, l.patch.m))
            .collect::<Vec<_>>()
    );

    let results = run_score(
        dir.join("bank"),
        &cfg,
        dir.join("test/queries.json"),
        dir.join("scores"),
    )?;
    for s in &results {
        println!("{}: image score {:.4}", s.id, s.score);
    }
    let defect = &results[1];
    let small = hetmm::matching::rescale_bilinear(&defect.map, 16, 32)?;
    println!("defect map (downsampled):\n{}", common::ascii(&small));
    println!("outputs in {}", dir.join("scores").display());
    Ok(())
}
