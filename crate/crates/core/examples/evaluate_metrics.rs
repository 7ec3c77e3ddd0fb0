//! Scores a small test split with ground-truth masks and computes image
//! and pixel AUROC, PRO and the four curves, as `hetmm evaluate` does.
//!
//!     cargo run --release --example evaluate_metrics [OUT_DIR]

mod common;

use hetmm::evaluation::{DEFAULT_FPR_CAP, DEFAULT_STEPS};
use hetmm::manifest::{write_feature_set, write_mask};
use hetmm::pipeline::{run_build, run_evaluate, run_score, RunConfig};
use rand::Rng;

fn main() -> hetmm::Result<()> {
    let dir = common::out_dir("evaluate");
    let texture = common::Texture::new(7);
    let mut r = common::rng(4);
    let train: Vec<_> = (0..20)
        .map(|i| (texture.image(&mut r, &format!("good_{i:03}")), [64, 64]))
        .collect();
    write_feature_set(dir.join("train"), "train.json", &train)?;
    run_build(dir.join("train/train.json"), dir.join("bank"))?;

    let mut test = Vec::new();
    std::fs::create_dir_all(dir.join("truth")).map_err(|e| hetmm::Error::Io {
        path: dir.join("truth"),
        source: e,
    })?;
    for i in 0..8 {
        let id = format!("test_{i}");
        let mut mask = vec![false; 64 * 64];
        let img = if i % 2 == 0 {
            texture.image(&mut r, &id)
        } else {
            let (x, y, s) = (r.gen_range(1..12), r.gen_range(1..12), r.gen_range(1..4));
            for yy in 4 * y..4 * (y + s) {
                for xx in 4 * x..4 * (x + s) {
                    mask[yy * 64 + xx] = true;
                }
            }
            texture.defect(&mut r, &id, x, y, s)
        };
        write_mask(dir.join(format!("truth/{id}.ftn")), 64, 64, &mask)?;
        test.push((img, [64, 64]));
    }
    write_feature_set(dir.join("test"), "queries.json", &test)?;
    let cfg = RunConfig::read_str(r#"{"preset": "mtd"}"#)?;
    run_score(
        dir.join("bank"),
        &cfg,
        dir.join("test/queries.json"),
        dir.join("scores"),
    )?;

    let m = run_evaluate(
        dir.join("scores"),
        dir.join("truth"),
        dir.join("metrics.json"),
        Some(&dir.join("curves")),
        DEFAULT_FPR_CAP,
        DEFAULT_STEPS,
    )?;
    println!(
        "image AUROC {:.4}  pixel AUROC {:.4}  PRO@{DEFAULT_FPR_CAP} {:.4}",
        m.auroc_image, m.auroc_pixel, m.pro
    );
    println!(
        "curves: roc {} pts, pro {} pts, iou {} pts, pr {} pts",
        m.curves.roc.len(),
        m.curves.pro.len(),
        m.curves.iou.len(),
        m.curves.pr.len()
    );
    println!("metrics at {}", dir.join("metrics.json").display());
    Ok(())
}
