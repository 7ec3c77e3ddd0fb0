//! Exports synthetic nominal features with a manifest, then builds the
//! original template bank from it, as `hetmm build` does.
//!
//!     cargo run --example build_bank [OUT_DIR]

mod common;

use hetmm::bank::read_manifest;
use hetmm::manifest::write_feature_set;
use hetmm::pipeline::run_build;

fn main() -> hetmm::Result<()> {
    let dir = common::out_dir("build-bank");
    let texture = common::Texture::new(7);
    let mut r = common::rng(1);
    let nominal: Vec<_> = (0..60)
        .map(|i| (texture.image(&mut r, &format!("good_{i:03}")), [64, 64]))
        .collect();
    write_feature_set(dir.join("train"), "train.json", &nominal)?;

    let bank = run_build(dir.join("train/train.json"), dir.join("bank"))?;
    let m = read_manifest(dir.join("bank"))?;
    println!("bank at {}", dir.join("bank").display());
    println!("  sheets: {}  state: {}", bank.sheet_count(), m.state());
    for l in &m.layers {
        println!(
            "  layer {}: {}x{}x{}",
            l.layer_id, l.height, l.width, l.channels
        );
    }
    println!("  first sources: {:?}", &bank.sources()[..3]);
    Ok(())
}
