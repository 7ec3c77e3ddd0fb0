//! Inserts a new nominal sample into a bank on disk without rebuilding it,
//! and shows that sample's score dropping to zero.
//!
//!     cargo run --example hot_update [OUT_DIR]

mod common;

use hetmm::bank::{read_manifest, BankLock};
use hetmm::manifest::write_feature_set;
use hetmm::pipeline::{run_build, run_compress, run_score, run_update, RunConfig};
use hetmm::PtsConfig;

fn main() -> hetmm::Result<()> {
    let dir = common::out_dir("hot-update");
    let texture = common::Texture::new(7);
    let mut r = common::rng(5);
    let train: Vec<_> = (0..12)
        .map(|i| (texture.image(&mut r, &format!("good_{i:03}")), [64, 64]))
        .collect();
    write_feature_set(dir.join("train"), "train.json", &train)?;
    run_build(dir.join("train/train.json"), dir.join("bank"))?;
    run_compress(dir.join("bank"), &PtsConfig::with_k(4), dir.join("tiny"))?;

    // A normal variant the bank has never seen.
    let variant = texture.defect(&mut r, "new_variant", 6, 6, 2);
    write_feature_set(dir.join("add"), "add.json", &[(variant, [64, 64])])?;
    let cfg = RunConfig::read_str(r#"{"preset": "mtd"}"#)?;
    let before = run_score(
        dir.join("tiny"),
        &cfg,
        dir.join("add/add.json"),
        dir.join("before"),
    )?;

    {
        let _writer = BankLock::acquire(dir.join("tiny"))?;
        match run_update(dir.join("tiny"), dir.join("add/add.json")) {
            Err(e) => println!("update while another writer holds the lock: {e}"),
            Ok(_) => unreachable!(),
        }
    }
    let bank = run_update(dir.join("tiny"), dir.join("add/add.json"))?;
    let after = run_score(
        dir.join("tiny"),
        &cfg,
        dir.join("add/add.json"),
        dir.join("after"),
    )?;
    println!(
        "bank: {} sheets, state {}",
        bank.sheet_count(),
        read_manifest(dir.join("tiny"))?.state()
    );
    println!(
        "new_variant score: {:.4} before, {:.4} after",
        before[0].score, after[0].score
    );
    Ok(())
}
