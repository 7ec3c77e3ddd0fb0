//! Compresses a 60-sheet bank to K sheets per pixel and compares the worst
//! coverage of the selection against a random pick of the same size.
//!
//!     cargo run --release --example compress_bank [OUT_DIR]

mod common;

use hetmm::bank::{build_bank, read_manifest, write_bank};
use hetmm::reference::{naive_selection_baselines, worst_coverage, BaselineKind};
use hetmm::selection::{select_layer, PrototypeKind};
use hetmm::{pts_compress, PtsConfig};

fn main() -> hetmm::Result<()> {
    let dir = common::out_dir("compress-bank");
    let texture = common::Texture::new(7);
    let mut r = common::rng(2);
    let mut images: Vec<_> = (0..56)
        .map(|i| texture.image(&mut r, &format!("good_{i:03}")))
        .collect();
    // A few rare-but-normal variants the compression must keep.
    for i in 0..4 {
        images.push(texture.defect(&mut r, &format!("rare_{i}"), 2 + 3 * i, 4, 2));
    }
    let bank = build_bank(images)?;
    let cfg = PtsConfig::with_k(10);
    let tiny = pts_compress(&bank, &cfg)?;
    write_bank(dir.join("tiny"), &tiny)?;
    println!(
        "{} sheets -> {} sheets ({})",
        bank.sheet_count(),
        tiny.sheet_count(),
        read_manifest(dir.join("tiny"))?.state()
    );

    let sheets = bank.layer(1).unwrap();
    let picks = select_layer(sheets, &cfg)?;
    let (mut easy, mut global, mut hard) = (0, 0, 0);
    let (mut pts_worst, mut rnd_worst) = (0.0f64, 0.0f64);
    for (p, set) in picks.iter().enumerate() {
        let (x, y) = (p % 16, p / 16);
        for proto in &set.prototypes {
            match proto.kind {
                PrototypeKind::Easy => easy += 1,
                PrototypeKind::Global => global += 1,
                PrototypeKind::Hard => hard += 1,
            }
        }
        let all: Vec<&[f32]> = sheets.iter().map(|s| s.vector(x, y)).collect();
        pts_worst = pts_worst.max(worst_coverage(&all, &set.vectors(&all)));
        let rnd = naive_selection_baselines(&all, cfg.k, BaselineKind::Random, p as u64);
        let rnd: Vec<&[f32]> = rnd.iter().map(Vec::as_slice).collect();
        rnd_worst = rnd_worst.max(worst_coverage(&all, &rnd));
    }
    println!("layer 1 prototypes: {easy} easy, {global} global, {hard} hard");
    println!(
        "worst nearest-prototype cosine distance: selection {pts_worst:.4}, random {rnd_worst:.4}"
    );
    Ok(())
}
