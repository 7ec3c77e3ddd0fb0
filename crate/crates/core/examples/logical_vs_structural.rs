//! Forward matching catches vectors never seen in training; backward
//! matching catches expected vectors that went missing. Prints both maps
//! and their mixture for one defect of each kind.
//!
//!     cargo run --example logical_vs_structural

mod common;

use hetmm::{FeatureMap, LayerIndex, PatchSpec};

fn unit(i: usize) -> Vec<f32> {
    let mut v = vec![0.0; 4];
    v[i] = 1.0;
    v
}

fn main() -> hetmm::Result<()> {
    // Every template: background `b`, with a part `a` at (3, 3).
    let template = FeatureMap::from_fn(
        8,
        8,
        4,
        |x, y| if (x, y) == (3, 3) { unit(0) } else { unit(1) },
    )?;
    let sheets = vec![template.clone(); 3];
    let index = LayerIndex::new(&sheets)?;
    let patch = PatchSpec::square(3)?;

    let mut missing_part = template.clone();
    missing_part.set_vector(3, 3, &unit(1))?;
    let mut scratch = template.clone();
    scratch.set_vector(6, 5, &unit(2))?;

    for (name, q) in [
        ("missing part (logical)", &missing_part),
        ("scratch (structural)", &scratch),
    ] {
        let s = index.hetmm_detailed(q, patch, 0.6)?;
        let (f, b) = (s.forward.unwrap(), s.backward.unwrap());
        println!(
            "== {name}: forward max {:.2}, backward max {:.2}, mixed max {:.2}",
            f.max(),
            b.max(),
            s.mixed.max()
        );
        let rows = |m: &hetmm::AnomalyMap| {
            common::ascii(m)
                .lines()
                .map(String::from)
                .collect::<Vec<_>>()
        };
        println!("{:<10}{:<10}mixed", "forward", "backward");
        for ((a, b), c) in rows(&f).iter().zip(rows(&b)).zip(rows(&s.mixed)) {
            println!("|{a}| |{b}| |{c}|");
        }
    }
    Ok(())
}
