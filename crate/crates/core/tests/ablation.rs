//! Point-level vs mean-pooled patch-level vs patch-wise forward matching on
//! constructed fixtures with misaligned nominal images and small defects.

mod common;

use common::*;
use hetmm::reference::{naive_patch_match, naive_pixel_match};
use hetmm::{auroc, backward_hetm, forward_hetm, AnomalyMap, FeatureMap, PatchSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Period-3 texture shifted by `(dx, dy)` with light noise.
fn shifted_texture(r: &mut ChaCha8Rng, motif: &[Vec<f32>], dx: usize, dy: usize) -> FeatureMap {
    FeatureMap::from_fn(15, 15, 9, |x, y| {
        motif[(x + dx) % 3 + 3 * ((y + dy) % 3)]
            .iter()
            .map(|v| v + r.gen_range(0.0..0.03))
            .collect()
    })
    .unwrap()
}

struct Scores {
    point: f64,
    patch: f64,
    hetm: f64,
}

fn pixel_auroc_of(maps: &[(AnomalyMap, Vec<bool>)]) -> f64 {
    let scores: Vec<f64> = maps
        .iter()
        .flat_map(|(m, _)| m.values().iter().map(|v| *v as f64))
        .collect();
    let labels: Vec<bool> = maps.iter().flat_map(|(_, l)| l.clone()).collect();
    auroc(&scores, &labels).unwrap()
}

fn run(seed: u64) -> Scores {
    let mut r = rng(seed);
    // Nearly orthogonal motif vectors: misalignment costs a distance near 1.
    let motif: Vec<Vec<f32>> = (0..9)
        .map(|i| {
            (0..9)
                .map(|c| if c == i { 1.0 } else { r.gen_range(0.0..0.1) })
                .collect()
        })
        .collect();
    // Templates only ever show shift (0, 0) or (1, 0); queries use (2, 1).
    let sheets: Vec<FeatureMap> = (0..6)
        .map(|i| shifted_texture(&mut r, &motif, i % 2, 0))
        .collect();
    let p3 = PatchSpec::square(3).unwrap();
    let mut point = Vec::new();
    let mut patch = Vec::new();
    let mut hetm = Vec::new();
    for _ in 0..4 {
        let mut q = shifted_texture(&mut r, &motif, 2, 1);
        let mut labels = vec![false; 15 * 15];
        for _ in 0..2 {
            let (x, y) = (r.gen_range(1..14), r.gen_range(1..14));
            // Subtle defect: half of a foreign motif vector blended in.
            let own = (x + 2) % 3 + 3 * ((y + 1) % 3);
            let other = &motif[(own + r.gen_range(1..9)) % 9];
            let bent: Vec<f32> = q
                .vector(x, y)
                .iter()
                .zip(other)
                .map(|(v, o)| v + 0.5 * o)
                .collect();
            q.set_vector(x, y, &bent).unwrap();
            labels[y * 15 + x] = true;
        }
        point.push((naive_pixel_match(&q, &sheets).unwrap(), labels.clone()));
        patch.push((naive_patch_match(&q, &sheets, p3).unwrap(), labels.clone()));
        hetm.push((forward_hetm(&q, &sheets, p3).unwrap(), labels));
    }
    Scores {
        point: pixel_auroc_of(&point),
        patch: pixel_auroc_of(&patch),
        hetm: pixel_auroc_of(&hetm),
    }
}

#[test]
fn point_below_patch_below_hetm() {
    let (mut p, mut m, mut h) = (0.0, 0.0, 0.0);
    for seed in 0..8 {
        let s = run(100 + seed);
        p += s.point;
        m += s.patch;
        h += s.hetm;
    }
    let (p, m, h) = (p / 8.0, m / 8.0, h / 8.0);
    assert!(p < m && m < h, "point {p:.3}, patch {m:.3}, hetm {h:.3}");
}

#[test]
fn shifted_prototype_is_matched_by_the_patch_but_not_the_point() {
    let mut r = rng(11);
    let sheet = relu_map(&mut r, 10, 10, 6);
    // Content moved one pixel right; column 0 repeats the original column 0.
    let q = FeatureMap::from_fn(10, 10, 6, |x, y| {
        sheet.vector(x.saturating_sub(1), y).to_vec()
    })
    .unwrap();
    let sheets = [sheet];
    let point = naive_pixel_match(&q, &sheets).unwrap();
    let fwd = forward_hetm(&q, &sheets, PatchSpec::square(3).unwrap()).unwrap();
    assert!(point.max() > 0.1, "{}", point.max());
    assert_eq!(fwd.max(), 0.0);
    // A horizontal-only patch suffices; a vertical-only one does not.
    assert_eq!(
        forward_hetm(&q, &sheets, PatchSpec::new(3, 1).unwrap())
            .unwrap()
            .max(),
        0.0
    );
    assert!(
        forward_hetm(&q, &sheets, PatchSpec::new(1, 3).unwrap())
            .unwrap()
            .max()
            > 0.0
    );
    // Backward: every template pixel finds itself in the shifted query
    // except the last column, whose content fell off the edge.
    let bwd = backward_hetm(&q, &sheets, PatchSpec::square(3).unwrap()).unwrap();
    for y in 0..10 {
        for x in 0..9 {
            assert_eq!(bwd.get(x, y), 0.0, "({x},{y})");
        }
    }
}
