mod common;

use common::*;
use hetmm::bank::build_bank;
use hetmm::reference::{naive_backward, naive_forward};
use hetmm::{FeatureMap, ImageFeatures, LayerIndex, PatchSpec};
use proptest::prelude::*;

fn instance(seed: u64) -> (FeatureMap, Vec<FeatureMap>) {
    let mut r = rng(seed);
    let q = random_map(&mut r, 6, 7, 5);
    let sheets = (0..4).map(|_| random_map(&mut r, 6, 7, 5)).collect();
    (q, sheets)
}

fn patch() -> impl Strategy<Value = PatchSpec> {
    (0usize..3, 0usize..3).prop_map(|(a, b)| PatchSpec::new(2 * a + 1, 2 * b + 1).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maps_stay_in_range(seed in any::<u64>(), p in patch(), alpha in 0.0f32..=1.0) {
        let (q, sheets) = instance(seed);
        let idx = LayerIndex::new(&sheets).unwrap();
        let s = idx.hetmm_detailed(&q, p, alpha).unwrap();
        for v in s.mixed.values() {
            prop_assert!((0.0..=2.0).contains(v));
        }
        if let (Some(f), Some(b)) = (&s.forward, &s.backward) {
            for ((m, f), b) in s.mixed.values().iter().zip(f.values()).zip(b.values()) {
                prop_assert!(*m >= f.min(*b) - 1e-6 && *m <= f.max(*b) + 1e-6);
            }
        }
    }

    #[test]
    fn positive_rescaling_changes_nothing(seed in any::<u64>(), p in patch(), k in 0.01f32..100.0) {
        let (q, sheets) = instance(seed);
        let idx = LayerIndex::new(&sheets).unwrap();
        let scaled = q.scaled(k).unwrap();
        let a = idx.forward(&q, p).unwrap();
        let b = idx.forward(&scaled, p).unwrap();
        prop_assert!(max_abs_diff(a.values(), b.values()) <= 1e-6);
        let a = idx.backward(&q, p).unwrap();
        let b = idx.backward(&scaled, p).unwrap();
        prop_assert!(max_abs_diff(a.values(), b.values()) <= 1e-6);
    }

    #[test]
    fn growing_the_bank_never_raises_forward(seed in any::<u64>(), p in patch()) {
        let (q, sheets) = instance(seed);
        let small = LayerIndex::new(&sheets[..2]).unwrap().forward(&q, p).unwrap();
        let big = LayerIndex::new(&sheets).unwrap().forward(&q, p).unwrap();
        for (b, s) in big.values().iter().zip(small.values()) {
            prop_assert!(b <= s);
        }
    }

    #[test]
    fn rectangular_patches_match_oracle(seed in any::<u64>(), p in patch()) {
        let (q, sheets) = instance(seed);
        let idx = LayerIndex::new(&sheets).unwrap();
        prop_assert!(max_abs_diff(idx.forward(&q, p).unwrap().values(), naive_forward(&q, &sheets, p).unwrap().values()) <= 1e-6);
        prop_assert!(max_abs_diff(idx.backward(&q, p).unwrap().values(), naive_backward(&q, &sheets, p).unwrap().values()) <= 1e-6);
    }
}

#[test]
fn zero_vectors_count_as_distance_one() {
    let mut r = rng(5);
    let sheets: Vec<FeatureMap> = (0..3).map(|_| random_map(&mut r, 4, 4, 3)).collect();
    let q = FeatureMap::zeros(4, 4, 3).unwrap();
    let p = PatchSpec::square(3).unwrap();
    let s = LayerIndex::new(&sheets)
        .unwrap()
        .hetmm_detailed(&q, p, 0.5)
        .unwrap();
    assert!(s.mixed.values().iter().all(|v| *v == 1.0));
    assert_eq!(s.zero_query_vectors, 16);
}

#[test]
fn identical_candidates_resolve_to_the_same_value() {
    // Four sheets holding the same vector everywhere: the tie is exact.
    let v = [0.3f32, 0.4, 0.5];
    let sheet = FeatureMap::from_fn(5, 5, 3, |_, _| v.to_vec()).unwrap();
    let sheets = vec![sheet.clone(); 4];
    let q = FeatureMap::from_fn(5, 5, 3, |x, _| vec![x as f32, 1.0, 0.0]).unwrap();
    let a = LayerIndex::new(&sheets)
        .unwrap()
        .forward(&q, PatchSpec::square(5).unwrap())
        .unwrap();
    let b = LayerIndex::new(&sheets[..1])
        .unwrap()
        .forward(&q, PatchSpec::square(1).unwrap())
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn bank_self_match_is_exact_for_every_source() {
    let mut r = rng(21);
    let images: Vec<ImageFeatures> = (0..5)
        .map(|i| ImageFeatures::new(format!("n{i}")).with_layer(1, random_map(&mut r, 9, 9, 12)))
        .collect();
    let bank = build_bank(images.clone()).unwrap();
    let idx = LayerIndex::new(bank.layer(1).unwrap()).unwrap();
    for img in &images {
        for size in [1, 3, 7] {
            let m = idx
                .hetmm(&img.layers[&1], PatchSpec::square(size).unwrap(), 0.5)
                .unwrap();
            assert!(m.values().iter().all(|v| *v == 0.0));
        }
    }
}
