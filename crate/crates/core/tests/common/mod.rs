#![allow(dead_code)]

use hetmm::{FeatureMap, ImageFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform `[-1, 1)` features.
pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
    let data = (0..h * w * c)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    FeatureMap::new(h, w, c, data).unwrap()
}

/// Non-negative features, like post-activation backbone outputs.
pub fn relu_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
    let data = (0..h * w * c)
        .map(|_| rng.gen_range(-0.5f32..1.0).max(0.0))
        .collect();
    FeatureMap::new(h, w, c, data).unwrap()
}

/// Copy of `map` with each vector zeroed with probability `p`.
pub fn with_zero_vectors(rng: &mut ChaCha8Rng, map: &FeatureMap, p: f64) -> FeatureMap {
    let mut out = map.clone();
    let zero = vec![0.0; map.channels()];
    for y in 0..map.height() {
        for x in 0..map.width() {
            if rng.gen_bool(p) {
                out.set_vector(x, y, &zero).unwrap();
            }
        }
    }
    out
}

/// `map` plus uniform noise of the given amplitude.
pub fn jitter(rng: &mut ChaCha8Rng, map: &FeatureMap, amp: f32) -> FeatureMap {
    let data = map
        .data()
        .iter()
        .map(|v| v + rng.gen_range(-amp..amp))
        .collect();
    FeatureMap::new(map.height(), map.width(), map.channels(), data).unwrap()
}

/// One image with a feature map per layer, spatial size halving per layer.
pub fn random_image(
    rng: &mut ChaCha8Rng,
    id: &str,
    layers: &[(u32, usize, usize)],
    size: usize,
) -> ImageFeatures {
    let mut img = ImageFeatures::new(id);
    for (i, &(layer, c, _)) in layers.iter().enumerate() {
        let s = (size >> i).max(1);
        img = img.with_layer(layer, relu_map(rng, s, s, c));
    }
    img
}

pub fn unit(c: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; c];
    v[i] = 1.0;
    v
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .fold(0.0, f64::max)
}

/// Points around `clusters` random directions with angular noise, plus
/// `outliers` uniformly random directions. Non-negative, `c` channels.
pub fn blob_vectors(
    rng: &mut ChaCha8Rng,
    c: usize,
    clusters: &[usize],
    spread: f32,
    outliers: usize,
) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    for &size in clusters {
        let centre: Vec<f32> = (0..c).map(|_| rng.gen_range(0.0f32..1.0)).collect();
        for _ in 0..size {
            out.push(
                centre
                    .iter()
                    .map(|v| (v + rng.gen_range(-spread..spread)).max(0.0))
                    .collect(),
            );
        }
    }
    for _ in 0..outliers {
        out.push((0..c).map(|_| rng.gen_range(-1.0f32..1.0)).collect());
    }
    out
}
