#![allow(dead_code)]

use std::path::PathBuf;

use hetmm::{FeatureMap, ImageFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Output directory: first CLI argument, else a fresh temp dir that is
/// kept on disk so the files can be inspected.
pub fn out_dir(name: &str) -> PathBuf {
    match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => tempfile::Builder::new()
            .prefix(&format!("hetmm-{name}-"))
            .tempdir()
            .expect("temp dir")
            .keep(),
    }
}

/// A 16-motif periodic texture standing in for backbone features of a
/// nominal product image: layer 1 at 16x16, layer 2 at 8x8, 8 channels.
pub struct Texture {
    motif: Vec<Vec<f32>>,
}

impl Texture {
    pub fn new(seed: u64) -> Self {
        let mut r = rng(seed);
        let motif = (0..16)
            .map(|_| (0..8).map(|_| r.gen_range(0.0..1.0)).collect())
            .collect();
        Self { motif }
    }

    pub fn image(&self, r: &mut ChaCha8Rng, id: &str) -> ImageFeatures {
        let mut layer = |size: usize, stride: usize| {
            FeatureMap::from_fn(size, size, 8, |x, y| {
                self.motif[(stride * x) % 4 + 4 * ((stride * y) % 4)]
                    .iter()
                    .map(|v| v + r.gen_range(0.0..0.05))
                    .collect()
            })
            .unwrap()
        };
        let l1 = layer(16, 1);
        let l2 = layer(8, 2);
        ImageFeatures::new(id).with_layer(1, l1).with_layer(2, l2)
    }

    /// Nominal image with a square of foreign vectors at layer-1 pixel
    /// `(x, y)`, `size` wide; layer 2 gets the matching half-size square.
    pub fn defect(
        &self,
        r: &mut ChaCha8Rng,
        id: &str,
        x: usize,
        y: usize,
        size: usize,
    ) -> ImageFeatures {
        let mut img = self.image(r, id);
        let odd: Vec<f32> = (0..8).map(|c| if c % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let l1 = img.layers.get_mut(&1).unwrap();
        for yy in y..y + size {
            for xx in x..x + size {
                l1.set_vector(xx, yy, &odd).unwrap();
            }
        }
        let l2 = img.layers.get_mut(&2).unwrap();
        for yy in y / 2..(y + size).div_ceil(2) {
            for xx in x / 2..(x + size).div_ceil(2) {
                l2.set_vector(xx, yy, &odd).unwrap();
            }
        }
        img
    }
}

/// Coarse text rendering of a map, one character per pixel.
pub fn ascii(map: &hetmm::AnomalyMap) -> String {
    const RAMP: &[u8] = b" .:-=+*#%@";
    let hi = map.max().max(1e-6);
    let mut s = String::new();
    for y in 0..map.height() {
        for x in 0..map.width() {
            let i = ((map.get(x, y) / hi) * (RAMP.len() - 1) as f32).round() as usize;
            s.push(RAMP[i.min(RAMP.len() - 1)] as char);
        }
        s.push('\n');
    }
    s
}
