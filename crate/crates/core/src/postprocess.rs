//! Detection scores and localization maps from aggregated anomaly maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::AnomalyMap;

/// Gaussian smoothing used for the image-level score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostConfig {
    /// Standard deviation in pixels.
    pub sigma: f64,
    /// Kernel radius in units of `sigma`.
    pub truncate: f64,
}

impl Default for PostConfig {
    fn default() -> Self {
        Self {
            sigma: 6.8,
            truncate: 4.0,
        }
    }
}

impl PostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma {} must be positive",
                self.sigma
            )));
        }
        if !(self.truncate >= 0.0 && self.truncate.is_finite()) {
            return Err(Error::Config(format!(
                "truncate {} must be non-negative",
                self.truncate
            )));
        }
        Ok(())
    }

    /// Normalized 1-D kernel of radius `round(truncate * sigma)`.
    pub fn kernel(&self) -> Vec<f64> {
        let radius = (self.truncate * self.sigma + 0.5) as i64;
        let s2 = self.sigma * self.sigma;
        let raw: Vec<f64> = (-radius..=radius)
            .map(|x| (-0.5 * (x * x) as f64 / s2).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

fn convolve_axis(src: &[f64], h: usize, w: usize, kernel: &[f64], along_x: bool) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wt) in kernel.iter().enumerate() {
                let off = k as i64 - r;
                let v = if along_x {
                    src[y * w + reflect(x as i64 + off, w)]
                } else {
                    src[reflect(y as i64 + off, h) * w + x]
                };
                acc += wt * v;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Separable Gaussian blur with reflect padding; output has the input's
/// shape and stays within the input's value range.
pub fn gaussian_blur(map: &AnomalyMap, cfg: &PostConfig) -> Result<AnomalyMap> {
    cfg.validate()?;
    let (h, w) = (map.height(), map.width());
    let kernel = cfg.kernel();
    let src: Vec<f64> = map.values().iter().map(|v| f64::from(*v)).collect();
    let rows = convolve_axis(&src, h, w, &kernel, true);
    let both = convolve_axis(&rows, h, w, &kernel, false);
    let (lo, hi) = (map.min(), map.max());
    AnomalyMap::new(
        h,
        w,
        both.into_iter().map(|v| (v as f32).clamp(lo, hi)).collect(),
    )
}

/// Image-level anomaly score: the maximum of the blurred map.
pub fn image_score(map: &AnomalyMap, cfg: &PostConfig) -> Result<f32> {
    Ok(gaussian_blur(map, cfg)?.max())
}

/// Min-max normalization to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize01(map: &AnomalyMap) -> AnomalyMap {
    let (lo, hi) = (map.min(), map.max());
    let values = if hi > lo {
        let span = f64::from(hi) - f64::from(lo);
        map.values()
            .iter()
            .map(|v| ((f64::from(*v) - f64::from(lo)) / span) as f32)
            .collect()
    } else {
        vec![0.0; map.values().len()]
    };
    AnomalyMap::new(map.height(), map.width(), values).expect("same shape, finite values")
}
