//! Patch-constrained template matching.
//!
//! Forward matching scores each query vector by its closest template vector
//! anywhere inside an `m x n` window of the bank (any sheet). Backward
//! matching asks the reverse question: does any query vector inside the
//! window reproduce the template content at the centre pixel? The first
//! catches content that never occurs in the bank; the second catches valid
//! content that shows up in the wrong place.
//!
//! Every search is exact. The inner loop ranks candidates with an `f32` dot
//! product scaled by a cached inverse norm, then recomputes the winning
//! pair's cosine in `f64`. The recompute makes a bitwise copy of a bank
//! vector score exactly zero.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{LayerId, TemplateBank};
use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

/// Window size for patch matching; both sides odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    /// Horizontal extent.
    pub m: usize,
    /// Vertical extent.
    pub n: usize,
}

impl PatchSpec {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 || m.is_multiple_of(2) || n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "patch sides must be odd and positive, got {m}x{n}"
            )));
        }
        Ok(Self { m, n })
    }

    /// A square `size x size` patch.
    pub fn square(size: usize) -> Result<Self> {
        Self::new(size, size)
    }

    pub fn half_width(&self) -> usize {
        self.m / 2
    }

    pub fn half_height(&self) -> usize {
        self.n / 2
    }
}

/// Scalar anomaly field.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl AnomalyMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidShape(format!(
                "anomaly map dims must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} map needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: values[index],
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.values
            .iter()
            .copied()
            .fold(f32::NEG_INFINITY, f32::max)
    }

    /// Single-channel tensor view, for writing as FTN.
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::new(self.height, self.width, 1, self.values.clone())
            .expect("anomaly map invariants imply a valid tensor")
    }

    pub fn from_feature_map(t: &FeatureMap) -> Result<Self> {
        if t.channels() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "anomaly maps are single-channel, got C={}",
                t.channels()
            )));
        }
        Self::new(t.height(), t.width(), t.data().to_vec())
    }
}

/// Matching parameters for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerMatch {
    pub layer_id: LayerId,
    pub patch: PatchSpec,
}

/// Layer selection, per-layer patches, the forward/backward mixing ratio and
/// the output resolution `(height, width)` for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub layers: Vec<LayerMatch>,
    pub alpha: f32,
    /// `None` means "use the query image resolution".
    pub output_resolution: Option<(usize, usize)>,
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("no layers selected".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if let Some((h, w)) = self.output_resolution {
            if h == 0 || w == 0 {
                return Err(Error::Config("output resolution must be positive".into()));
            }
        }
        for l in &self.layers {
            PatchSpec::new(l.patch.m, l.patch.n)?;
        }
        Ok(())
    }

    /// Checks that every selected layer exists in `bank`.
    pub fn validate_against(&self, bank: &TemplateBank) -> Result<()> {
        self.validate()?;
        for l in &self.layers {
            if bank.layer(l.layer_id).is_none() {
                return Err(Error::Config(format!(
                    "layer {} is not in the bank (bank layers: {:?})",
                    l.layer_id,
                    bank.layer_ids().collect::<Vec<_>>()
                )));
            }
        }
        Ok(())
    }
}

/// `1 - cos(u, v)` in `[0, 2]`. A zero-norm operand has similarity 0, so the
/// distance is 1.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> f32 {
    let uu = dot64(u, u);
    let vv = dot64(v, v);
    exact_distance(u, v, uu, vv)
}

#[inline]
fn exact_distance(u: &[f32], v: &[f32], uu: f64, vv: f64) -> f32 {
    if uu == 0.0 || vv == 0.0 {
        return 1.0;
    }
    let cos = dot64(u, v) / (uu * vv).sqrt();
    (1.0 - cos).clamp(0.0, 2.0) as f32
}

#[inline]
fn dot64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

/// Eight-lane `f32` dot product; the lane split is fixed so results do not
/// depend on scheduling.
#[inline]
fn dot32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Width of the band below the best `f32` score inside which candidates are
/// re-ranked in `f64`. Covers the accumulated rounding of `dot32` on
/// unit-scaled inputs with a wide margin.
fn tie_tolerance(channels: usize) -> f32 {
    (16.0 * (channels.max(1) as f32).sqrt() * f32::EPSILON).max(1e-6)
}

/// All in-bounds coordinates `(x', y')` with `|x' - x| <= m/2` and
/// `|y' - y| <= n/2`, row-major. Offsets that fall outside the grid are
/// dropped, not padded.
pub fn patch_indices(
    x: usize,
    y: usize,
    patch: PatchSpec,
    height: usize,
    width: usize,
) -> Vec<(usize, usize)> {
    let (xs, ys) = window(x, y, patch, height, width);
    ys.flat_map(|yy| xs.clone().map(move |xx| (xx, yy)))
        .collect()
}

#[inline]
fn window(
    x: usize,
    y: usize,
    patch: PatchSpec,
    height: usize,
    width: usize,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let (hw, hh) = (patch.half_width(), patch.half_height());
    (
        x.saturating_sub(hw)..(x + hw + 1).min(width),
        y.saturating_sub(hh)..(y + hh + 1).min(height),
    )
}

/// Cached norms of one feature map.
#[derive(Debug, Clone)]
struct Norms {
    /// Reciprocal L2 norm per pixel; 0 for zero vectors.
    inv: Vec<f32>,
    /// Squared L2 norm per pixel, accumulated in f64.
    sq: Vec<f64>,
}

impl Norms {
    fn of(map: &FeatureMap) -> Self {
        let c = map.channels();
        let sq: Vec<f64> = map.data().chunks_exact(c).map(|v| dot64(v, v)).collect();
        let inv = sq
            .iter()
            .map(|&s| {
                if s > 0.0 {
                    (1.0 / s.sqrt()) as f32
                } else {
                    0.0
                }
            })
            .collect();
        Self { inv, sq }
    }

    fn zero_count(&self) -> usize {
        self.sq.iter().filter(|s| **s == 0.0).count()
    }
}

/// A layer's sheets together with their cached norms. Build once per bank
/// layer and reuse across queries.
#[derive(Debug, Clone)]
pub struct LayerIndex<'a> {
    sheets: &'a [FeatureMap],
    norms: Vec<Norms>,
    shape: (usize, usize, usize),
}

impl<'a> LayerIndex<'a> {
    pub fn new(sheets: &'a [FeatureMap]) -> Result<Self> {
        let first = sheets
            .first()
            .ok_or_else(|| Error::Empty("layer has no sheets".into()))?;
        let shape = first.shape();
        if let Some(s) = sheets.iter().find(|s| s.shape() != shape) {
            return Err(Error::ShapeMismatch(format!(
                "sheet shapes differ: {:?} vs {shape:?}",
                s.shape()
            )));
        }
        Ok(Self {
            sheets,
            norms: sheets.par_iter().map(Norms::of).collect(),
            shape,
        })
    }

    pub fn sheet_count(&self) -> usize {
        self.sheets.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    /// Number of zero-norm template vectors across all sheets.
    pub fn zero_vectors(&self) -> usize {
        self.norms.iter().map(Norms::zero_count).sum()
    }

    fn check_query(&self, q: &FeatureMap) -> Result<()> {
        if q.shape() != self.shape {
            return Err(Error::ShapeMismatch(format!(
                "query is {:?}, templates are {:?}",
                q.shape(),
                self.shape
            )));
        }
        Ok(())
    }

    /// Forward direction: per pixel, the smallest distance from the query
    /// vector to any template vector in the patch window of any sheet.
    pub fn forward(&self, q: &FeatureMap, patch: PatchSpec) -> Result<AnomalyMap> {
        self.check_query(q)?;
        let qn = Norms::of(q);
        Ok(self.forward_with(q, &qn, patch))
    }

    fn forward_with(&self, q: &FeatureMap, qn: &Norms, patch: PatchSpec) -> AnomalyMap {
        let (h, w, c) = self.shape;
        let tol = tie_tolerance(c);
        let mut out = vec![0.0f32; h * w];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let mut scores = Vec::new();
            for (x, slot) in row.iter_mut().enumerate() {
                let qv = q.vector(x, y);
                let qsq = qn.sq[y * w + x];
                let band = tol * qsq.sqrt() as f32;
                let (xs, ys) = window(x, y, patch, h, w);
                scores.clear();
                let mut best = f32::NEG_INFINITY;
                for (s, sheet) in self.sheets.iter().enumerate() {
                    let inv = &self.norms[s].inv;
                    for yy in ys.clone() {
                        for xx in xs.clone() {
                            let idx = yy * w + xx;
                            let score = dot32(qv, sheet.vector(xx, yy)) * inv[idx];
                            best = best.max(score);
                            scores.push(score);
                        }
                    }
                }
                // Settle every near-tie of the f32 ranking exactly. Scores
                // here are scaled by the query norm, so the band is too.
                let per_sheet = xs.len() * ys.len();
                let mut exact = f32::INFINITY;
                for (i, &score) in scores.iter().enumerate() {
                    if score < best - band {
                        continue;
                    }
                    let (s, k) = (i / per_sheet, i % per_sheet);
                    let (xx, yy) = (xs.start + k % xs.len(), ys.start + k / xs.len());
                    let tv = self.sheets[s].vector(xx, yy);
                    exact = exact.min(exact_distance(qv, tv, qsq, self.norms[s].sq[yy * w + xx]));
                }
                *slot = exact;
            }
        });
        AnomalyMap {
            height: h,
            width: w,
            values: out,
        }
    }

    /// Backward direction: per pixel, the smallest distance between any
    /// query vector in the patch window and the template vectors at exactly
    /// that pixel.
    pub fn backward(&self, q: &FeatureMap, patch: PatchSpec) -> Result<AnomalyMap> {
        self.check_query(q)?;
        let qn = Norms::of(q);
        Ok(self.backward_with(q, &qn, patch))
    }

    fn backward_with(&self, q: &FeatureMap, qn: &Norms, patch: PatchSpec) -> AnomalyMap {
        let (h, w, c) = self.shape;
        let tol = tie_tolerance(c);
        let mut out = vec![0.0f32; h * w];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let mut scores = Vec::new();
            for (x, slot) in row.iter_mut().enumerate() {
                let centre = y * w + x;
                let (xs, ys) = window(x, y, patch, h, w);
                scores.clear();
                let mut best = f32::NEG_INFINITY;
                for (s, sheet) in self.sheets.iter().enumerate() {
                    let tv = sheet.vector(x, y);
                    let tinv = self.norms[s].inv[centre];
                    for yy in ys.clone() {
                        for xx in xs.clone() {
                            let idx = yy * w + xx;
                            let score = dot32(tv, q.vector(xx, yy)) * (tinv * qn.inv[idx]);
                            best = best.max(score);
                            scores.push(score);
                        }
                    }
                }
                let per_sheet = xs.len() * ys.len();
                let mut exact = f32::INFINITY;
                for (i, &score) in scores.iter().enumerate() {
                    if score < best - tol {
                        continue;
                    }
                    let (s, k) = (i / per_sheet, i % per_sheet);
                    let (xx, yy) = (xs.start + k % xs.len(), ys.start + k / xs.len());
                    let tv = self.sheets[s].vector(x, y);
                    let idx = yy * w + xx;
                    exact = exact.min(exact_distance(
                        tv,
                        q.vector(xx, yy),
                        self.norms[s].sq[centre],
                        qn.sq[idx],
                    ));
                }
                *slot = exact;
            }
        });
        AnomalyMap {
            height: h,
            width: w,
            values: out,
        }
    }

    /// `alpha * forward + (1 - alpha) * backward`. At the endpoints the
    /// unused direction is skipped and the other is returned unchanged.
    pub fn hetmm(&self, q: &FeatureMap, patch: PatchSpec, alpha: f32) -> Result<AnomalyMap> {
        Ok(self.hetmm_detailed(q, patch, alpha)?.mixed)
    }

    /// Like [`LayerIndex::hetmm`] but also returns both directional maps
    /// (when computed) and zero-vector diagnostics.
    pub fn hetmm_detailed(
        &self,
        q: &FeatureMap,
        patch: PatchSpec,
        alpha: f32,
    ) -> Result<LayerScore> {
        check_alpha(alpha)?;
        self.check_query(q)?;
        let qn = Norms::of(q);
        let forward = (alpha > 0.0).then(|| self.forward_with(q, &qn, patch));
        let backward = (alpha < 1.0).then(|| self.backward_with(q, &qn, patch));
        let mixed = match (&forward, &backward) {
            (Some(f), None) => f.clone(),
            (None, Some(b)) => b.clone(),
            (Some(f), Some(b)) => mix(f, b, alpha),
            (None, None) => unreachable!("alpha is either > 0 or < 1"),
        };
        Ok(LayerScore {
            mixed,
            forward,
            backward,
            zero_query_vectors: qn.zero_count(),
            zero_template_vectors: self.zero_vectors(),
        })
    }
}

/// Output of one layer's mutual matching.
#[derive(Debug, Clone)]
pub struct LayerScore {
    pub mixed: AnomalyMap,
    pub forward: Option<AnomalyMap>,
    pub backward: Option<AnomalyMap>,
    pub zero_query_vectors: usize,
    pub zero_template_vectors: usize,
}

fn check_alpha(alpha: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

fn mix(f: &AnomalyMap, b: &AnomalyMap, alpha: f32) -> AnomalyMap {
    let values = f
        .values
        .iter()
        .zip(&b.values)
        .map(|(fv, bv)| (alpha * fv + (1.0 - alpha) * bv).clamp(0.0, 2.0))
        .collect();
    AnomalyMap {
        height: f.height,
        width: f.width,
        values,
    }
}

/// Forward matching of `q` against `sheets`.
pub fn forward_hetm(q: &FeatureMap, sheets: &[FeatureMap], patch: PatchSpec) -> Result<AnomalyMap> {
    LayerIndex::new(sheets)?.forward(q, patch)
}

/// Backward matching of `q` against `sheets`.
pub fn backward_hetm(
    q: &FeatureMap,
    sheets: &[FeatureMap],
    patch: PatchSpec,
) -> Result<AnomalyMap> {
    LayerIndex::new(sheets)?.backward(q, patch)
}

/// Mutual matching: the `alpha`-weighted mixture of both directions.
pub fn hetmm_score(
    q: &FeatureMap,
    sheets: &[FeatureMap],
    patch: PatchSpec,
    alpha: f32,
) -> Result<AnomalyMap> {
    LayerIndex::new(sheets)?.hetmm(q, patch, alpha)
}

/// Bilinear resampling with half-pixel centres (corners not aligned).
pub fn rescale_bilinear(map: &AnomalyMap, height: usize, width: usize) -> Result<AnomalyMap> {
    if height == 0 || width == 0 {
        return Err(Error::Config("target resolution must be positive".into()));
    }
    if height == map.height && width == map.width {
        return Ok(map.clone());
    }
    let ys = axis_weights(map.height, height);
    let xs = axis_weights(map.width, width);
    let mut values = Vec::with_capacity(height * width);
    for &(y0, y1, ly) in &ys {
        for &(x0, x1, lx) in &xs {
            let top = lerp(map.get(x0, y0), map.get(x1, y0), lx);
            let bottom = lerp(map.get(x0, y1), map.get(x1, y1), lx);
            values.push(lerp(top, bottom, ly));
        }
    }
    AnomalyMap::new(height, width, values)
}

fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (pos - i0 as f64).clamp(0.0, 1.0) as f32)
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

/// Rescales every map to `resolution` and sums them pointwise, in order.
pub fn aggregate_layers(maps: &[AnomalyMap], resolution: (usize, usize)) -> Result<AnomalyMap> {
    let (h, w) = resolution;
    let mut iter = maps.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Empty("no layer maps to aggregate".into()))?;
    let mut acc = rescale_bilinear(first, h, w)?.values;
    for m in iter {
        let r = rescale_bilinear(m, h, w)?;
        for (a, v) in acc.iter_mut().zip(&r.values) {
            *a += v;
        }
    }
    AnomalyMap::new(h, w, acc)
}

/// Precomputed norms for every layer of a bank.
#[derive(Debug, Clone)]
pub struct BankIndex<'a> {
    layers: BTreeMap<LayerId, LayerIndex<'a>>,
}

impl<'a> BankIndex<'a> {
    pub fn new(bank: &'a TemplateBank) -> Result<Self> {
        let layers = bank
            .layers()
            .iter()
            .map(|(id, sheets)| Ok((*id, LayerIndex::new(sheets)?)))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn layer(&self, id: LayerId) -> Option<&LayerIndex<'a>> {
        self.layers.get(&id)
    }
}
