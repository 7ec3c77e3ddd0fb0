//! Detection and localization metrics: image/pixel AUROC, the per-region
//! overlap (PRO) curve and its normalized integral up to an FPR cap, and
//! ROC / PRO / IoU / PR curve points.
//!
//! Threshold sweeps use a fixed grid of `steps` thresholds taken from the
//! quantiles of the normal-pixel scores, so grid point `j` sits at a false
//! positive rate of about `j / (steps - 1)`. A pixel is predicted anomalous
//! when its score is strictly above the threshold; grid point 0 uses the
//! largest normal score and therefore always has FPR = 0.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::AnomalyMap;

pub const DEFAULT_STEPS: usize = 500;
pub const DEFAULT_FPR_CAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

/// Binary ground-truth mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height * width != data.len() || height == 0 || width == 0 {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} mask with {} pixels",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    /// Decodes a single-channel map whose values are exactly 0 or 1.
    pub fn from_map(map: &AnomalyMap) -> Result<Self> {
        let data = map
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| match *v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(Error::InvalidShape(format!(
                    "mask value {other} at flat index {i} is not 0 or 1"
                ))),
            })
            .collect::<Result<_>>()?;
        Self::new(map.height(), map.width(), data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|v| *v)
    }
}

/// Scores paired with ground truth for one evaluation run.
#[derive(Debug, Clone, Default)]
pub struct EvalRecord {
    pub image_scores: Vec<(f64, Label)>,
    pub pixels: Vec<(AnomalyMap, Mask)>,
}

/// Area under the ROC curve as the Mann-Whitney statistic:
/// `P(pos > neg) + P(pos == neg) / 2`, with exact tie handling.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUROC needs both classes".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Metric(format!(
            "score {} at {i} is not finite",
            scores[i]
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|k| labels[**k]).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// 8-connected components of the set pixels, in raster order of each
/// component's first pixel. Pixels are `(x, y)`.
pub fn connected_components(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            comp.push((x, y));
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask.data[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        comp.sort_by_key(|&(x, y)| (y, x));
        out.push(comp);
    }
    out
}

/// A PRO curve and its normalized integral over `[0, cap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProCurve {
    /// `(fpr, pro)`, FPR nondecreasing.
    pub points: Vec<(f64, f64)>,
    pub cap: f64,
    pub integral: f64,
    /// Set when every pooled score is identical.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pro,
    Iou,
    Pr,
}

/// Per-threshold counts over a fixed grid.
#[derive(Debug, Clone)]
struct Sweep {
    /// Target FPR of each grid point, `j / (steps - 1)`.
    quantiles: Vec<f64>,
    fpr: Vec<f64>,
    tpr: Vec<f64>,
    pro: Vec<f64>,
    precision: Vec<f64>,
    iou: Vec<f64>,
    degenerate: bool,
}

/// Number of entries of ascending `sorted` strictly greater than `t`.
#[inline]
fn count_above(sorted: &[f32], t: f32) -> usize {
    sorted.len() - sorted.partition_point(|v| *v <= t)
}

fn sweep(pixels: &[(AnomalyMap, Mask)], steps: usize) -> Result<Sweep> {
    if steps < 2 {
        return Err(Error::Config(
            "threshold grid needs at least 2 steps".into(),
        ));
    }
    let mut normal = Vec::new();
    let mut anomalous = Vec::new();
    let mut components: Vec<Vec<f32>> = Vec::new();
    // Per anomalous image: all scores sorted, anomalous scores sorted.
    let mut images: Vec<(Vec<f32>, Vec<f32>)> = Vec::new();
    for (map, mask) in pixels {
        if map.height() != mask.height || map.width() != mask.width {
            return Err(Error::ShapeMismatch(format!(
                "map {}x{} vs mask {}x{}",
                map.height(),
                map.width(),
                mask.height,
                mask.width
            )));
        }
        let vals = map.values();
        let mut img_anom = Vec::new();
        for (v, m) in vals.iter().zip(&mask.data) {
            if *m {
                anomalous.push(*v);
                img_anom.push(*v);
            } else {
                normal.push(*v);
            }
        }
        if !img_anom.is_empty() {
            for comp in connected_components(mask) {
                let mut s: Vec<f32> = comp.iter().map(|&(x, y)| map.get(x, y)).collect();
                s.sort_by(f32::total_cmp);
                components.push(s);
            }
            let mut all = vals.to_vec();
            all.sort_by(f32::total_cmp);
            img_anom.sort_by(f32::total_cmp);
            images.push((all, img_anom));
        }
    }
    if anomalous.is_empty() {
        return Err(Error::Metric(
            "no anomalous pixels in the ground truth".into(),
        ));
    }
    if normal.is_empty() {
        return Err(Error::Metric("no normal pixels in the ground truth".into()));
    }
    normal.sort_by(f32::total_cmp);
    anomalous.sort_by(f32::total_cmp);
    let degenerate = normal[0] == normal[normal.len() - 1]
        && anomalous[0] == anomalous[anomalous.len() - 1]
        && normal[0] == anomalous[0];

    let m = normal.len();
    let mut out = Sweep {
        quantiles: Vec::with_capacity(steps),
        fpr: Vec::with_capacity(steps),
        tpr: Vec::with_capacity(steps),
        pro: Vec::with_capacity(steps),
        precision: Vec::with_capacity(steps),
        iou: Vec::with_capacity(steps),
        degenerate,
    };
    for j in 0..steps {
        let q = j as f64 / (steps - 1) as f64;
        let k = ((q * m as f64).round() as usize).min(m);
        let t = if k == m {
            f32::NEG_INFINITY
        } else {
            normal[m - 1 - k]
        };
        let fp = count_above(&normal, t);
        let tp = count_above(&anomalous, t);
        let overlap: f64 = components
            .iter()
            .map(|c| count_above(c, t) as f64 / c.len() as f64)
            .sum();
        let iou: f64 = images
            .iter()
            .map(|(all, anom)| {
                let inter = count_above(anom, t);
                let union = count_above(all, t) + anom.len() - inter;
                inter as f64 / union as f64
            })
            .sum::<f64>()
            / images.len() as f64;
        out.quantiles.push(q);
        out.fpr.push(fp as f64 / m as f64);
        out.tpr.push(tp as f64 / anomalous.len() as f64);
        out.pro.push(overlap / components.len() as f64);
        out.precision.push(if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        });
        out.iou.push(iou);
    }
    Ok(out)
}

/// Trapezoidal area under `(x, y)` from `x = 0` to `x = cap`, with linear
/// interpolation at the cap. Points must be sorted by `x` and start at 0.
fn area_to_cap(points: &[(f64, f64)], cap: f64) -> f64 {
    let mut area = 0.0;
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if x0 >= cap {
            break;
        }
        if x1 <= cap {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y_cap = y0 + (y1 - y0) * (cap - x0) / (x1 - x0);
            area += (cap - x0) * (y0 + y_cap) / 2.0;
        }
    }
    area
}

/// PRO curve over the quantile grid and its integral up to `cap`, divided
/// by `cap`. When all scores are identical the only meaningful prediction
/// is "everything anomalous"; that single point is returned with
/// integral 1 and `degenerate` set.
pub fn pro(pixels: &[(AnomalyMap, Mask)], cap: f64, steps: usize) -> Result<ProCurve> {
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(Error::Config(format!("FPR cap {cap} outside (0, 1]")));
    }
    let s = sweep(pixels, steps)?;
    if s.degenerate {
        return Ok(ProCurve {
            points: vec![(1.0, 1.0)],
            cap,
            integral: 1.0,
            degenerate: true,
        });
    }
    let points: Vec<(f64, f64)> = s.fpr.iter().copied().zip(s.pro.iter().copied()).collect();
    // Integrate the shortfall 1 - PRO so a curve pinned at 1 gives exactly 1.
    let shortfall: Vec<(f64, f64)> = points.iter().map(|&(f, p)| (f, 1.0 - p)).collect();
    let integral = (1.0 - area_to_cap(&shortfall, cap) / cap).clamp(0.0, 1.0);
    Ok(ProCurve {
        points,
        cap,
        integral,
        degenerate: false,
    })
}

/// Threshold-swept curve points on the same grid as [`pro`]:
/// ROC = `(fpr, tpr)` starting at the origin, PRO = `(fpr, pro)`,
/// PR = `(recall, precision)`, IoU = `(grid quantile, mean IoU over the
/// images containing anomalies)`.
pub fn curve_points(
    pixels: &[(AnomalyMap, Mask)],
    kind: CurveKind,
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    let s = sweep(pixels, steps)?;
    let pts = match kind {
        CurveKind::Roc => std::iter::once((0.0, 0.0))
            .chain(s.fpr.iter().copied().zip(s.tpr.iter().copied()))
            .collect(),
        CurveKind::Pro => s.fpr.iter().copied().zip(s.pro.iter().copied()).collect(),
        CurveKind::Pr => s
            .tpr
            .iter()
            .copied()
            .zip(s.precision.iter().copied())
            .collect(),
        CurveKind::Iou => s
            .quantiles
            .iter()
            .copied()
            .zip(s.iou.iter().copied())
            .collect(),
    };
    Ok(pts)
}

/// Area under a polyline sorted by `x` (trapezoid rule).
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|p| (p[1].0 - p[0].0) * (p[0].1 + p[1].1) / 2.0)
        .sum()
}

/// Pixel-level AUROC over every pixel of every map.
pub fn pixel_auroc(pixels: &[(AnomalyMap, Mask)]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (map, mask) in pixels {
        if map.values().len() != mask.data.len() {
            return Err(Error::ShapeMismatch("map and mask sizes differ".into()));
        }
        scores.extend(map.values().iter().map(|v| f64::from(*v)));
        labels.extend_from_slice(&mask.data);
    }
    auroc(&scores, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub roc: Vec<(f64, f64)>,
    pub pro: Vec<(f64, f64)>,
    pub iou: Vec<(f64, f64)>,
    pub pr: Vec<(f64, f64)>,
}

/// Everything `evaluate` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auroc_image: f64,
    pub auroc_pixel: f64,
    pub pro: f64,
    pub pro_degenerate: bool,
    pub curves: Curves,
}

/// Image AUROC, pixel AUROC, PRO integral and all four curves.
pub fn evaluate(record: &EvalRecord, cap: f64, steps: usize) -> Result<Metrics> {
    let (scores, labels): (Vec<f64>, Vec<bool>) = record
        .image_scores
        .iter()
        .map(|(s, l)| (*s, *l == Label::Anomalous))
        .unzip();
    let pro_curve = pro(&record.pixels, cap, steps)?;
    Ok(Metrics {
        auroc_image: auroc(&scores, &labels)?,
        auroc_pixel: pixel_auroc(&record.pixels)?,
        pro: pro_curve.integral,
        pro_degenerate: pro_curve.degenerate,
        curves: Curves {
            roc: curve_points(&record.pixels, CurveKind::Roc, steps)?,
            pro: pro_curve.points,
            iou: curve_points(&record.pixels, CurveKind::Iou, steps)?,
            pr: curve_points(&record.pixels, CurveKind::Pr, steps)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(h: usize, w: usize, set: &[(usize, usize)]) -> Mask {
        let mut d = vec![false; h * w];
        for &(x, y) in set {
            d[y * w + x] = true;
        }
        Mask::new(h, w, d).unwrap()
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(
            auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(
            auroc(&[0.8, 0.9, 0.1, 0.2], &[false, false, true, true]).unwrap(),
            0.0
        );
        assert_eq!(
            auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
            0.75
        );
        assert_eq!(auroc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn components_examples() {
        let block: Vec<_> = (2..5).flat_map(|x| (1..4).map(move |y| (x, y))).collect();
        let cc = connected_components(&mask(6, 6, &block));
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].len(), 9);

        let diag = connected_components(&mask(4, 4, &[(1, 1), (2, 2)]));
        assert_eq!(diag.len(), 1);

        let anti = connected_components(&mask(2, 2, &[(1, 0), (0, 1)]));
        assert_eq!(anti.len(), 1);

        assert!(connected_components(&Mask::empty(3, 3).unwrap()).is_empty());

        let two = connected_components(&mask(3, 5, &[(4, 0), (0, 2), (1, 2)]));
        assert_eq!(two, vec![vec![(4, 0)], vec![(0, 2), (1, 2)]]);
    }

    #[test]
    fn mask_from_map_rejects_non_binary() {
        let m = AnomalyMap::new(1, 3, vec![0.0, 1.0, 0.5]).unwrap();
        assert!(Mask::from_map(&m).is_err());
        let ok = AnomalyMap::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(Mask::from_map(&ok).unwrap().data(), &[false, true]);
    }

    fn perfect_fixture() -> Vec<(AnomalyMap, Mask)> {
        let set = [(1, 1), (2, 1), (1, 2), (6, 6)];
        let m = mask(8, 8, &set);
        let vals = (0..64)
            .map(|i| {
                if m.data()[i] {
                    0.9 + i as f32 * 1e-3
                } else {
                    i as f32 / 200.0
                }
            })
            .collect();
        let normal_map =
            AnomalyMap::new(8, 8, (0..64).map(|i| i as f32 / 300.0).collect()).unwrap();
        vec![
            (AnomalyMap::new(8, 8, vals).unwrap(), m),
            (normal_map, Mask::empty(8, 8).unwrap()),
        ]
    }

    #[test]
    fn perfect_predictor_pro_is_one() {
        let px = perfect_fixture();
        let p = pro(&px, 0.3, 500).unwrap();
        assert_eq!(p.integral, 1.0);
        assert!(!p.degenerate);
        assert_eq!(pixel_auroc(&px).unwrap(), 1.0);
        let roc = curve_points(&px, CurveKind::Roc, 50).unwrap();
        assert!(roc.contains(&(0.0, 1.0)));
    }

    #[test]
    fn constant_scores_are_degenerate() {
        let m = mask(4, 4, &[(0, 0)]);
        let px = vec![(AnomalyMap::filled(4, 4, 0.2).unwrap(), m)];
        let p = pro(&px, 0.3, 500).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.integral, 1.0);
    }

    #[test]
    fn no_anomalies_is_an_error() {
        let px = vec![(
            AnomalyMap::filled(4, 4, 0.2).unwrap(),
            Mask::empty(4, 4).unwrap(),
        )];
        assert!(matches!(pro(&px, 0.3, 500), Err(Error::Metric(_))));
    }

    #[test]
    fn pr_all_positive_point_is_base_rate() {
        let px = perfect_fixture();
        let pr = curve_points(&px, CurveKind::Pr, 20).unwrap();
        let (recall, precision) = *pr.last().unwrap();
        assert_eq!(recall, 1.0);
        assert!((precision - 4.0 / 128.0).abs() < 1e-12);
    }

    #[test]
    fn iou_of_perfect_threshold_is_one() {
        let px = perfect_fixture();
        let iou = curve_points(&px, CurveKind::Iou, 20).unwrap();
        assert_eq!(iou[0], (0.0, 1.0));
        assert!(iou.iter().all(|(_, v)| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn area_to_cap_interpolates() {
        let pts = [(0.0, 0.0), (1.0, 1.0)];
        assert!((area_to_cap(&pts, 0.3) - 0.045).abs() < 1e-15);
        assert_eq!(trapezoid(&pts), 0.5);
    }

    proptest! {
        #[test]
        fn auroc_invariant_under_monotone_maps(
            scores in proptest::collection::vec(-5.0f64..5.0, 4..60),
            flips in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let labels: Vec<bool> = (0..scores.len()).map(|i| flips[i]).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let a = auroc(&scores, &labels).unwrap();
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert!((auroc(&warped, &labels).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn components_partition_the_mask(bits in proptest::collection::vec(any::<bool>(), 49)) {
            let m = Mask::new(7, 7, bits.clone()).unwrap();
            let cc = connected_components(&m);
            let mut all: Vec<(usize, usize)> = cc.iter().flatten().copied().collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), total);
            prop_assert_eq!(total, bits.iter().filter(|b| **b).count());
            for &(x, y) in &all {
                prop_assert!(m.get(x, y));
            }
        }
    }
}
