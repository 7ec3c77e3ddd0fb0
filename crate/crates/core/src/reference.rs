//! Brute-force reference implementations used to cross-check the engine.
//!
//! Nothing here shares code with the optimized paths: cosine similarity,
//! patch windows, selection sums and metric sweeps are all re-derived with
//! plain loops in `f64`. Single-threaded and slow on purpose.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evaluation::Mask;
use crate::matching::{AnomalyMap, PatchSpec};
use crate::tensor::FeatureMap;

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..a.len() {
        let (x, y) = (a[i] as f64, b[i] as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb).sqrt()
    }
}

fn at(m: &FeatureMap, x: i64, y: i64) -> &[f32] {
    m.vector(x as usize, y as usize)
}

fn in_bounds(m: &FeatureMap, x: i64, y: i64) -> bool {
    x >= 0 && y >= 0 && (x as usize) < m.width() && (y as usize) < m.height()
}

fn check(q: &FeatureMap, sheets: &[FeatureMap]) -> Result<()> {
    if sheets.is_empty() {
        return Err(Error::Empty("no sheets".into()));
    }
    for s in sheets {
        if s.shape() != q.shape() {
            return Err(Error::ShapeMismatch(
                "oracle: query/sheet shapes differ".into(),
            ));
        }
    }
    Ok(())
}

fn to_map(h: usize, w: usize, v: Vec<f64>) -> AnomalyMap {
    AnomalyMap::new(h, w, v.into_iter().map(|x| x as f32).collect()).unwrap()
}

/// Literal forward matching: min over sheets and window offsets of
/// `1 - cos(Q[x,y], T_s[x+a, y+b])`.
pub fn naive_forward(q: &FeatureMap, sheets: &[FeatureMap], p: PatchSpec) -> Result<AnomalyMap> {
    check(q, sheets)?;
    let (h, w) = (q.height(), q.width());
    let (ha, hb) = ((p.m / 2) as i64, (p.n / 2) as i64);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut best = f64::INFINITY;
            for s in sheets {
                for b in -hb..=hb {
                    for a in -ha..=ha {
                        if !in_bounds(q, x + a, y + b) {
                            continue;
                        }
                        let d = 1.0 - cos(at(q, x, y), at(s, x + a, y + b));
                        best = best.min(d);
                    }
                }
            }
            out.push(best.clamp(0.0, 2.0));
        }
    }
    Ok(to_map(h, w, out))
}

/// Literal backward matching: min over query window vectors of
/// `1 - max over sheets of cos(T_s[x,y], Q[x+a, y+b])`.
pub fn naive_backward(q: &FeatureMap, sheets: &[FeatureMap], p: PatchSpec) -> Result<AnomalyMap> {
    check(q, sheets)?;
    let (h, w) = (q.height(), q.width());
    let (ha, hb) = ((p.m / 2) as i64, (p.n / 2) as i64);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut best = f64::INFINITY;
            for b in -hb..=hb {
                for a in -ha..=ha {
                    if !in_bounds(q, x + a, y + b) {
                        continue;
                    }
                    let pv = at(q, x + a, y + b);
                    let sup = sheets
                        .iter()
                        .map(|s| cos(at(s, x, y), pv))
                        .fold(f64::NEG_INFINITY, f64::max);
                    best = best.min(1.0 - sup);
                }
            }
            out.push(best.clamp(0.0, 2.0));
        }
    }
    Ok(to_map(h, w, out))
}

/// `alpha * naive_forward + (1 - alpha) * naive_backward`.
pub fn naive_hetmm(
    q: &FeatureMap,
    sheets: &[FeatureMap],
    p: PatchSpec,
    alpha: f64,
) -> Result<AnomalyMap> {
    let f = naive_forward(q, sheets, p)?;
    let b = naive_backward(q, sheets, p)?;
    let v = f
        .values()
        .iter()
        .zip(b.values())
        .map(|(f, b)| alpha * *f as f64 + (1.0 - alpha) * *b as f64)
        .collect();
    Ok(to_map(q.height(), q.width(), v))
}

/// Pixel-level baseline: min over sheets of the distance at the same pixel.
pub fn naive_pixel_match(q: &FeatureMap, sheets: &[FeatureMap]) -> Result<AnomalyMap> {
    check(q, sheets)?;
    let (h, w) = (q.height(), q.width());
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let best = sheets
                .iter()
                .map(|s| 1.0 - cos(q.vector(x, y), s.vector(x, y)))
                .fold(f64::INFINITY, f64::min);
            out.push(best.clamp(0.0, 2.0));
        }
    }
    Ok(to_map(h, w, out))
}

fn mean_patch(m: &FeatureMap, x: i64, y: i64, p: PatchSpec) -> Vec<f32> {
    let (ha, hb) = ((p.m / 2) as i64, (p.n / 2) as i64);
    let mut acc = vec![0.0f64; m.channels()];
    let mut count = 0.0;
    for b in -hb..=hb {
        for a in -ha..=ha {
            if in_bounds(m, x + a, y + b) {
                for (s, v) in acc.iter_mut().zip(at(m, x + a, y + b)) {
                    *s += *v as f64;
                }
                count += 1.0;
            }
        }
    }
    acc.into_iter().map(|s| (s / count) as f32).collect()
}

/// Patch-level baseline: distance between the mean-pooled query window and
/// each sheet's mean-pooled window at the same place, min over sheets.
pub fn naive_patch_match(
    q: &FeatureMap,
    sheets: &[FeatureMap],
    p: PatchSpec,
) -> Result<AnomalyMap> {
    check(q, sheets)?;
    let (h, w) = (q.height(), q.width());
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let qm = mean_patch(q, x, y, p);
            let best = sheets
                .iter()
                .map(|s| 1.0 - cos(&qm, &mean_patch(s, x, y, p)))
                .fold(f64::INFINITY, f64::min);
            out.push(best.clamp(0.0, 2.0));
        }
    }
    Ok(to_map(h, w, out))
}

/// Replays the selection loop from scratch at every step, given the dense
/// regions found by the clustering step. Returns selected indices in order.
pub fn naive_pts(vectors: &[&[f32]], k: usize, regions: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("K = {k} with N = {n}")));
    }
    let centre = |members: &[usize]| {
        let mut best = members[0];
        let mut best_sum = f64::NEG_INFINITY;
        for &a in members {
            let mut sum = 0.0;
            for &b in members {
                sum += cos(vectors[a], vectors[b]);
            }
            if sum > best_sum {
                best_sum = sum;
                best = a;
            }
        }
        best
    };

    let mut selected = Vec::new();
    if regions.is_empty() {
        selected.push(centre(&(0..n).collect::<Vec<_>>()));
    } else {
        // Rank regions by size, earlier label first on ties; keep K.
        let mut ranked: Vec<usize> = (0..regions.len()).collect();
        for i in 1..ranked.len() {
            let mut j = i;
            while j > 0 && regions[ranked[j]].len() > regions[ranked[j - 1]].len() {
                ranked.swap(j, j - 1);
                j -= 1;
            }
        }
        let mut kept: Vec<usize> = ranked.into_iter().take(k).collect();
        kept.sort();
        for r in kept {
            selected.push(centre(&regions[r]));
        }
    }
    while selected.len() < k {
        let mut best = None;
        let mut best_sum = f64::NEG_INFINITY;
        for w in 0..n {
            if selected.contains(&w) {
                continue;
            }
            let mut sum = 0.0;
            for &t in &selected {
                sum += 1.0 - cos(vectors[w], vectors[t]);
            }
            if sum > best_sum {
                best_sum = sum;
                best = Some(w);
            }
        }
        selected.push(best.ok_or(Error::SelectionExhausted)?);
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// K distinct members drawn uniformly.
    Random,
    /// K Lloyd centroids (Euclidean, random-member initialization).
    KMeans,
}

/// Alternative compressions used as comparison points for the selection.
pub fn naive_selection_baselines(
    vectors: &[&[f32]],
    k: usize,
    kind: BaselineKind,
    seed: u64,
) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = vectors.len();
    let k = k.min(n);
    let init: Vec<Vec<f32>> = sample(&mut rng, n, k)
        .into_iter()
        .map(|i| vectors[i].to_vec())
        .collect();
    match kind {
        BaselineKind::Random => init,
        BaselineKind::KMeans => {
            let c = vectors[0].len();
            let mut centroids = init;
            for _ in 0..50 {
                let assign: Vec<usize> = vectors
                    .iter()
                    .map(|v| {
                        (0..k)
                            .min_by(|&a, &b| {
                                sq_dist(v, &centroids[a]).total_cmp(&sq_dist(v, &centroids[b]))
                            })
                            .unwrap()
                    })
                    .collect();
                let mut next = vec![vec![0.0f64; c]; k];
                let mut counts = vec![0usize; k];
                for (v, &a) in vectors.iter().zip(&assign) {
                    counts[a] += 1;
                    for (s, x) in next[a].iter_mut().zip(v.iter()) {
                        *s += *x as f64;
                    }
                }
                let mut moved = false;
                for j in 0..k {
                    let nc: Vec<f32> = if counts[j] == 0 {
                        vectors[rng.gen_range(0..n)].to_vec()
                    } else {
                        next[j]
                            .iter()
                            .map(|s| (s / counts[j] as f64) as f32)
                            .collect()
                    };
                    moved |= nc != centroids[j];
                    centroids[j] = nc;
                }
                if !moved {
                    break;
                }
            }
            centroids
        }
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum()
}

/// Worst-case coverage: max over `original` of the cosine distance to the
/// nearest member of `selected`.
pub fn worst_coverage(original: &[&[f32]], selected: &[&[f32]]) -> f64 {
    original
        .iter()
        .map(|o| {
            selected
                .iter()
                .map(|s| 1.0 - cos(o, s))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// AUROC by counting every (positive, negative) pair.
pub fn naive_auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        return Err(Error::Metric("need both classes".into()));
    }
    Ok(wins / pairs)
}

/// 8-connected components by repeated label propagation.
pub fn components8(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    // Label propagation until fixpoint; 8-neighbourhood.
    let (h, w) = (mask.height(), mask.width());
    let mut label: Vec<Option<usize>> = (0..h * w).map(|i| mask.data()[i].then_some(i)).collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let Some(mut l) = label[y * w + x] else {
                    continue;
                };
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        if let Some(o) = label[ny as usize * w + nx as usize] {
                            if o < l {
                                l = o;
                                changed = true;
                            }
                        }
                    }
                }
                label[y * w + x] = Some(l);
            }
        }
        if !changed {
            break;
        }
    }
    let mut ids: Vec<usize> = label.iter().flatten().copied().collect();
    ids.sort_unstable();
    ids.dedup();
    ids.iter()
        .map(|id| {
            (0..h * w)
                .filter(|i| label[*i] == Some(*id))
                .map(|i| (i % w, i / w))
                .collect()
        })
        .collect()
}

/// PRO integral with a threshold at every distinct score (prediction is
/// `score >= t`), trapezoid up to `cap`, divided by `cap`.
pub fn naive_pro(pixels: &[(AnomalyMap, Mask)], cap: f64) -> Result<f64> {
    let mut thresholds: Vec<f32> = pixels
        .iter()
        .flat_map(|(m, _)| m.values().to_vec())
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let comps: Vec<Vec<Vec<(usize, usize)>>> = pixels.iter().map(|(_, m)| components8(m)).collect();
    let n_comp: usize = comps.iter().map(Vec::len).sum();
    let negatives: usize = pixels
        .iter()
        .map(|(_, m)| m.data().iter().filter(|v| !**v).count())
        .sum();
    if n_comp == 0 || negatives == 0 {
        return Err(Error::Metric("need anomalous and normal pixels".into()));
    }
    let mut pts = vec![(0.0f64, 0.0f64)];
    for &t in &thresholds {
        let mut fp = 0usize;
        let mut overlap = 0.0f64;
        for ((map, mask), cs) in pixels.iter().zip(&comps) {
            for (v, m) in map.values().iter().zip(mask.data()) {
                if !*m && *v >= t {
                    fp += 1;
                }
            }
            for c in cs {
                let hit = c.iter().filter(|&&(x, y)| map.get(x, y) >= t).count();
                overlap += hit as f64 / c.len() as f64;
            }
        }
        pts.push((fp as f64 / negatives as f64, overlap / n_comp as f64));
    }
    let mut area = 0.0;
    for p in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (p[0], p[1]);
        if x0 >= cap {
            break;
        }
        if x1 <= cap {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let yc = y0 + (y1 - y0) * (cap - x0) / (x1 - x0);
            area += (cap - x0) * (y0 + yc) / 2.0;
        }
    }
    Ok(area / cap)
}
