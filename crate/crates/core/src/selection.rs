//! Pixel-level template selection: compresses an N-sheet bank into K
//! sheets by choosing, independently at every pixel, K of the N bank
//! vectors.
//!
//! Per pixel the selection starts from the centres of the dense regions
//! found by OPTICS (or from the global centre when there are none) and then
//! greedily adds the vector farthest, in summed cosine distance, from
//! everything chosen so far. Selected vectors are always exact members of
//! the original set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{LayerId, PtsParams, TemplateBank};
use crate::error::{Error, Result};
use crate::optics::{density_regions, DistanceMatrix};
use crate::tensor::FeatureMap;

/// Target sheet count and OPTICS parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtsConfig {
    pub k: usize,
    pub min_samples: usize,
    pub xi: f64,
}

impl PtsConfig {
    /// `K` sheets with the default OPTICS parameters (`min_samples = 5`,
    /// `xi = 0.05`).
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            min_samples: 5,
            xi: 0.05,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.k > n {
            return Err(Error::Config(format!(
                "K = {} exceeds the {n} available sheets",
                self.k
            )));
        }
        if self.min_samples < 2 {
            return Err(Error::Config("min_samples must be at least 2".into()));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::Config(format!("xi {} outside (0, 1)", self.xi)));
        }
        Ok(())
    }
}

impl From<PtsConfig> for PtsParams {
    fn from(c: PtsConfig) -> Self {
        PtsParams {
            k: c.k,
            min_samples: c.min_samples,
            xi: c.xi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrototypeKind {
    /// Centre of an OPTICS region.
    Easy,
    /// Centre of the whole set, used when OPTICS finds no region.
    Global,
    /// Greedy farthest pick.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prototype {
    /// Index into the original set (sheet index of the source bank).
    pub source: usize,
    pub kind: PrototypeKind,
}

/// Prototypes chosen at one pixel, in selection order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelPrototypeSet {
    pub prototypes: Vec<Prototype>,
}

impl PixelPrototypeSet {
    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn sources(&self) -> Vec<usize> {
        self.prototypes.iter().map(|p| p.source).collect()
    }

    /// The selected vectors, borrowed from the original set.
    pub fn vectors<'a>(&self, original: &[&'a [f32]]) -> Vec<&'a [f32]> {
        self.prototypes.iter().map(|p| original[p.source]).collect()
    }
}

fn norm_sq(v: &[f32]) -> f64 {
    v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum()
}

/// Pairwise cosine similarities; zero vectors have similarity 0 with
/// everything, themselves included.
#[derive(Debug, Clone)]
struct Similarity {
    n: usize,
    s: Vec<f64>,
}

impl Similarity {
    fn of(vectors: &[&[f32]]) -> Self {
        let n = vectors.len();
        let norms: Vec<f64> = vectors.iter().map(|v| norm_sq(v)).collect();
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = if norms[i] == 0.0 || norms[j] == 0.0 {
                    0.0
                } else {
                    let dot: f64 = vectors[i]
                        .iter()
                        .zip(vectors[j])
                        .map(|(a, b)| f64::from(*a) * f64::from(*b))
                        .sum();
                    dot / (norms[i] * norms[j]).sqrt()
                };
                s[i * n + j] = v;
                s[j * n + i] = v;
            }
        }
        Self { n, s }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.n + j]
    }

    fn distances(&self) -> DistanceMatrix {
        DistanceMatrix::from_fn(self.n, |i, j| (1.0 - self.get(i, j)).clamp(0.0, 2.0))
    }

    /// Member of `members` with the largest summed similarity to all of
    /// `members`; lowest position wins ties.
    fn centre(&self, members: &[usize]) -> usize {
        let mut best = members[0];
        let mut best_sum = f64::NEG_INFINITY;
        for &w in members {
            let sum: f64 = members.iter().map(|&u| self.get(w, u)).sum();
            if sum > best_sum {
                best_sum = sum;
                best = w;
            }
        }
        best
    }
}

/// OPTICS regions of `vectors` under cosine distance.
pub fn optics_cluster(vectors: &[&[f32]], cfg: &PtsConfig) -> Vec<Vec<usize>> {
    if vectors.len() < cfg.min_samples {
        return Vec::new();
    }
    density_regions(
        &Similarity::of(vectors).distances(),
        cfg.min_samples,
        cfg.xi,
    )
}

/// Index (into `vectors`) of the member with the largest summed cosine
/// similarity to the others. Panics on an empty slice.
pub fn region_centre(vectors: &[&[f32]]) -> usize {
    assert!(!vectors.is_empty(), "region must be non-empty");
    let sim = Similarity::of(vectors);
    sim.centre(&(0..vectors.len()).collect::<Vec<_>>())
}

/// Centre of the whole set; same rule as [`region_centre`].
pub fn global_centre(vectors: &[&[f32]]) -> usize {
    region_centre(vectors)
}

/// The unselected vector with the largest summed cosine distance to the
/// `selected` ones; lowest index wins ties.
pub fn select_hard(vectors: &[&[f32]], selected: &[usize]) -> Result<usize> {
    if selected.is_empty() {
        return Err(Error::Empty("no prototypes selected yet".into()));
    }
    let mut taken = vec![false; vectors.len()];
    for &s in selected {
        taken[s] = true;
    }
    let sim = Similarity::of(vectors);
    let mut best = None;
    let mut best_sum = f64::NEG_INFINITY;
    for w in (0..vectors.len()).filter(|w| !taken[*w]) {
        let sum: f64 = selected.iter().map(|&t| 1.0 - sim.get(w, t)).sum();
        if sum > best_sum {
            best_sum = sum;
            best = Some(w);
        }
    }
    best.ok_or(Error::SelectionExhausted)
}

/// Runs the full per-pixel selection on one set of N vectors.
pub fn select_pixel(vectors: &[&[f32]], cfg: &PtsConfig) -> Result<PixelPrototypeSet> {
    cfg.validate(vectors.len())?;
    let sim = Similarity::of(vectors);
    let regions = if vectors.len() < cfg.min_samples {
        Vec::new()
    } else {
        density_regions(&sim.distances(), cfg.min_samples, cfg.xi)
    };
    Ok(select_with_regions(&sim, &regions, cfg.k))
}

fn select_with_regions(sim: &Similarity, regions: &[Vec<usize>], k: usize) -> PixelPrototypeSet {
    let n = sim.n;
    let mut chosen: Vec<Prototype> = Vec::with_capacity(k);

    if regions.is_empty() {
        chosen.push(Prototype {
            source: sim.centre(&(0..n).collect::<Vec<_>>()),
            kind: PrototypeKind::Global,
        });
    } else {
        let mut keep: Vec<usize> = (0..regions.len()).collect();
        if keep.len() > k {
            // Largest regions first; the sort is stable so earlier labels
            // win ties. Survivors keep their label order.
            keep.sort_by(|a, b| regions[*b].len().cmp(&regions[*a].len()));
            keep.truncate(k);
            keep.sort_unstable();
        }
        for r in keep {
            chosen.push(Prototype {
                source: sim.centre(&regions[r]),
                kind: PrototypeKind::Easy,
            });
        }
    }

    let mut taken = vec![false; n];
    let mut score = vec![0.0f64; n];
    for p in &chosen {
        taken[p.source] = true;
        for (w, s) in score.iter_mut().enumerate() {
            *s += 1.0 - sim.get(w, p.source);
        }
    }
    while chosen.len() < k {
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for w in (0..n).filter(|w| !taken[*w]) {
            if score[w] > best_score {
                best_score = score[w];
                best = w;
            }
        }
        taken[best] = true;
        chosen.push(Prototype {
            source: best,
            kind: PrototypeKind::Hard,
        });
        for (w, s) in score.iter_mut().enumerate() {
            *s += 1.0 - sim.get(w, best);
        }
    }
    PixelPrototypeSet { prototypes: chosen }
}

/// Per-pixel selections of one layer, row-major.
pub fn select_layer(sheets: &[FeatureMap], cfg: &PtsConfig) -> Result<Vec<PixelPrototypeSet>> {
    cfg.validate(sheets.len())?;
    let (h, w, _) = sheets[0].shape();
    if sheets.iter().any(|s| s.shape() != sheets[0].shape()) {
        return Err(Error::ShapeMismatch(
            "sheets of one layer differ in shape".into(),
        ));
    }
    (0..h * w)
        .into_par_iter()
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let vectors: Vec<&[f32]> = sheets.iter().map(|s| s.vector(x, y)).collect();
            select_pixel(&vectors, cfg)
        })
        .collect()
}

/// Compresses every layer of `bank` to `cfg.k` sheets. Sheet `k` of the
/// result holds, at each pixel, the `k`-th prototype selected there.
pub fn pts_compress(bank: &TemplateBank, cfg: &PtsConfig) -> Result<TemplateBank> {
    cfg.validate(bank.sheet_count())?;
    let mut layers: BTreeMap<LayerId, Vec<FeatureMap>> = BTreeMap::new();
    for (id, sheets) in bank.layers() {
        let picks = select_layer(sheets, cfg)?;
        let (h, w, c) = sheets[0].shape();
        let mut out = Vec::with_capacity(cfg.k);
        for rank in 0..cfg.k {
            let mut data = Vec::with_capacity(h * w * c);
            for (p, set) in picks.iter().enumerate() {
                let src = set.prototypes[rank].source;
                data.extend_from_slice(sheets[src].vector(p % w, p / w));
            }
            out.push(FeatureMap::new(h, w, c, data)?);
        }
        layers.insert(*id, out);
    }
    let sources = (0..cfg.k).map(|r| format!("pts-rank-{r}")).collect();
    TemplateBank::from_layers(layers, sources, Some((*cfg).into()))
}
