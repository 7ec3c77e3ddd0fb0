//! OPTICS ordering and xi-steep cluster extraction over a precomputed
//! distance matrix.
//!
//! The ordering follows the usual kNN-core-distance formulation with an
//! unbounded radius: every point with at least `min_samples` points
//! (itself included) is a core point, and the next point to expand is the
//! unprocessed one with the smallest reachability, lowest index on ties.
//! Distances are rounded to 15 decimals before comparison, which keeps the
//! ordering stable against last-bit noise.

/// Square symmetric distance matrix, row-major.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

/// Result of the OPTICS ordering pass. `reachability` and `predecessor` are
/// indexed by point, not by position in `ordering`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticsGraph {
    pub ordering: Vec<usize>,
    pub core_distances: Vec<f64>,
    pub reachability: Vec<f64>,
    pub predecessor: Vec<Option<usize>>,
}

fn round15(v: f64) -> f64 {
    if v.is_finite() {
        (v * 1e15).round_ties_even() / 1e15
    } else {
        v
    }
}

/// Builds the reachability plot. Requires `dist.len() >= min_samples`.
pub fn optics_graph(dist: &DistanceMatrix, min_samples: usize) -> OpticsGraph {
    let n = dist.len();
    assert!(
        min_samples >= 1 && n >= min_samples,
        "need at least min_samples points"
    );

    let core_distances: Vec<f64> = (0..n)
        .map(|i| {
            let mut row = dist.row(i).to_vec();
            row.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            round15(row[min_samples - 1])
        })
        .collect();

    let mut reachability = vec![f64::INFINITY; n];
    let mut predecessor = vec![None; n];
    let mut processed = vec![false; n];
    let mut ordering = Vec::with_capacity(n);

    for _ in 0..n {
        let mut point = usize::MAX;
        let mut best = f64::NAN;
        for j in (0..n).filter(|j| !processed[*j]) {
            if point == usize::MAX || reachability[j] < best {
                point = j;
                best = reachability[j];
            }
        }
        processed[point] = true;
        ordering.push(point);
        let core = core_distances[point];
        if core.is_infinite() {
            continue;
        }
        for j in 0..n {
            if processed[j] {
                continue;
            }
            let rd = round15(dist.get(point, j).max(core));
            if rd < reachability[j] {
                reachability[j] = rd;
                predecessor[j] = Some(point);
            }
        }
    }

    OpticsGraph {
        ordering,
        core_distances,
        reachability,
        predecessor,
    }
}

#[derive(Debug, Clone, Copy)]
struct SteepDownArea {
    start: usize,
    end: usize,
    mib: f64,
}

fn extend_region(steep: &[bool], xward: &[bool], start: usize, min_samples: usize) -> usize {
    let mut non_xward = 0;
    let mut end = start;
    for index in start..steep.len() {
        if steep[index] {
            non_xward = 0;
            end = index;
        } else if !xward[index] {
            non_xward += 1;
            if non_xward > min_samples {
                break;
            }
        } else {
            return end;
        }
    }
    end
}

fn filter_sdas(sdas: Vec<SteepDownArea>, mib: f64, xi_c: f64, r: &[f64]) -> Vec<SteepDownArea> {
    if mib.is_infinite() {
        return Vec::new();
    }
    sdas.into_iter()
        .filter(|sda| mib <= r[sda.start] * xi_c)
        .map(|mut sda| {
            sda.mib = sda.mib.max(mib);
            sda
        })
        .collect()
}

fn correct_predecessor(
    r: &[f64],
    pred: &[Option<usize>],
    ordering: &[usize],
    s: usize,
    mut e: usize,
) -> Option<(usize, usize)> {
    while s < e {
        if r[s] > r[e] {
            return Some((s, e));
        }
        if let Some(p_e) = pred[e] {
            if ordering[s..e].contains(&p_e) {
                return Some((s, e));
            }
        }
        e -= 1;
    }
    None
}

/// Xi-steep extraction. Returns `(start, end)` spans (inclusive) over
/// positions of the ordering, smaller nested clusters before the clusters
/// enclosing them.
pub fn xi_clusters(
    graph: &OpticsGraph,
    xi: f64,
    min_samples: usize,
    min_cluster_size: usize,
) -> Vec<(usize, usize)> {
    let n = graph.ordering.len();
    let mut r: Vec<f64> = graph
        .ordering
        .iter()
        .map(|&i| graph.reachability[i])
        .collect();
    r.push(f64::INFINITY);
    let pred: Vec<Option<usize>> = graph
        .ordering
        .iter()
        .map(|&i| graph.predecessor[i])
        .collect();

    let xi_c = 1.0 - xi;
    let ratio: Vec<f64> = (0..n).map(|i| r[i] / r[i + 1]).collect();
    let steep_up: Vec<bool> = ratio.iter().map(|v| *v <= xi_c).collect();
    let steep_down: Vec<bool> = ratio.iter().map(|v| *v >= 1.0 / xi_c).collect();
    let down: Vec<bool> = ratio.iter().map(|v| *v > 1.0).collect();
    let up: Vec<bool> = ratio.iter().map(|v| *v < 1.0).collect();

    let mut sdas: Vec<SteepDownArea> = Vec::new();
    let mut clusters = Vec::new();
    let mut index = 0usize;
    let mut mib = 0.0f64;

    for steep_index in (0..n).filter(|i| steep_up[*i] || steep_down[*i]) {
        if steep_index < index {
            continue;
        }
        mib = r[index..=steep_index].iter().copied().fold(mib, f64::max);

        if steep_down[steep_index] {
            sdas = filter_sdas(sdas, mib, xi_c, &r);
            let d_end = extend_region(&steep_down, &up, steep_index, min_samples);
            sdas.push(SteepDownArea {
                start: steep_index,
                end: d_end,
                mib: 0.0,
            });
            index = d_end + 1;
            mib = r[index];
        } else {
            sdas = filter_sdas(sdas, mib, xi_c, &r);
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &down, u_start, min_samples);
            index = u_end + 1;
            mib = r[index];

            let mut found = Vec::new();
            for d in &sdas {
                let mut c_start = d.start;
                let mut c_end = u_end;
                if r[c_end + 1] * xi_c < d.mib {
                    continue;
                }
                let d_max = r[d.start];
                if d_max * xi_c >= r[c_end + 1] {
                    while r[c_start + 1] > r[c_end + 1] && c_start < d.end {
                        c_start += 1;
                    }
                } else if r[c_end + 1] * xi_c >= d_max {
                    while r[c_end - 1] > d_max && c_end > u_start {
                        c_end -= 1;
                    }
                }
                let Some((s, e)) = correct_predecessor(&r, &pred, &graph.ordering, c_start, c_end)
                else {
                    continue;
                };
                if e - s + 1 < min_cluster_size || s > d.end || e < u_start {
                    continue;
                }
                found.push((s, e));
            }
            found.reverse();
            clusters.extend(found);
        }
    }
    clusters
}

/// Flat labels from nested spans: a span gets a fresh label only if none
/// of its positions is already labelled. Returned per point.
pub fn xi_labels(ordering: &[usize], clusters: &[(usize, usize)]) -> Vec<Option<usize>> {
    let mut by_pos: Vec<Option<usize>> = vec![None; ordering.len()];
    let mut label = 0;
    for &(s, e) in clusters {
        if by_pos[s..=e].iter().all(Option::is_none) {
            by_pos[s..=e].iter_mut().for_each(|l| *l = Some(label));
            label += 1;
        }
    }
    let mut labels = vec![None; ordering.len()];
    for (pos, &point) in ordering.iter().enumerate() {
        labels[point] = by_pos[pos];
    }
    labels
}

/// High-density regions found by OPTICS + xi extraction, in label order,
/// each listing its member indices ascending. Fewer than `min_samples`
/// points yield no regions.
pub fn density_regions(dist: &DistanceMatrix, min_samples: usize, xi: f64) -> Vec<Vec<usize>> {
    if dist.len() < min_samples.max(1) {
        return Vec::new();
    }
    let graph = optics_graph(dist, min_samples);
    let spans = xi_clusters(&graph, xi, min_samples, min_samples);
    let labels = xi_labels(&graph.ordering, &spans);
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut regions = vec![Vec::new(); count];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            regions[*l].push(i);
        }
    }
    regions
}
