//! OPTICS ordering and xi extraction against frozen scikit-learn output
//! (regenerate with `tests/fixtures/gen_optics.py`).

use hetmm::optics::{density_regions, optics_graph, xi_clusters, xi_labels, DistanceMatrix};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    n: usize,
    min_samples: usize,
    xi: f64,
    dist_bits: Vec<u64>,
    ordering: Vec<usize>,
    reachability: Vec<Option<f64>>,
    core_distances: Vec<Option<f64>>,
    labels: Vec<i64>,
    clusters: Vec<(usize, usize)>,
}

fn cases() -> Vec<Case> {
    let text = include_str!("fixtures/optics_cases.json");
    serde_json::from_str(text).unwrap()
}

fn matrix(c: &Case) -> DistanceMatrix {
    let d: Vec<f64> = c.dist_bits.iter().map(|b| f64::from_bits(*b)).collect();
    DistanceMatrix::from_fn(c.n, |i, j| d[i * c.n + j])
}

fn close(a: f64, b: Option<f64>) -> bool {
    match b {
        None => a.is_infinite(),
        Some(b) => (a - b).abs() <= 1e-12,
    }
}

#[test]
fn ordering_and_reachability_match() {
    for c in cases() {
        let g = optics_graph(&matrix(&c), c.min_samples);
        assert_eq!(g.ordering, c.ordering, "{}: ordering", c.name);
        for i in 0..c.n {
            assert!(
                close(g.reachability[i], c.reachability[i]),
                "{}: reach[{i}]",
                c.name
            );
            assert!(
                close(g.core_distances[i], c.core_distances[i]),
                "{}: core[{i}]",
                c.name
            );
        }
    }
}

#[test]
fn xi_spans_and_labels_match() {
    for c in cases() {
        let g = optics_graph(&matrix(&c), c.min_samples);
        let spans = xi_clusters(&g, c.xi, c.min_samples, c.min_samples);
        assert_eq!(spans, c.clusters, "{}: spans", c.name);
        let labels: Vec<i64> = xi_labels(&g.ordering, &spans)
            .into_iter()
            .map(|l| l.map_or(-1, |v| v as i64))
            .collect();
        assert_eq!(labels, c.labels, "{}: labels", c.name);
    }
}

#[test]
fn regions_group_points_by_label() {
    for c in cases() {
        let regions = density_regions(&matrix(&c), c.min_samples, c.xi);
        let count = c.labels.iter().copied().max().unwrap_or(-1) + 1;
        assert_eq!(regions.len() as i64, count, "{}", c.name);
        for (l, members) in regions.iter().enumerate() {
            let want: Vec<usize> = (0..c.n).filter(|i| c.labels[*i] == l as i64).collect();
            assert_eq!(members, &want, "{}: region {l}", c.name);
        }
    }
}

#[test]
fn fewer_points_than_min_samples_gives_no_regions() {
    let d = DistanceMatrix::from_fn(3, |_, _| 0.5);
    assert!(density_regions(&d, 5, 0.05).is_empty());
}
