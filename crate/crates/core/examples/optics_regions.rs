//! Density regions of one pixel's template vectors: prints the OPTICS
//! reachability plot and the regions extracted from it.
//!
//!     cargo run --example optics_regions

mod common;

use hetmm::optics::{optics_graph, xi_clusters, DistanceMatrix};
use hetmm::selection::optics_cluster;
use hetmm::{cosine_distance, PtsConfig};
use rand::Rng;

fn main() {
    let mut r = common::rng(3);
    let mut vectors: Vec<Vec<f32>> = Vec::new();
    for (size, spread) in [(25, 0.05f32), (15, 0.1)] {
        let centre: Vec<f32> = (0..6).map(|_| r.gen_range(0.0..1.0)).collect();
        for _ in 0..size {
            vectors.push(
                centre
                    .iter()
                    .map(|v| v + r.gen_range(-spread..spread))
                    .collect(),
            );
        }
    }
    for _ in 0..4 {
        vectors.push((0..6).map(|_| r.gen_range(-1.0..1.0)).collect());
    }
    let views: Vec<&[f32]> = vectors.iter().map(Vec::as_slice).collect();

    let cfg = PtsConfig::with_k(6);
    let dist = DistanceMatrix::from_fn(views.len(), |i, j| {
        f64::from(cosine_distance(views[i], views[j]))
    });
    let graph = optics_graph(&dist, cfg.min_samples);
    let top = graph
        .reachability
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    println!("reachability plot (ordering position: point, reachability)");
    for (pos, &p) in graph.ordering.iter().enumerate() {
        let reach = graph.reachability[p];
        let bar = if reach.is_finite() {
            "#".repeat(1 + (reach / top * 50.0) as usize)
        } else {
            "inf".into()
        };
        println!("{pos:>3}: {p:>3} {reach:>8.5} {bar}");
    }
    println!(
        "xi spans over the ordering: {:?}",
        xi_clusters(&graph, cfg.xi, cfg.min_samples, cfg.min_samples)
    );
    for (i, region) in optics_cluster(&views, &cfg).iter().enumerate() {
        println!("region {i}: {} points {:?}", region.len(), region);
    }
}
