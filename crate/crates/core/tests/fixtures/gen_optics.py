"""Regenerates optics_cases.json from scikit-learn.

Distances are stored as raw f64 bit patterns so both sides see identical input.
"""
import json
import struct

import numpy as np
from sklearn.cluster import OPTICS
from sklearn.metrics.pairwise import cosine_distances, euclidean_distances


def bits(x):
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def case(name, d, min_samples, xi):
    m = OPTICS(min_samples=min_samples, xi=xi, metric="precomputed", cluster_method="xi").fit(d)
    return {
        "name": name,
        "n": int(d.shape[0]),
        "min_samples": min_samples,
        "xi": xi,
        "dist_bits": [bits(v) for v in d.ravel()],
        "ordering": m.ordering_.tolist(),
        "reachability": [None if np.isinf(v) else float(v) for v in m.reachability_],
        "core_distances": [None if np.isinf(v) else float(v) for v in m.core_distances_],
        "labels": m.labels_.tolist(),
        "clusters": m.cluster_hierarchy_.tolist(),
    }


def sym(d):
    d = np.maximum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


rng = np.random.default_rng(7)
cases = []

two = np.vstack([rng.normal(0, 0.05, (10, 2)) + [1, 0], rng.normal(0, 0.05, (10, 2)) + [0, 1]])
cases.append(case("two_tight_clusters_euclid", sym(euclidean_distances(two)), 5, 0.05))

blobs = np.vstack(
    [rng.normal(0, s, (k, 4)) + c for k, s, c in [(30, 0.1, 3), (25, 0.2, -3), (15, 0.05, 0)]]
    + [rng.uniform(-6, 6, (6, 4))]
)
cases.append(case("three_blobs_outliers_euclid", sym(euclidean_distances(blobs)), 5, 0.05))

feats = np.abs(rng.normal(0, 1, (60, 16)))
feats[:20] += 4 * np.eye(16)[0]
feats[20:45] += 4 * np.eye(16)[1]
cases.append(case("relu_like_cosine", sym(cosine_distances(feats)), 5, 0.05))

basis = np.eye(30)
cases.append(case("orthogonal_basis_cosine", sym(cosine_distances(basis)), 5, 0.05))

nested = np.vstack(
    [rng.normal(0, 0.02, (8, 3)), rng.normal(0, 0.3, (20, 3)), rng.normal(0, 0.1, (12, 3)) + 2]
)
cases.append(case("nested_density_euclid", sym(euclidean_distances(nested)), 4, 0.1))

uni = rng.uniform(0, 1, (40, 3))
cases.append(case("uniform_euclid_xi_0_2", sym(euclidean_distances(uni)), 3, 0.2))

dup = np.vstack([np.ones((6, 3)), rng.normal(0, 1, (10, 3)) + 5])
cases.append(case("duplicates_euclid", sym(euclidean_distances(dup)), 5, 0.05))

for seed in range(8):
    r = np.random.default_rng(100 + seed)
    k = r.integers(2, 5)
    pts = np.vstack(
        [r.normal(0, r.uniform(0.05, 0.5), (r.integers(6, 20), 5)) + r.normal(0, 3, 5) for _ in range(k)]
    )
    ms = int(r.integers(2, 7))
    cases.append(case(f"random_mix_{seed}", sym(euclidean_distances(pts)), ms, 0.05))

with open("optics_cases.json", "w") as f:
    json.dump(cases, f)
print(len(cases), "cases;", [ (c["name"], max(c["labels"]) + 1) for c in cases])
