import math

import numpy as np
import pytest

from awclust.neighbors import (
    RadiiConstructionError,
    build_neighbor_index,
    build_radii_sequence,
    count_within,
    pairwise_distances,
)


def index_for(points, **kw):
    return build_neighbor_index(pairwise_distances(np.asarray(points, dtype=float)), **kw)


def test_pairwise_345():
    dm = pairwise_distances([[0.0, 0.0], [3.0, 4.0]])
    assert dm.distances[0, 1] == pytest.approx(5.0)
    assert dm.distances[1, 0] == pytest.approx(5.0)
    assert dm.distances[0, 0] == 0.0


def test_pairwise_matches_naive_loop():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(10, 3))
    dm = pairwise_distances(pts)
    for i in range(10):
        for j in range(10):
            assert dm.distances[i, j] == pytest.approx(
                math.sqrt(((pts[i] - pts[j]) ** 2).sum()), abs=1e-12
            )


def test_pairwise_rejects_bad_input():
    with pytest.raises(ValueError):
        pairwise_distances([[0.0, np.inf], [1.0, 2.0]])
    with pytest.raises(ValueError):
        pairwise_distances(np.zeros((1, 2)))


def test_precomputed_validation():
    good = np.array([[0.0, 5.0], [5.0, 0.0]])
    dm = pairwise_distances(good, metric="precomputed")
    assert dm.n == 2
    with pytest.raises(ValueError):
        pairwise_distances(np.array([[0.0, 5.0], [4.0, 0.0]]), metric="precomputed")
    with pytest.raises(ValueError):
        pairwise_distances(np.array([[0.0, -1.0], [-1.0, 0.0]]), metric="precomputed")
    with pytest.raises(ValueError):
        pairwise_distances(np.array([[1.0, 5.0], [5.0, 0.0]]), metric="precomputed")


def test_neighbor_index_sorted_1d():
    idx = index_for([[0.0], [1.0], [3.0]])
    assert idx.neighbors(0) == [(1, 1.0), (2, 3.0)]
    assert idx.neighbors(2) == [(1, 2.0), (0, 3.0)]


def test_neighbor_index_cap():
    idx = index_for([[0.0], [1.0], [3.0]], cap=1)
    assert all(len(idx.ids[i]) == 1 for i in range(3))


def test_neighbor_index_tie_breaks_by_id():
    # points 1 and 2 both at distance 1 from point 0
    idx = index_for([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert idx.ids[0].tolist() == [1, 2]


def test_count_within():
    idx = index_for([[0.0], [1.0], [3.0]])
    assert count_within(idx, 0, 0.0) == 0
    assert count_within(idx, 0, 10.0) == 2
    assert count_within(idx, 0, 1.0) == 1
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(25, 2))
    dm = pairwise_distances(pts)
    idx = build_neighbor_index(dm)
    for i in range(25):
        for h in rng.uniform(0, 3, 5):
            brute = int(np.sum((dm.distances[i] <= h)) - 1)
            assert count_within(idx, i, float(h)) == brute


def test_count_within_monotone():
    idx = index_for(np.random.default_rng(2).normal(size=(30, 2)))
    for i in range(0, 30, 7):
        counts = [count_within(idx, i, h) for h in np.linspace(0, 4, 40)]
        assert all(a <= b for a, b in zip(counts, counts[1:]))


def test_radii_collapse_single_distance():
    # all pairwise distances equal: one radius, every starting radius equal
    n = 5
    d = np.ones((n, n)) - np.eye(n)
    dm = pairwise_distances(d, metric="precomputed")
    idx = build_neighbor_index(dm)
    seq = build_radii_sequence(idx, n0=2)
    assert seq.radii.tolist() == [1.0]
    assert np.all(seq.per_point_h0 == 1.0)


def test_radii_invariants_1d_grid():
    pts = np.linspace(0.0, 1.0, 100)[:, None]
    idx = index_for(pts)
    a, b, n0 = math.sqrt(2.0), 1.95, 4
    seq = build_radii_sequence(idx, a=a, b=b, n0=n0)
    radii = seq.radii
    assert np.all(np.diff(radii) > 0)
    # radius growth capped by b
    assert np.all(radii[1:] <= b * radii[:-1] + 1e-12)
    # neighbor-count growth within the integer allowance for the enforced fraction
    dists = np.vstack([d for d in idx.dists])
    for k in range(1, len(radii)):
        prev = (dists <= radii[k - 1]).sum(axis=1)
        cur = (dists <= radii[k]).sum(axis=1)
        allowance = np.ceil(a * np.maximum(prev, n0))
        assert np.mean(cur <= allowance) >= 0.95


def test_radii_h0_membership():
    idx = index_for(np.random.default_rng(3).normal(size=(60, 2)))
    seq = build_radii_sequence(idx, n0=6)
    for i in range(60):
        assert seq.per_point_h0[i] in seq.radii
        assert count_within(idx, i, float(seq.per_point_h0[i])) >= 6


def test_radii_deterministic():
    pts = np.random.default_rng(4).normal(size=(80, 2))
    a = build_radii_sequence(index_for(pts), n0=6)
    b = build_radii_sequence(index_for(pts), n0=6)
    assert np.array_equal(a.radii, b.radii)
    assert np.array_equal(a.per_point_h0, b.per_point_h0)


def test_radii_step_count_logarithmic():
    # doubling n adds a bounded number of steps
    ks = []
    for n in (250, 500, 1000):
        rng = np.random.default_rng(9)
        g = rng.standard_normal((n, 2))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        pts = g * rng.uniform(0, 1, (n, 1)) ** 0.5
        ks.append(len(build_radii_sequence(index_for(pts), n0=6).radii) - 1)
    assert ks[1] - ks[0] <= 4
    assert ks[2] - ks[1] <= 4


def test_radii_gap_stops_sequence():
    rng = np.random.default_rng(6)
    clump_a = rng.normal(0, 0.05, size=(20, 2))
    clump_b = rng.normal(0, 0.05, size=(20, 2)) + [50.0, 0.0]
    seq = build_radii_sequence(index_for(np.vstack([clump_a, clump_b])), n0=4)
    assert seq.stopped_by_gap
    assert seq.radii[-1] < 1.0


def test_radii_degenerate_duplicates_error():
    d = np.zeros((6, 6))
    dm = pairwise_distances(d, metric="precomputed")
    idx = build_neighbor_index(dm)
    with pytest.raises(RadiiConstructionError):
        build_radii_sequence(idx, n0=2)


def test_radii_h_max_too_small_error():
    idx = index_for(np.random.default_rng(1).normal(size=(30, 2)))
    with pytest.raises((RadiiConstructionError, ValueError)):
        build_radii_sequence(idx, n0=6, h_max=1e-6)


def test_radii_parameter_validation():
    idx = index_for(np.random.default_rng(1).normal(size=(20, 2)))
    with pytest.raises(ValueError):
        build_radii_sequence(idx, a=2.5)
    with pytest.raises(ValueError):
        build_radii_sequence(idx, b=2.0)
    with pytest.raises(ValueError):
        build_radii_sequence(idx, n0=25)
    with pytest.raises(ValueError):
        build_radii_sequence(idx, phi=0.0)
