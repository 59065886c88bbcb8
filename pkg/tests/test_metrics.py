import numpy as np
import pytest

from awclust.core import WeightMatrix
from awclust.metrics import (
    TrueWeights,
    calibrated_radius,
    connectedness,
    general_error,
    nmi,
    propagation_error,
    separation_error,
)


def weights_from_pairs(n, pairs):
    return WeightMatrix.from_pairs(n, [p[0] for p in pairs], [p[1] for p in pairs], step=0)


def brute_force_errors(pred_matrix, true_matrix, restrict=None):
    """Ordered-pair enumeration oracle for e_p, e_s, and the general error."""
    n = len(pred_matrix)
    conn_denom = conn_num = disc_denom = disc_num = disagree = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            w = bool(pred_matrix[i, j])
            t = bool(true_matrix[i, j])
            if t:
                conn_denom += 1
                conn_num += not w
            else:
                in_scope = restrict is None or (i in restrict and j in restrict)
                if in_scope:
                    disc_denom += 1
                    disc_num += w
            disagree += w != t
    e_p = conn_num / conn_denom if conn_denom else float("nan")
    e_s = disc_num / disc_denom if disc_denom else float("nan")
    return e_p, e_s, disagree / (n * (n - 1))


def test_propagation_error_examples():
    truth = np.zeros(4, dtype=int)
    assert propagation_error(truth, truth) == 0.0
    pred = np.array([0, 0, 1, 1])
    # 8 disconnected ordered pairs out of 12 truly connected
    assert propagation_error(pred, truth) == pytest.approx(8.0 / 12.0)
    all_ones = np.ones((4, 4), dtype=bool)
    assert propagation_error(all_ones, truth) == 0.0


def test_propagation_error_undefined():
    truth = np.arange(4)  # all singletons: no connected pair
    assert np.isnan(propagation_error(truth, truth))


def test_separation_error_examples():
    truth = np.array([0, 0, 0, 1, 1, 1])
    assert separation_error(truth, truth) == 0.0
    assert separation_error(np.ones((6, 6), dtype=bool), truth) == 1.0

    # raw matrix with one extra symmetric cross pair: 2 of 18 cross pairs
    pred_raw = TrueWeights.from_labels(truth).matrix.copy()
    pred_raw[2, 3] = pred_raw[3, 2] = True
    assert separation_error(pred_raw, truth) == pytest.approx(2.0 / 18.0)
    # the same prediction given as labels closes over components: everything joins
    assert separation_error(np.zeros(6, dtype=int), truth) == 1.0


def test_separation_error_restricted():
    truth = np.array([0, 0, 1, 1, 2, 2])
    pred = TrueWeights.from_labels(truth).matrix.copy()
    pred[0, 4] = pred[4, 0] = True
    unrestricted = separation_error(pred, truth)
    a_and_c = separation_error(pred, truth, restrict=[0, 1, 4, 5])
    assert unrestricted == pytest.approx(2.0 / 24.0)
    assert a_and_c == pytest.approx(2.0 / 8.0)


def test_general_error_examples():
    truth = np.array([1, 1, 2, 2])
    assert general_error(truth, truth) == 0.0
    assert general_error(np.arange(4), np.zeros(4, dtype=int)) == 1.0
    pred = np.array([1, 2, 2, 2])
    assert general_error(pred, truth) == pytest.approx(0.5)


def test_metric_oracles_random_instances():
    rng = np.random.default_rng(21)
    for _ in range(60):
        n = rng.integers(4, 30)
        truth = rng.integers(0, 4, size=n)
        pairs = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.2:
                    pairs.append((i, j))
        pred = weights_from_pairs(n, pairs)
        t_matrix = TrueWeights.from_labels(truth).matrix
        e_p, e_s, e = brute_force_errors(pred.to_dense(), t_matrix)
        assert propagation_error(pred, truth) == pytest.approx(e_p, nan_ok=True)
        assert separation_error(pred, truth) == pytest.approx(e_s, nan_ok=True)
        assert general_error(pred, truth) == pytest.approx(e)


def test_general_error_decomposition():
    # numerator of the general error splits into e_s * D + e_p * C exactly
    rng = np.random.default_rng(22)
    for _ in range(40):
        n = int(rng.integers(5, 25))
        truth = rng.integers(0, 3, size=n)
        pred = weights_from_pairs(
            n, [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3]
        )
        t_matrix = TrueWeights.from_labels(truth).matrix
        off = ~np.eye(n, dtype=bool)
        c_pairs = int((t_matrix & off).sum())
        d_pairs = int((~t_matrix & off).sum())
        e_p = propagation_error(pred, truth)
        e_s = separation_error(pred, truth)
        e = general_error(pred, truth)
        num = (0 if d_pairs == 0 else e_s * d_pairs) + (0 if c_pairs == 0 else e_p * c_pairs)
        assert e * n * (n - 1) == pytest.approx(num, abs=1e-9)


def test_metrics_relabel_invariant():
    rng = np.random.default_rng(23)
    truth = rng.integers(0, 3, size=20)
    pred = rng.integers(0, 4, size=20)
    remap_t = (truth * 7 + 3) % 11
    remap_p = (pred * 5 + 1) % 13
    assert general_error(pred, truth) == general_error(remap_p, remap_t)
    assert propagation_error(pred, truth) == propagation_error(remap_p, remap_t)
    assert nmi(pred, truth) == pytest.approx(nmi(remap_p, remap_t))


def test_nmi_examples():
    truth = np.array([1, 1, 2, 2])
    assert nmi(truth, truth) == pytest.approx(1.0)
    assert nmi(np.zeros(4, dtype=int), truth) == 0.0
    assert nmi(np.array([1, 2, 1, 2]), truth) == pytest.approx(0.0, abs=1e-12)


def test_nmi_symmetric():
    rng = np.random.default_rng(24)
    a = rng.integers(0, 4, 30)
    b = rng.integers(0, 3, 30)
    assert nmi(a, b) == pytest.approx(nmi(b, a))


def test_nmi_contingency_oracle():
    # direct contingency-table evaluation with natural logs
    rng = np.random.default_rng(25)
    for _ in range(30):
        n = int(rng.integers(6, 30))
        a = rng.integers(0, 4, n)
        b = rng.integers(0, 3, n)
        labels_a = np.unique(a)
        labels_b = np.unique(b)
        if len(labels_a) < 2 or len(labels_b) < 2:
            continue
        num = 0.0
        for la in labels_a:
            for lb in labels_b:
                nml = int(np.sum((a == la) & (b == lb)))
                if nml:
                    num += nml * np.log(n * nml / (np.sum(a == la) * np.sum(b == lb)))
        den = np.sqrt(
            sum(np.sum(a == la) * np.log(np.sum(a == la) / n) for la in labels_a)
            * sum(np.sum(b == lb) * np.log(np.sum(b == lb) / n) for lb in labels_b)
        )
        assert nmi(a, b) == pytest.approx(num / den, abs=1e-12)


def test_connectedness_examples():
    pts = np.array([[0.1, 0.0], [0.0, 0.2], [3.0, 0.0]])
    all_ones = np.ones((3, 3), dtype=bool)
    assert connectedness(all_ones, pts, 1.0) == 1.0
    identity = weights_from_pairs(3, [])
    assert connectedness(identity, pts, 1.0) == pytest.approx(1.0 / 2.0)
    assert np.isnan(connectedness(all_ones, pts, 0.05))
    with pytest.raises(ValueError):
        connectedness(all_ones, pts, 0.0)


def test_calibrated_radius_infinite_lambda():
    r = calibrated_radius(40, lam=1e9, alpha=0.2, runs=8, seed=5, dim=2)
    # everything connected: the largest grid radius (the max observed norm) passes
    rng_norms = []
    for s in np.random.SeedSequence(5).spawn(8):
        pts = np.random.default_rng(s).standard_normal((40, 2))
        rng_norms.append(np.linalg.norm(pts, axis=1).max())
    assert r == pytest.approx(max(rng_norms))


def test_calibrated_radius_alpha_monotone():
    r_strict = calibrated_radius(60, lam=5.0, alpha=0.1, runs=10, seed=6, dim=2)
    r_loose = calibrated_radius(60, lam=5.0, alpha=0.3, runs=10, seed=6, dim=2)
    assert r_strict <= r_loose + 1e-12
