"""Clustering evaluation metrics.

All pair-based metrics count ordered pairs (i, j) with i != j, matching the
double sums they are defined by. Predictions can be given as a WeightMatrix
(raw pair weights), as a label vector (converted to the component-closure
weight matrix), or as a dense 0/1 matrix. Metrics whose denominator is
empty return NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClusteringResult, WeightMatrix, run_awc

__all__ = [
    "TrueWeights",
    "propagation_error",
    "separation_error",
    "general_error",
    "nmi",
    "connectedness",
    "calibrated_radius",
    "errors_from_result",
]


@dataclass(frozen=True)
class TrueWeights:
    """Ground-truth binary pair weights, symmetric with a unit diagonal."""

    matrix: np.ndarray

    @classmethod
    def from_labels(cls, labels) -> "TrueWeights":
        labels = np.asarray(labels)
        m = labels[:, None] == labels[None, :]
        return cls(matrix=m)

    @classmethod
    def from_matrix(cls, matrix) -> "TrueWeights":
        m = np.asarray(matrix).astype(bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {m.shape}")
        if not np.array_equal(m, m.T):
            raise ValueError("weight matrix must be symmetric")
        m = m.copy()
        np.fill_diagonal(m, True)
        return cls(matrix=m)


def _as_pair_matrix(pred) -> np.ndarray:
    """Dense boolean pair matrix from weights, labels, or a 0/1 matrix.

    Label vectors are turned into their component closure (same label means
    connected); a WeightMatrix is used raw, preserving the distinction
    between the two conventions.
    """
    if isinstance(pred, WeightMatrix):
        return pred.to_dense()
    if isinstance(pred, TrueWeights):
        return pred.matrix
    arr = np.asarray(pred)
    if arr.ndim == 1:
        return TrueWeights.from_labels(arr).matrix
    return TrueWeights.from_matrix(arr).matrix


def propagation_error(pred, truth) -> float:
    """Share of truly connected ordered pairs that the prediction disconnects."""
    w = _as_pair_matrix(pred)
    t = _as_pair_matrix(truth)
    if w.shape != t.shape:
        raise ValueError("prediction and truth describe different point counts")
    off = ~np.eye(len(w), dtype=bool)
    connected = t & off
    denom = connected.sum()
    if denom == 0:
        return float("nan")
    return float((connected & ~w).sum() / denom)


def separation_error(pred, truth, restrict=None) -> float:
    """Share of truly disconnected ordered pairs that the prediction connects.

    ``restrict`` limits both sums to pairs whose endpoints are in the given
    point subset, the form used when only the separation of two specific
    groups is of interest.
    """
    w = _as_pair_matrix(pred)
    t = _as_pair_matrix(truth)
    if w.shape != t.shape:
        raise ValueError("prediction and truth describe different point counts")
    off = ~np.eye(len(w), dtype=bool)
    scope = off
    if restrict is not None:
        mask = np.zeros(len(w), dtype=bool)
        mask[np.asarray(restrict)] = True
        scope = scope & mask[:, None] & mask[None, :]
    disconnected = ~t & scope
    denom = disconnected.sum()
    if denom == 0:
        return float("nan")
    return float((disconnected & w).sum() / denom)


def general_error(pred, truth) -> float:
    """Disagreeing ordered pairs over all ordered pairs (one minus the Rand index)."""
    w = _as_pair_matrix(pred)
    t = _as_pair_matrix(truth)
    if w.shape != t.shape:
        raise ValueError("prediction and truth describe different point counts")
    off = ~np.eye(len(w), dtype=bool)
    n = len(w)
    disagree = (w ^ t) & off
    return float(disagree.sum() / (n * (n - 1)))


def nmi(pred_labels, true_labels) -> float:
    """Normalized mutual information between two labelings.

    Natural logarithms; returns 0 when either labeling is a single cluster
    (degenerate normalization).
    """
    a = np.asarray(pred_labels)
    b = np.asarray(true_labels)
    if a.shape != b.shape:
        raise ValueError("labelings must cover the same points")
    n = len(a)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(contingency, (ai, bi), 1.0)
    row = contingency.sum(axis=1)
    col = contingency.sum(axis=0)
    if len(row) < 2 or len(col) < 2:
        return 0.0
    nz = contingency > 0
    numer = (contingency[nz] * np.log(n * contingency[nz] / np.outer(row, col)[nz])).sum()
    denom = np.sqrt((row * np.log(row / n)).sum() * (col * np.log(col / n)).sum())
    return float(numer / denom)


def connectedness(pred, points, radius: float) -> float:
    """Weight share among pairs whose endpoints lie in the centered ball.

    Includes the diagonal, so identity weights over m inside points give
    1/m. NaN when no point lies inside the ball.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    w = _as_pair_matrix(pred)
    norms = np.linalg.norm(np.asarray(points, dtype=float), axis=1)
    inside = norms <= radius
    m = int(inside.sum())
    if m == 0:
        return float("nan")
    return float(w[np.ix_(inside, inside)].sum() / (m * m))


def calibrated_radius(
    n: int,
    lam: float,
    alpha: float = 0.2,
    runs: int = 50,
    seed: int = 0,
    dim: int = 2,
    grid_size: int = 64,
    **awc_kwargs,
) -> float:
    """Monte-Carlo estimate of the largest radius with reliable connectedness.

    Runs the clustering on standard Gaussian samples and returns the largest
    grid radius r such that the connectedness within the centered r-ball is
    at least 1 - alpha in at least a 1 - alpha fraction of runs. Empty balls
    count as connected (vacuous).
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    seeds = np.random.SeedSequence(seed).spawn(runs)
    results = []
    for s in seeds:
        rng = np.random.default_rng(s)
        pts = rng.standard_normal((n, dim))
        res = run_awc(pts, lam=lam, **awc_kwargs)
        results.append((pts, res.weights.to_dense()))
    max_norm = max(np.linalg.norm(p, axis=1).max() for p, _ in results)
    grid = np.linspace(max_norm / grid_size, max_norm, grid_size)
    best = 0.0
    for r in grid:
        ok = 0
        for pts, w in results:
            inside = np.linalg.norm(pts, axis=1) <= r
            m = int(inside.sum())
            if m == 0:
                ok += 1
                continue
            ws = w[np.ix_(inside, inside)].sum() / (m * m)
            ok += ws >= 1.0 - alpha
        if ok / runs >= 1.0 - alpha:
            best = float(r)
    return best


def errors_from_result(result: ClusteringResult, true_labels, restrict=None) -> dict:
    """Bundle of all error metrics for a finished run, both weight conventions.

    The raw convention scores the final weight matrix itself; the closure
    convention scores the induced partition (connected components).
    """
    labels = result.labels
    closure = TrueWeights.from_labels(labels).matrix
    return {
        "e_p": propagation_error(result.weights, true_labels),
        "e_s": separation_error(result.weights, true_labels, restrict=restrict),
        "e": general_error(result.weights, true_labels),
        "e_p_closure": propagation_error(closure, true_labels),
        "e_s_closure": separation_error(closure, true_labels, restrict=restrict),
        "e_closure": general_error(closure, true_labels),
        "nmi": nmi(labels, np.asarray(true_labels)),
    }
