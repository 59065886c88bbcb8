"""Threshold selection: propagation calibration and the sum-of-weights sweep.

Calibration searches for the smallest threshold at which uniform unit-ball
data is recovered as a single homogeneous cluster in a prescribed fraction
of runs, where "recovered" defaults to the connectedness criterion (the
total weight share reaches 1 - alpha) and can be switched to plain
single-component recovery. The sweep records the effective cluster volume
S(lambda) over a threshold grid and finds its plateaus.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ClusteringResult, run_awc
from .data import gen_uniform_ball

__all__ = [
    "CalibrationError",
    "SweepCurve",
    "Plateau",
    "calibrate_propagation",
    "sum_of_weights",
    "sweep_lambda",
    "detect_plateau",
]

LAMBDA_RESOLUTION = 0.1
LAMBDA_CEILING = 1e6


class CalibrationError(RuntimeError):
    """No threshold in the search bracket reaches the requested level."""


@dataclass(frozen=True)
class Plateau:
    """Maximal run of grid points with relatively stable S(lambda)."""

    start_lambda: float
    end_lambda: float
    mean_s: float
    start_index: int
    end_index: int


@dataclass(frozen=True)
class SweepCurve:
    """S(lambda) over a threshold grid, with detected plateaus."""

    lambdas: np.ndarray
    s_values: np.ndarray
    plateaus: tuple = ()

    @property
    def recommended(self) -> float | None:
        """Smallest lambda of the first plateau, None without plateaus."""
        if not self.plateaus:
            return None
        return self.plateaus[0].start_lambda


def sum_of_weights(result: ClusteringResult) -> int:
    """Total weight mass of the final matrix, diagonal included."""
    return result.weights.sum_with_diagonal()


def _run_success(args):
    points, lam, criterion, alpha, awc_kwargs = args
    res = run_awc(points, lam=lam, **awc_kwargs)
    if criterion == "single-cluster":
        return res.num_clusters == 1
    n = len(res.labels)
    return res.weights.sum_with_diagonal() / (n * n) >= 1.0 - alpha


def _success_rate(datasets, lam, criterion, alpha, awc_kwargs, workers):
    jobs = [(pts, lam, criterion, alpha, awc_kwargs) for pts in datasets]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flags = list(pool.map(_run_success, jobs))
    else:
        flags = [_run_success(j) for j in jobs]
    return sum(flags) / len(flags)


def calibrate_propagation(
    n: int,
    dim: int = 2,
    level: float = 0.9,
    runs: int = 50,
    seed: int = 0,
    criterion: str = "connectedness",
    alpha: float = 0.3,
    workers: int = 1,
    **awc_kwargs,
) -> float:
    """Smallest threshold recovering uniform unit-ball data at the given level.

    The same ``runs`` datasets (seeded from ``seed``) are reused for every
    candidate threshold, so the success rate is monotone in practice and a
    doubling bracket plus bisection to a 0.1 grid is valid. With the default
    connectedness criterion a run succeeds when the final weight share
    reaches 1 - alpha; with ``criterion="single-cluster"`` it succeeds when
    the final partition is a single connected component.
    """
    if runs < 20:
        raise ValueError(f"runs must be at least 20, got {runs}")
    if not 0.5 < level < 1.0:
        raise ValueError(f"level must be in (0.5, 1), got {level}")
    if criterion not in ("connectedness", "single-cluster"):
        raise ValueError(f"unknown criterion {criterion!r}")
    datasets = [
        gen_uniform_ball(n, dim, seed=s).points
        for s in np.random.SeedSequence(seed).generate_state(runs)
    ]

    def rate(lam):
        return _success_rate(datasets, lam, criterion, alpha, awc_kwargs, workers)

    lo = 0.0
    hi = 0.5
    while rate(hi) < level:
        lo = hi
        hi *= 2.0
        if hi > LAMBDA_CEILING:
            raise CalibrationError(
                f"no threshold below {LAMBDA_CEILING} reaches level {level} "
                f"for n={n}, dim={dim}"
            )
    while hi - lo > LAMBDA_RESOLUTION:
        mid = (lo + hi) / 2.0
        if rate(mid) >= level:
            hi = mid
        else:
            lo = mid
    return round(math.ceil(hi / LAMBDA_RESOLUTION) * LAMBDA_RESOLUTION, 10)


def _run_sum(args):
    data, lam, awc_kwargs = args
    return sum_of_weights(run_awc(data, lam=lam, **awc_kwargs))


def sweep_lambda(
    data,
    grid,
    rel_tol: float = 0.05,
    min_len: int = 3,
    workers: int = 1,
    **awc_kwargs,
) -> SweepCurve:
    """Run the clustering once per grid threshold and record S(lambda)."""
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 8:
        raise ValueError(f"grid must have at least 8 values, got {len(grid)}")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    jobs = [(data, float(lam), awc_kwargs) for lam in grid]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            s_values = np.array(list(pool.map(_run_sum, jobs)), dtype=float)
    else:
        s_values = np.array([_run_sum(j) for j in jobs], dtype=float)
    curve = SweepCurve(lambdas=grid, s_values=s_values)
    plateaus, _ = detect_plateau(curve, rel_tol=rel_tol, min_len=min_len)
    return SweepCurve(lambdas=grid, s_values=s_values, plateaus=tuple(plateaus))


def default_lambda_grid(low: float = 0.5, high: float = 20.0, size: int = 40) -> np.ndarray:
    """Geometrically spaced threshold grid for sweeps."""
    return np.geomspace(low, high, size)


def detect_plateau(curve: SweepCurve, rel_tol: float = 0.05, min_len: int = 3):
    """Find maximal stable runs of the sweep curve.

    A plateau is a maximal run of at least ``min_len`` consecutive grid
    points whose successive relative changes |dS| / max(S, 1) stay within
    ``rel_tol``. Returns (plateaus, recommended lambda), the recommendation
    being the first plateau's smallest lambda; an empty list (and None) when
    the curve never stabilizes.
    """
    if not 0.0 < rel_tol <= 0.2:
        raise ValueError(f"rel_tol must be in (0, 0.2], got {rel_tol}")
    if min_len < 3:
        raise ValueError(f"min_len must be at least 3, got {min_len}")
    lam = curve.lambdas
    s = curve.s_values
    stable = np.abs(np.diff(s)) / np.maximum(s[:-1], 1.0) <= rel_tol
    plateaus = []
    run_start = None
    for idx in range(len(stable) + 1):
        if idx < len(stable) and stable[idx]:
            if run_start is None:
                run_start = idx
        else:
            if run_start is not None:
                end = idx  # inclusive end point of the stable run
                if end - run_start + 1 >= min_len:
                    plateaus.append(
                        Plateau(
                            start_lambda=float(lam[run_start]),
                            end_lambda=float(lam[end]),
                            mean_s=float(s[run_start : end + 1].mean()),
                            start_index=run_start,
                            end_index=end,
                        )
                    )
                run_start = None
    recommended = plateaus[0].start_lambda if plateaus else None
    return plateaus, recommended
