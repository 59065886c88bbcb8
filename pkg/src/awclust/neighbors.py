"""Distances, sorted neighbor lists, and the multiscale radii sequence.

The radii sequence h_0 <= h_1 <= ... <= h_K drives the clustering iteration:
each step widens the scale while keeping per-point neighbor counts growing at
most geometrically (factor ``a``) and radii at most geometrically (factor
``b``). Radii are drawn from a pooled set of per-point k-NN distances taken
at a geometric ladder of neighbor counts, so in homogeneous data the selected
scales track the local sample geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

__all__ = [
    "DistanceMatrix",
    "NeighborIndex",
    "RadiiSequence",
    "RadiiConstructionError",
    "pairwise_distances",
    "build_neighbor_index",
    "count_within",
    "build_radii_sequence",
]


class RadiiConstructionError(ValueError):
    """Raised when no valid radii sequence exists (degenerate geometry)."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise distances with zero diagonal."""

    n: int
    distances: np.ndarray

    def __post_init__(self):
        d = self.distances
        if d.shape != (self.n, self.n):
            raise ValueError(f"distance matrix shape {d.shape} does not match n={self.n}")


@dataclass(frozen=True)
class NeighborIndex:
    """Per-point neighbor lists sorted ascending by (distance, id).

    ``ids[i]`` and ``dists[i]`` are parallel arrays without a self entry;
    ties are broken by the smaller point id so construction is deterministic.
    """

    n: int
    ids: list
    dists: list
    cap: int | None = None

    def neighbors(self, i: int):
        """Sorted (id, distance) pairs for point i."""
        return list(zip(self.ids[i].tolist(), self.dists[i].tolist()))


def pairwise_distances(points, metric: str = "euclidean") -> DistanceMatrix:
    """Build a DistanceMatrix from coordinates or validate a precomputed one.

    With ``metric="euclidean"``, `points` is an (n, p) coordinate matrix.
    With ``metric="precomputed"``, `points` is already a square distance
    matrix and is validated (symmetric, nonnegative, zero diagonal).
    """
    arr = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("input contains non-finite values")
    if metric == "euclidean":
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError(f"need an (n, p) matrix with n >= 2, got shape {arr.shape}")
        d = squareform(pdist(arr))
        return DistanceMatrix(n=arr.shape[0], distances=d)
    if metric == "precomputed":
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"precomputed distance matrix must be square, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError("need at least 2 points")
        if not np.array_equal(arr, arr.T):
            raise ValueError("precomputed distance matrix is not symmetric")
        if np.any(arr < 0):
            raise ValueError("precomputed distance matrix has negative entries")
        if np.any(np.diag(arr) != 0):
            raise ValueError("precomputed distance matrix has a nonzero diagonal")
        return DistanceMatrix(n=arr.shape[0], distances=arr)
    raise ValueError(f"unknown metric {metric!r}")


def build_neighbor_index(dm: DistanceMatrix, cap: int | None = None) -> NeighborIndex:
    """Per-point neighbor lists sorted by distance, ties broken by smaller id."""
    if cap is not None and cap < 1:
        raise ValueError(f"cap must be positive, got {cap}")
    n = dm.n
    d = dm.distances
    ids_out = []
    dists_out = []
    all_ids = np.arange(n)
    for i in range(n):
        others = np.delete(all_ids, i)
        row = d[i, others]
        order = np.lexsort((others, row))
        if cap is not None:
            order = order[:cap]
        ids_out.append(others[order])
        dists_out.append(row[order])
    return NeighborIndex(n=n, ids=ids_out, dists=dists_out, cap=cap)


def count_within(index: NeighborIndex, i: int, h: float) -> int:
    """Number of neighbors j != i with d(i, j) <= h, by binary search."""
    if h < 0:
        raise ValueError(f"radius must be nonnegative, got {h}")
    return int(np.searchsorted(index.dists[i], h, side="right"))


@dataclass(frozen=True)
class RadiiSequence:
    """Increasing scales plus the per-point starting radius.

    ``radii[0]`` is the initial scale h_0 and ``radii[1:]`` are the update
    scales h_1 .. h_K. ``per_point_h0[i]`` is the smallest selected radius
    whose ball around point i holds at least ``n0`` neighbors; pairs are
    only retested once both endpoints' starting radii have been passed.
    """

    radii: np.ndarray
    a: float
    b: float
    n0: int
    per_point_h0: np.ndarray
    forced_steps: tuple = ()
    stopped_by_gap: bool = False

    @property
    def num_steps(self) -> int:
        """Number of update steps K (sequence length minus the initial scale)."""
        return len(self.radii) - 1


def _counts_at(sorted_dists: np.ndarray, h: float) -> np.ndarray:
    """Neighbor counts for every point at radius h."""
    return (sorted_dists <= h).sum(axis=1)


def _growth_allowance(counts: np.ndarray, a: float, n0: int) -> np.ndarray:
    # counts are integers, so a real-valued bound a*c only binds at the next
    # integer; the n0 floor lets sparse points bootstrap up to eligibility
    return np.ceil(a * np.maximum(counts, n0)).astype(np.int64)


def build_radii_sequence(
    index: NeighborIndex,
    a: float = math.sqrt(2.0),
    b: float = 1.95,
    n0: int = 6,
    h_max: float | None = None,
    phi: float = 0.95,
    min_ratio: float = 1.05,
    soft_ratio: float | None = 1.15,
) -> RadiiSequence:
    """Select the increasing radii h_0 .. h_K from pooled k-NN distances.

    Candidate radii are per-point distances to the ceil(n0 * a^l)-th
    neighbor, pooled over points and ladder levels. From the current radius
    the largest pooled candidate within the b-cap is selected such that at
    least a ``phi`` fraction of points keeps its neighbor count within the
    geometric growth allowance. When the window (h, b*h] holds no candidate
    at all, the data has a scale gap wider than one b-step and the sequence
    ends there (``stopped_by_gap``); groups separated by more than the last
    radius are left to connected-component recovery. When no candidate in a
    nonempty window obeys the allowance (tied distances jump counts
    atomically), the smallest one is taken anyway and recorded in
    ``forced_steps``.

    Growth is geometric from below as well: candidates closer than
    ``min_ratio`` times the current radius are skipped so the number of
    steps stays logarithmic in n, and radius jumps are softly capped at
    ``soft_ratio`` (default a, the ratio at which even one-dimensional
    neighbor growth exhausts the count budget) so the per-step scale
    increment stays commensurate across differently shaped regions.
    """
    if not 1.0 < a <= 2.0:
        raise ValueError(f"a must be in (1, 2], got {a}")
    if not 1.0 < b < 2.0:
        raise ValueError(f"b must be in (1, 2), got {b}")
    if n0 < 1:
        raise ValueError(f"n0 must be positive, got {n0}")
    n = index.n
    if n0 >= n:
        raise ValueError(f"n0={n0} must be smaller than the point count n={n}")
    if not 0.0 < phi <= 1.0:
        raise ValueError(f"phi must be in (0, 1], got {phi}")
    if not 1.0 < min_ratio < b:
        raise ValueError(f"min_ratio must be in (1, b), got {min_ratio}")
    if soft_ratio is None:
        soft_ratio = a
    soft_ratio = min(max(soft_ratio, min_ratio), b)

    list_len = min(len(d) for d in index.dists)
    if list_len < n0:
        raise ValueError(f"neighbor lists of length {list_len} cannot support n0={n0}")

    # geometric ladder of neighbor counts, n0, ceil(n0*a), ..., capped at list length
    ladder = []
    level = 0
    while True:
        c = min(int(math.ceil(n0 * a**level)), list_len)
        if not ladder or c > ladder[-1]:
            ladder.append(c)
        if c >= list_len:
            break
        level += 1
    ladder = np.array(ladder, dtype=np.int64)

    sorted_dists = np.vstack([d[:list_len] for d in index.dists])
    pooled = np.unique(sorted_dists[:, ladder - 1].ravel())
    pooled = pooled[pooled > 0.0]
    if pooled.size == 0:
        offender = int(np.argmax([np.all(d == 0.0) for d in index.dists]))
        raise RadiiConstructionError(
            f"all pooled candidate radii are zero (duplicated points); first offender: point {offender}",
            point=offender,
        )

    h_cap = float(pooled[-1]) if h_max is None else float(h_max)
    if h_cap <= 0:
        raise ValueError(f"h_max must be positive, got {h_cap}")
    pooled = pooled[pooled <= h_cap]
    if pooled.size == 0:
        raise RadiiConstructionError(f"no candidate radius lies below h_max={h_cap}")

    min_valid = int(math.ceil(phi * n))
    radii = [float(pooled[0])]
    counts_prev = _counts_at(sorted_dists, radii[0])
    forced = []
    stopped_by_gap = False
    pos = 1  # pooled index of the first candidate above the current radius

    while radii[-1] < h_cap and pos < pooled.size:
        h_prev = radii[-1]
        hard_hi = min(b * h_prev, h_cap)
        lo = pos
        hi_hard = int(np.searchsorted(pooled, hard_hi, side="right"))
        if lo >= hi_hard:
            stopped_by_gap = True
            break
        # preferred window: at least min_ratio, softly capped at soft_ratio
        lo_pref = int(np.searchsorted(pooled, min_ratio * h_prev, side="left"))
        hi_soft = int(np.searchsorted(pooled, min(soft_ratio * h_prev, h_cap), side="right"))
        allowance = _growth_allowance(counts_prev, a, n0)

        def n_valid(h):
            return int(np.count_nonzero(_counts_at(sorted_dists, h) <= allowance))

        if lo_pref >= hi_hard:
            # only candidates below min_ratio remain before the hard cap:
            # take the largest of them (a deliberately small final step)
            chosen = hi_hard - 1
        elif n_valid(pooled[hi_hard - 1]) >= min_valid:
            # neighbor counts are saturated (even the full b-jump stays
            # within the growth allowance): no reason to subdivide the step
            chosen = hi_hard - 1
        elif lo_pref >= hi_soft:
            # nothing between min_ratio and soft_ratio: single jump to the
            # nearest candidate within the hard cap
            chosen = lo_pref
        elif n_valid(pooled[lo_pref]) >= min_valid:
            # validity is monotone nonincreasing in h, so binary search the
            # largest candidate index in [lo_pref, hi_soft) that passes
            lo_ok, hi_try = lo_pref, hi_soft - 1
            while lo_ok < hi_try:
                mid = (lo_ok + hi_try + 1) // 2
                if n_valid(pooled[mid]) >= min_valid:
                    lo_ok = mid
                else:
                    hi_try = mid - 1
            chosen = lo_ok
        else:
            # even the smallest preferred candidate violates the allowance
            # (tied distances with atomic count jumps): advance minimally
            chosen = lo_pref
            forced.append(len(radii))
        radii.append(float(pooled[chosen]))
        counts_prev = _counts_at(sorted_dists, radii[-1])
        pos = chosen + 1

    radii_arr = np.array(radii)

    # smallest selected radius giving every point at least n0 neighbors
    need = sorted_dists[:, n0 - 1]
    h0_idx = np.searchsorted(radii_arr, need, side="left")
    if np.any(h0_idx >= len(radii_arr)):
        offender = int(np.argmax(h0_idx >= len(radii_arr)))
        raise RadiiConstructionError(
            f"point {offender} never reaches {n0} neighbors within h_max={h_cap}",
            point=offender,
        )
    per_point_h0 = radii_arr[h0_idx]

    return RadiiSequence(
        radii=radii_arr,
        a=a,
        b=b,
        n0=n0,
        per_point_h0=per_point_h0,
        forced_steps=tuple(forced),
        stopped_by_gap=stopped_by_gap,
    )
