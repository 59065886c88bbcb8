"""Scalar statistical and geometric kernels.

Bernoulli Kullback-Leibler divergence, its symmetrized form, the regularized
incomplete beta function, and the ball-overlap volume ratio ``q(t)`` used as
the null reference of the gap test. ``q(t)`` is the ratio of the volume of
the intersection of two equal balls at center distance ``t * radius`` to the
volume of their union; it depends only on ``t`` and the space dimension and
is tabulated once per run for fast lookup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "kl_bernoulli",
    "kl_bernoulli_sym",
    "regularized_incomplete_beta",
    "q_overlap",
    "QTable",
    "build_q_table",
]

# q values are clamped below 1 before entering KL, which requires eta < 1.
Q_CLAMP = 1.0 - 1e-12


def kl_bernoulli(theta: float, eta: float) -> float:
    """KL divergence between Bernoulli(theta) and Bernoulli(eta).

    Uses the convention 0*log(0) = 0, so theta may sit on the boundary
    of [0, 1] while eta must stay strictly inside (0, 1).
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must be in the open interval (0, 1), got {eta}")
    result = 0.0
    if theta > 0.0:
        result += theta * math.log(theta / eta)
    if theta < 1.0:
        result += (1.0 - theta) * math.log((1.0 - theta) / (1.0 - eta))
    return result


def kl_bernoulli_sym(theta: float, eta: float) -> float:
    """Symmetrized Bernoulli KL divergence, (KL(theta,eta) + KL(eta,theta)) / 2.

    Evaluated in closed form as (theta-eta)*log(theta*(1-eta)/((1-theta)*eta))/2.
    Both arguments must lie strictly inside (0, 1).
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must be in the open interval (0, 1), got {theta}")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must be in the open interval (0, 1), got {eta}")
    if theta == eta:
        return 0.0
    return 0.5 * (theta - eta) * math.log(theta * (1.0 - eta) / ((1.0 - theta) * eta))


def _betacf(a: float, b: float, x: float, tol: float = 1e-14, max_iter: int = 500) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError(f"incomplete beta continued fraction failed to converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b) = B(x, a, b) / B(a, b).

    Continued-fraction evaluation with the symmetry switch at
    x = (a + 1) / (a + b + 2), accurate to better than 1e-10 absolute.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def q_overlap(t: float, dim: int) -> float:
    """Overlap-to-union volume ratio of two equal balls at center distance t*radius.

    For t in [0, 2) this equals I/(2 - I) with I = I_x((p+1)/2, 1/2) at
    x = 1 - t^2/4 and p = dim; for t >= 2 the balls are disjoint and the
    ratio is 0. Strictly decreasing in t and in dim.
    """
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")
    if t >= 2.0:
        return 0.0
    x = 1.0 - t * t / 4.0
    i_x = regularized_incomplete_beta(x, (dim + 1) / 2.0, 0.5)
    return i_x / (2.0 - i_x)


@dataclass(frozen=True)
class QTable:
    """Tabulated q(t) on a uniform grid of [0, 2) for one dimension.

    Immutable after construction and safe to share across workers. Lookup is
    linear interpolation; queries at t >= 2 return 0 (disjoint balls).
    """

    dim: int
    grid: np.ndarray
    values: np.ndarray
    _grid_ext: np.ndarray = field(init=False, repr=False)
    _values_ext: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # extend with q(2) = 0 so interpolation covers the last grid cell
        object.__setattr__(self, "_grid_ext", np.append(self.grid, 2.0))
        object.__setattr__(self, "_values_ext", np.append(self.values, 0.0))

    def __call__(self, t):
        """Interpolated q at scalar or array t."""
        return np.interp(t, self._grid_ext, self._values_ext)


def build_q_table(dim: int, resolution: int = 8192) -> QTable:
    """Tabulate q_overlap for `dim` on a uniform grid of [0, 2)."""
    if dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    grid = np.arange(resolution) * (2.0 / resolution)
    values = np.array([q_overlap(t, dim) for t in grid])
    return QTable(dim=dim, grid=grid, values=values)
