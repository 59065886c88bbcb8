"""Dataset ingestion, synthetic generators, and result writers.

CSV is the single interchange format: UTF-8, comma-separated, LF line
endings, lines starting with '#' ignored. Sparse document collections use
"doc_id term_id count" triplets. All generators draw from numpy's PCG64
generator seeded through SeedSequence, so outputs are reproducible across
platforms for a given seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import ClusteringResult
from .neighbors import DistanceMatrix, pairwise_distances

__all__ = [
    "Dataset",
    "SparseDocMatrix",
    "DataFormatError",
    "load_points_csv",
    "load_distance_csv",
    "load_labels_csv",
    "tfidf",
    "gen_uniform_ball",
    "gen_gaussian_pair",
    "gen_hole_dataset",
    "gen_ring_ball",
    "gen_manifold_circle",
    "write_points_csv",
    "write_labels_csv",
    "write_weights_csv",
]


class DataFormatError(ValueError):
    """Malformed input file; carries the offending location when known."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Dataset:
    """Points or a precomputed distance matrix, with optional true labels."""

    points: np.ndarray | None
    distances: DistanceMatrix | None
    labels: np.ndarray | None
    provenance: str

    @property
    def n(self) -> int:
        if self.points is not None:
            return self.points.shape[0]
        return self.distances.n


@dataclass(frozen=True)
class SparseDocMatrix:
    """Nonnegative term frequencies, docs by terms, stored sparsely."""

    counts: sp.csr_matrix

    def __post_init__(self):
        doc_totals = np.asarray(self.counts.sum(axis=1)).ravel()
        if np.any(doc_totals == 0):
            empty = int(np.argmax(doc_totals == 0))
            raise DataFormatError(f"document {empty} has no terms", row=empty)
        if self.counts.nnz and self.counts.data.min() < 0:
            raise DataFormatError("negative term count")


def _data_rows(path):
    """Yield (line_number, raw_line) skipping comments and blank lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, stripped


def load_points_csv(path, has_header: bool = False, label_column: str | int | None = None) -> Dataset:
    """Load a rectangular numeric CSV, one point per row.

    ``label_column`` (name with ``has_header``, else an index) is split off
    as the true labels. Ragged rows and non-numeric cells are reported with
    their location.
    """
    rows = []
    header = None
    label_idx = None
    for lineno, line in _data_rows(path):
        cells = next(csv.reader([line]))
        if header is None and has_header:
            header = cells
            if label_column is not None:
                if isinstance(label_column, str):
                    if label_column not in header:
                        raise DataFormatError(f"label column {label_column!r} not in header")
                    label_idx = header.index(label_column)
                else:
                    label_idx = int(label_column)
            continue
        rows.append((lineno, cells))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    if label_column is not None and label_idx is None:
        label_idx = int(label_column)

    width = len(rows[0][1])
    points = []
    labels = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise DataFormatError(
                f"{path}: ragged row at line {lineno} ({len(cells)} cells, expected {width})",
                row=lineno,
            )
        if label_idx is not None:
            labels.append(cells[label_idx])
            cells = cells[:label_idx] + cells[label_idx + 1 :]
        try:
            points.append([float(c) for c in cells])
        except ValueError:
            bad = next(i for i, c in enumerate(cells) if not _is_number(c))
            raise DataFormatError(
                f"{path}: non-numeric cell at line {lineno}, column {bad}",
                row=lineno,
                column=bad,
            ) from None
    pts = np.array(points)
    if not np.all(np.isfinite(pts)):
        raise DataFormatError(f"{path}: non-finite value in points")
    lab = None
    if labels:
        lab = np.array([_canon_label(v) for v in labels])
    return Dataset(points=pts, distances=None, labels=lab, provenance="csv")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _canon_label(value: str):
    try:
        return int(float(value))
    except ValueError:
        return value


def load_distance_csv(path) -> Dataset:
    """Load and validate a square distance matrix CSV.

    Asymmetries within 1e-9 relative are averaged away, the diagonal must
    be zero to within 1e-12, and entries must be nonnegative.
    """
    ds = load_points_csv(path)
    m = ds.points
    if m.shape[0] != m.shape[1]:
        raise DataFormatError(f"{path}: distance matrix must be square, got {m.shape}")
    if np.any(m < 0):
        raise DataFormatError(f"{path}: negative distance entry")
    scale = max(float(np.abs(m).max()), 1.0)
    if np.abs(m - m.T).max() > 1e-9 * scale:
        raise DataFormatError(f"{path}: asymmetric beyond 1e-9 relative tolerance")
    m = (m + m.T) / 2.0
    if np.abs(np.diag(m)).max() > 1e-12:
        raise DataFormatError(f"{path}: nonzero diagonal")
    np.fill_diagonal(m, 0.0)
    dm = pairwise_distances(m, metric="precomputed")
    return Dataset(points=None, distances=dm, labels=None, provenance="distance-csv")


def load_labels_csv(path) -> np.ndarray:
    """Read a (point_id, cluster_id) CSV into a label array ordered by id."""
    pairs = []
    for lineno, line in _data_rows(path):
        cells = next(csv.reader([line]))
        if len(cells) != 2:
            raise DataFormatError(f"{path}: expected 2 columns at line {lineno}", row=lineno)
        if not _is_number(cells[0]):
            raise DataFormatError(f"{path}: non-numeric point id at line {lineno}", row=lineno)
        pairs.append((int(float(cells[0])), _canon_label(cells[1])))
    if not pairs:
        raise DataFormatError(f"{path}: no data rows")
    pairs.sort()
    ids = [p for p, _ in pairs]
    if ids != list(range(len(ids))):
        raise DataFormatError(f"{path}: point ids must be 0..n-1 without gaps")
    return np.array([lab for _, lab in pairs])


def tfidf(docs: SparseDocMatrix) -> sp.csr_matrix:
    """TF-IDF transform: x_ij = tf_ij * (log(1+n) - log(1+n_j) + 1).

    Zeros stay zeros, so the sparsity pattern is preserved.
    """
    counts = docs.counts
    n = counts.shape[0]
    docs_per_term = np.asarray((counts > 0).sum(axis=0)).ravel()
    idf = np.log(1.0 + n) - np.log(1.0 + docs_per_term) + 1.0
    out = counts.tocsc(copy=True).astype(float)
    out.data *= np.repeat(idf, np.diff(out.indptr))
    return out.tocsr()


def gen_uniform_ball(n: int, dim: int = 2, seed: int = 0) -> Dataset:
    """Uniform sample in the unit ball via direction times radius^(1/dim)."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / dim)
    return Dataset(points=g * r, distances=None, labels=None, provenance="synthetic:uniform-ball")


def gen_gaussian_pair(n_per_cluster: int, dim: int = 2, distance: float = 3.0, seed: int = 0) -> Dataset:
    """Two standard Gaussian clusters with means 0 and distance*e1, labeled 0/1."""
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    a = rng.standard_normal((n_per_cluster, dim))
    b = rng.standard_normal((n_per_cluster, dim))
    b[:, 0] += distance
    labels = np.concatenate([np.zeros(n_per_cluster, dtype=int), np.ones(n_per_cluster, dtype=int)])
    return Dataset(
        points=np.vstack([a, b]), distances=None, labels=labels, provenance="synthetic:two-gauss"
    )


def gen_hole_dataset(n: int, epsilon: float, seed: int = 0) -> Dataset:
    """Points on the 3 x 2 rectangle with a lower-density middle strip.

    The three unit-width vertical strips have density proportions
    1 : (1 - epsilon) : 1; strip membership (0, 1, 2) is the label.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    weights = np.array([1.0, 1.0 - epsilon, 1.0])
    strip = rng.choice(3, size=n, p=weights / weights.sum())
    x = strip + rng.uniform(0.0, 1.0, n)
    y = rng.uniform(0.0, 2.0, n)
    return Dataset(
        points=np.c_[x, y], distances=None, labels=strip.astype(int), provenance="synthetic:hole"
    )


def gen_ring_ball(n_ball: int, n_ring: int, seed: int = 0) -> Dataset:
    """Uniform unit disk surrounded by a uniform annulus on [1.5, 1.8]."""
    if n_ball < 1 or n_ring < 1:
        raise ValueError("counts must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    th = rng.uniform(0.0, 2.0 * np.pi, n_ball)
    r = np.sqrt(rng.uniform(0.0, 1.0, n_ball))
    ball = np.c_[r * np.cos(th), r * np.sin(th)]
    th = rng.uniform(0.0, 2.0 * np.pi, n_ring)
    r = np.sqrt(rng.uniform(1.5**2, 1.8**2, n_ring))
    ring = np.c_[r * np.cos(th), r * np.sin(th)]
    labels = np.concatenate([np.zeros(n_ball, dtype=int), np.ones(n_ring, dtype=int)])
    return Dataset(
        points=np.vstack([ball, ring]), distances=None, labels=labels, provenance="synthetic:ring-ball"
    )


def gen_manifold_circle(n: int, ambient_dim: int = 10, noise_sigma: float = 0.05, seed: int = 0) -> Dataset:
    """Unit circle in the first two of ambient_dim coordinates plus isotropic noise."""
    if ambient_dim < 2:
        raise ValueError("ambient_dim must be at least 2")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = np.zeros((n, ambient_dim))
    pts[:, 0] = np.cos(th)
    pts[:, 1] = np.sin(th)
    pts += noise_sigma * rng.standard_normal((n, ambient_dim))
    return Dataset(points=pts, distances=None, labels=None, provenance="synthetic:circle")


def write_points_csv(dataset: Dataset, path) -> None:
    """Write points (and labels, as the last column) one row per point."""
    if dataset.points is None:
        raise ValueError("dataset has no coordinate representation")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, row in enumerate(dataset.points):
            cells = [repr(float(v)) for v in row]
            if dataset.labels is not None:
                cells.append(str(dataset.labels[i]))
            fh.write(",".join(cells) + "\n")


def write_labels_csv(result: ClusteringResult, path) -> None:
    """Write (point_id, cluster_id) rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, lab in enumerate(result.labels):
            fh.write(f"{i},{int(lab)}\n")


def write_weights_csv(result: ClusteringResult, path) -> None:
    """Write positive upper-triangle weights as (i, j, 1) triplets."""
    codes = result.weights.positive_pair_codes()
    n = result.weights.n
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in codes:
            fh.write(f"{int(c // n)},{int(c % n)},1\n")
