"""Discrete Gaussian free field on a square grid and its exponential metric.

The field vanishes on the boundary and has covariance L^{-1} on interior
nodes, L being the 5-point Dirichlet Laplacian ``4 I - adjacency``. Sampling
uses the orthonormal sine transform that diagonalises L. Distances are
shortest paths with edge weight ``spacing * exp(gamma/4 * mean(h_u, h_v))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import idstn
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import InvalidSpec

GAMMA = math.sqrt(8.0 / 3.0)


@dataclass(frozen=True)
class GridField:
    h: np.ndarray
    gamma: float = GAMMA

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 3:
            raise InvalidSpec("field must be an n x n array with n >= 3")
        if not 0.0 < self.gamma < 2.0:
            raise InvalidSpec("gamma must lie in (0, 2)")
        if not np.all(np.isfinite(h)):
            raise InvalidSpec("field values must be finite")
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def q_const(self) -> float:
        return 2.0 / self.gamma + self.gamma / 2.0

    def shifted(self, r: float) -> "GridField":
        """Field plus a constant everywhere (boundary included)."""
        return replace(self, h=self.h + r)


def laplacian_eigenvalues(m: int) -> np.ndarray:
    """Eigenvalues of the interior Dirichlet Laplacian on an m x m block."""
    k = np.arange(1, m + 1)
    lam1 = 2.0 - 2.0 * np.cos(np.pi * k / (m + 1))
    return lam1[:, None] + lam1[None, :]


def sample_gff(n: int, seed: int, size: int | None = None, gamma: float = GAMMA):
    """Zero-boundary discrete GFF on an n x n grid (``size`` fields when given)."""
    if n < 3:
        raise InvalidSpec("grid side must be >= 3")
    m = n - 2
    rng = np.random.default_rng(seed)
    shape = (m, m) if size is None else (size, m, m)
    xi = rng.standard_normal(shape)
    coef = xi / np.sqrt(laplacian_eigenvalues(m))
    interior = idstn(coef, type=1, norm="ortho", axes=(-2, -1))
    h = np.zeros(shape[:-2] + (n, n))
    h[..., 1:-1, 1:-1] = interior
    if size is None:
        return GridField(h, gamma)
    return [GridField(x, gamma) for x in h]


def green_matrix(n: int) -> np.ndarray:
    """Exact interior covariance L^{-1} by a dense solve (row-major interior order)."""
    m = n - 2
    size = m * m
    lap = 4.0 * np.eye(size)
    for i in range(m):
        for j in range(m):
            k = i * m + j
            if i + 1 < m:
                lap[k, k + m] = lap[k + m, k] = -1.0
            if j + 1 < m:
                lap[k, k + 1] = lap[k + 1, k] = -1.0
    return np.linalg.solve(lap, np.eye(size))


def _edges(field: GridField):
    n = field.n
    idx = np.arange(n * n).reshape(n, n)
    h = field.h
    scale = field.gamma / 4.0
    src, dst, w = [], [], []
    for a, b, ha, hb in (
        (idx[:, :-1], idx[:, 1:], h[:, :-1], h[:, 1:]),
        (idx[:-1, :], idx[1:, :], h[:-1, :], h[1:, :]),
    ):
        src.append(a.ravel())
        dst.append(b.ravel())
        w.append(field.spacing * np.exp(scale * 0.5 * (ha + hb)).ravel())
    return np.concatenate(src), np.concatenate(dst), np.concatenate(w)


def edge_graph(field: GridField):
    s, d, w = _edges(field)
    n2 = field.n**2
    return coo_matrix((np.concatenate([w, w]), (np.concatenate([s, d]), np.concatenate([d, s]))), shape=(n2, n2)).tocsr()


def _node(field: GridField, p) -> int:
    i, j = p
    if not (0 <= i < field.n and 0 <= j < field.n):
        raise InvalidSpec(f"node {p} is off the grid")
    return int(i) * field.n + int(j)


def lqg_distance(field: GridField, a, b) -> float:
    graph = edge_graph(field)
    dist = dijkstra(graph, directed=False, indices=_node(field, a))
    return float(dist[_node(field, b)])


def distances_from(field: GridField, sources: Sequence) -> np.ndarray:
    """Rows of shortest-path distances from each source to every node."""
    graph = edge_graph(field)
    return dijkstra(graph, directed=False, indices=[_node(field, p) for p in sources])


@dataclass(frozen=True)
class ScalingReport:
    r: float
    factor: float
    max_rel_residual: float
    n_pairs: int

    @property
    def passed(self) -> bool:
        return self.max_rel_residual <= 1e-12


def scaling_check(field: GridField, r: float, pairs: Iterable | None = None, n_pairs: int = 10, seed: int = 0) -> ScalingReport:
    """Compare distances of field + r with exp(gamma r / 4) times the originals."""
    if not math.isfinite(r):
        raise InvalidSpec("shift r must be finite")
    if pairs is None:
        rng = np.random.default_rng(seed)
        pts = rng.integers(0, field.n, size=(n_pairs, 2, 2))
        pairs = [(tuple(p[0]), tuple(p[1])) for p in pts]
    pairs = list(pairs)
    factor = math.exp(field.gamma * r / 4.0)
    shifted = field.shifted(r)
    base_d = distances_from(field, [a for a, _ in pairs])
    shift_d = distances_from(shifted, [a for a, _ in pairs])
    worst = 0.0
    for k, (a, b) in enumerate(pairs):
        j = _node(field, b)
        lhs, rhs = shift_d[k, j], factor * base_d[k, j]
        if rhs == 0:
            res = abs(lhs)
        else:
            res = abs(lhs - rhs) / abs(rhs)
        worst = max(worst, float(res))
    return ScalingReport(r, factor, worst, len(pairs))


def quantum_area(field: GridField, region=None) -> float:
    """Sum over cells of exp(gamma * mean corner value) * cell area.

    ``region`` is a boolean mask over the (n-1) x (n-1) cells, or ``None``
    for the whole square.
    """
    h = field.h
    cell = 0.25 * (h[:-1, :-1] + h[1:, :-1] + h[:-1, 1:] + h[1:, 1:])
    dens = np.exp(field.gamma * cell) * field.spacing**2
    if region is None:
        return float(dens.sum())
    mask = np.asarray(region, dtype=bool)
    if mask.shape != dens.shape:
        raise InvalidSpec(f"region mask must have shape {dens.shape}")
    return float(dens[mask].sum())
