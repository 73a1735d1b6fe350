"""Simplicial complexes over the rationals: boundaries, homology maps,
alternating traces, Lefschetz numbers and barycentric subdivision.

Simplices are sorted vertex tuples and carry the orientation of that order.
All linear algebra is exact (sympy ``DomainMatrix`` over QQ).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from .errors import InvalidComplex, NotAChainMap, NotSimplicial


def _dm_zeros(rows: int, cols: int) -> DomainMatrix:
    return DomainMatrix.zeros((rows, cols), QQ)


def _dm(rows: Sequence[Sequence], n_rows: int, n_cols: int) -> DomainMatrix:
    if n_rows == 0 or n_cols == 0:
        return _dm_zeros(n_rows, n_cols)
    return DomainMatrix.from_list([[QQ(int(x.numerator), int(x.denominator)) if isinstance(x, Fraction) else QQ(x) for x in r] for r in rows], QQ)


def _trace(m: DomainMatrix) -> Fraction:
    if m.shape[0] == 0:
        return Fraction(0)
    return sum((to_fraction(x) for x in m.diagonal()), Fraction(0))


def to_fraction(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


def dm_to_fractions(m: DomainMatrix) -> list[list[Fraction]]:
    if m.shape[0] == 0:
        return []
    if m.shape[1] == 0:
        return [[] for _ in range(m.shape[0])]
    return [[to_fraction(x) for x in row] for row in m.to_list()]


def perm_sign(seq: Sequence) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries)."""
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                sign = -sign
    return sign


@dataclass
class SimplicialComplex:
    simplices: list[list[tuple]]  # simplices[m] = sorted list of m-simplices

    def __post_init__(self):
        if not self.simplices or not self.simplices[0]:
            raise InvalidComplex("complex needs at least one vertex")
        present = set()
        for m, level in enumerate(self.simplices):
            for s in level:
                if len(s) != m + 1 or list(s) != sorted(set(s)):
                    raise InvalidComplex(f"{s} is not a sorted {m}-simplex")
                present.add(s)
        for m, level in enumerate(self.simplices[1:], start=1):
            for s in level:
                for face in itertools.combinations(s, m):
                    if face not in present:
                        raise InvalidComplex(f"face {face} of {s} is missing")
        self.index = [{s: k for k, s in enumerate(level)} for level in self.simplices]

    @classmethod
    def from_maximal(cls, maximal: Iterable[Iterable]) -> "SimplicialComplex":
        faces: set[tuple] = set()
        for simplex in maximal:
            s = tuple(sorted(set(simplex)))
            if not s:
                raise InvalidComplex("empty simplex")
            for k in range(1, len(s) + 1):
                faces.update(itertools.combinations(s, k))
        top = max(len(f) for f in faces)
        return cls([sorted(f for f in faces if len(f) == m + 1) for m in range(top)])

    @property
    def dim(self) -> int:
        return len(self.simplices) - 1

    @property
    def vertices(self) -> list:
        return [s[0] for s in self.simplices[0]]

    def count(self, m: int) -> int:
        return len(self.simplices[m]) if 0 <= m <= self.dim else 0

    def contains(self, simplex: Iterable) -> bool:
        s = tuple(sorted(set(simplex)))
        m = len(s) - 1
        return 0 <= m <= self.dim and s in self.index[m]

    def euler_characteristic(self) -> int:
        return sum((-1) ** m * len(level) for m, level in enumerate(self.simplices))


def boundary_matrices(cx: SimplicialComplex) -> dict[int, DomainMatrix]:
    """{m: boundary C_m -> C_{m-1}} for m = 0..dim+1 (the ends are zero maps)."""
    out = {0: _dm_zeros(0, cx.count(0))}
    for m in range(1, cx.dim + 1):
        rows = [[0] * cx.count(m) for _ in range(cx.count(m - 1))]
        for col, s in enumerate(cx.simplices[m]):
            for k in range(m + 1):
                face = s[:k] + s[k + 1 :]
                rows[cx.index[m - 1][face]][col] = (-1) ** k
        out[m] = _dm(rows, cx.count(m - 1), cx.count(m))
    out[cx.dim + 1] = _dm_zeros(cx.count(cx.dim), 0)
    return out


@dataclass
class ChainMap:
    """Square rational matrices ``maps[m]`` acting on C_m (columns are images)."""

    maps: dict[int, DomainMatrix]

    def __getitem__(self, m):
        return self.maps[m]

    def compose(self, other: "ChainMap") -> "ChainMap":
        """self after other."""
        return ChainMap({m: self.maps[m] * other.maps[m] for m in self.maps})


def identity_map(cx: SimplicialComplex) -> ChainMap:
    return ChainMap({m: DomainMatrix.eye(cx.count(m), QQ) for m in range(cx.dim + 1)})


def check_chain_map(cx_src: SimplicialComplex, cx_dst: SimplicialComplex, cmap: ChainMap) -> None:
    b_src = boundary_matrices(cx_src)
    b_dst = boundary_matrices(cx_dst)
    for m in range(1, cx_src.dim + 1):
        if m > cx_dst.dim:
            if not cmap.maps.get(m, _dm_zeros(0, cx_src.count(m))).is_zero_matrix:
                raise NotAChainMap(f"non-zero map in degree {m} beyond target dimension")
            continue
        lhs = b_dst[m] * cmap[m]
        rhs = cmap[m - 1] * b_src[m]
        if lhs != rhs:
            raise NotAChainMap(f"boundary does not commute in degree {m}")


def simplicial_chain_map(src: SimplicialComplex, dst: SimplicialComplex, vertex_map: Mapping) -> ChainMap:
    """Chain map of a vertex map; degenerate images map to zero."""
    maps = {}
    for m in range(src.dim + 1):
        n_dst = dst.count(m)
        rows = [[0] * src.count(m) for _ in range(n_dst)]
        for col, s in enumerate(src.simplices[m]):
            image = [vertex_map[v] for v in s]
            if not dst.contains(image):
                raise NotSimplicial(f"{s} maps to {tuple(image)}, which is not a simplex")
            if len(set(image)) < len(image):
                continue
            rows[dst.index[m][tuple(sorted(image))]][col] = perm_sign(image)
        maps[m] = _dm(rows, n_dst, src.count(m))
    return ChainMap(maps)


# ---------------------------------------------------------------------------
# Homology
# ---------------------------------------------------------------------------


def _column_basis(m: DomainMatrix) -> DomainMatrix:
    if m.shape[1] == 0 or m.shape[0] == 0:
        return _dm_zeros(m.shape[0], 0)
    _, pivots = m.rref()
    return m.extract(list(range(m.shape[0])), list(pivots)) if pivots else _dm_zeros(m.shape[0], 0)


def _kernel_basis(m: DomainMatrix, n: int) -> DomainMatrix:
    """Columns spanning the kernel of an (r x n) matrix."""
    if n == 0:
        return _dm_zeros(0, 0)
    if m.shape[0] == 0:
        return DomainMatrix.eye(n, QQ)
    ns = m.nullspace()
    if ns.shape[0] == 0:
        return _dm_zeros(n, 0)
    return ns.transpose()


@dataclass
class HomologyBasis:
    """Cycle representatives ``reps`` completing a boundary basis ``bnd``."""

    bnd: DomainMatrix
    reps: DomainMatrix

    @property
    def rank(self) -> int:
        return self.reps.shape[1]

    def coordinates(self, cycles: DomainMatrix) -> DomainMatrix:
        """Homology coordinates of cycle columns (boundary part dropped)."""
        nb, nh = self.bnd.shape[1], self.reps.shape[1]
        if nh == 0 or cycles.shape[1] == 0:
            return _dm_zeros(nh, cycles.shape[1])
        basis = self.bnd.hstack(self.reps) if nb else self.reps
        aug = basis.hstack(cycles)
        red, pivots = aug.rref()
        if tuple(pivots[: nb + nh]) != tuple(range(nb + nh)) or len(pivots) > nb + nh:
            raise NotAChainMap("image of a cycle is not a cycle")
        return red.extract(list(range(nb, nb + nh)), list(range(nb + nh, aug.shape[1])))


def homology_bases(cx: SimplicialComplex) -> dict[int, HomologyBasis]:
    bd = boundary_matrices(cx)
    out = {}
    for m in range(cx.dim + 1):
        n = cx.count(m)
        z = _kernel_basis(bd[m], n)
        b = _column_basis(bd[m + 1])
        if z.shape[1] == 0:
            out[m] = HomologyBasis(b, _dm_zeros(n, 0))
            continue
        stacked = b.hstack(z) if b.shape[1] else z
        _, pivots = stacked.rref()
        extra = [p for p in pivots if p >= b.shape[1]]
        reps = stacked.extract(list(range(n)), extra) if extra else _dm_zeros(n, 0)
        out[m] = HomologyBasis(b, reps)
    return out


def betti_numbers(cx: SimplicialComplex) -> list[int]:
    return [hb.rank for _, hb in sorted(homology_bases(cx).items())]


def homology_map(cx: SimplicialComplex, cmap: ChainMap, bases: dict | None = None) -> dict[int, DomainMatrix]:
    """Matrices of the induced maps on H_m(cx; Q) in the chosen bases."""
    check_chain_map(cx, cx, cmap)
    bases = bases or homology_bases(cx)
    return {m: hb.coordinates(cmap[m] * hb.reps) if hb.rank else _dm_zeros(0, 0) for m, hb in bases.items()}


@dataclass(frozen=True)
class LefschetzReport:
    chain_trace_alt: Fraction
    homology_trace_alt: Fraction
    homology_traces: tuple[Fraction, ...] = ()
    homotopy_check: Fraction | None = None

    @property
    def lefschetz(self) -> Fraction:
        return self.homology_trace_alt

    @property
    def fixed_point_forced(self) -> bool:
        return self.homology_trace_alt != 0

    @property
    def hopf_holds(self) -> bool:
        return self.chain_trace_alt == self.homology_trace_alt


def hopf_trace_check(cx: SimplicialComplex, cmap: ChainMap) -> LefschetzReport:
    """Alternating chain-level and homology-level traces, both exact."""
    hom = homology_map(cx, cmap)
    chain = sum(((-1) ** m * _trace(cmap[m]) for m in range(cx.dim + 1)), Fraction(0))
    traces = tuple(_trace(hom[m]) for m in range(cx.dim + 1))
    homology = sum(((-1) ** m * t for m, t in enumerate(traces)), Fraction(0))
    return LefschetzReport(chain, homology, traces)


def lefschetz_number(cx: SimplicialComplex, vertex_map: Mapping, subdivision_rounds: int = 1) -> LefschetzReport:
    """Lefschetz number of a simplicial self-map, with a subdivision spot check.

    The spot check recomputes the homology trace of f o pi o sub, where sub
    is the subdivision chain map and pi sends each barycentre to the last
    vertex of its simplex; that composite is homotopic to f.
    """
    cmap = simplicial_chain_map(cx, cx, vertex_map)
    rep = hopf_trace_check(cx, cmap)
    check = None
    if subdivision_rounds:
        sd = barycentric_subdivide(cx, subdivision_rounds)
        pi = simplicial_chain_map(sd.complex, cx, sd.last_vertex_map())
        composite = ChainMap({m: cmap[m] * pi[m] * sd.chain_map[m] for m in range(cx.dim + 1)})
        check = hopf_trace_check(cx, composite).homology_trace_alt
    return LefschetzReport(rep.chain_trace_alt, rep.homology_trace_alt, rep.homology_traces, check)


# ---------------------------------------------------------------------------
# Barycentric subdivision
# ---------------------------------------------------------------------------


@dataclass
class Subdivision:
    complex: SimplicialComplex
    chain_map: ChainMap  # C(original) -> C(subdivided)
    coords: dict  # new vertex -> barycentric coordinates over original vertices
    carriers: dict  # new vertex -> original simplex whose barycentre it is (last round)
    base: SimplicialComplex

    def last_vertex_map(self) -> dict:
        """Each new vertex to the largest original vertex of its carrier (all rounds)."""
        out = {}
        for v, c in self.coords.items():
            support = [self.base.vertices[k] for k, x in enumerate(c) if x != 0]
            out[v] = max(support)
        return out

    def mesh(self) -> float:
        """Longest edge with original vertices placed at the standard basis."""
        best = Fraction(0)
        for a, b in self.complex.simplices[1] if self.complex.dim >= 1 else []:
            d2 = sum(((x - y) ** 2 for x, y in zip(self.coords[a], self.coords[b])), Fraction(0))
            best = max(best, d2)
        return math.sqrt(best)


def _subdivide_once(cx: SimplicialComplex):
    flags = [s for level in cx.simplices for s in level]  # (dim, tuple) order
    label = {s: k for k, s in enumerate(flags)}
    chains = []
    for top in flags:
        chains.extend(_chains_ending_at(cx, top))
    new = SimplicialComplex.from_maximal([tuple(label[s] for s in c) for c in chains]) if chains else None
    # exact chain map by coning over barycentres
    images: dict[tuple, dict[tuple, int]] = {}
    for m, level in enumerate(cx.simplices):
        for s in level:
            if m == 0:
                images[s] = {(label[s],): 1}
                continue
            img: dict[tuple, int] = {}
            for k in range(m + 1):
                face = s[:k] + s[k + 1 :]
                for t, c in images[face].items():
                    coned = (label[s],) + t
                    key = tuple(sorted(coned))
                    img[key] = img.get(key, 0) + (-1) ** k * c * perm_sign(coned)
            images[s] = {t: c for t, c in img.items() if c}
    maps = {}
    for m, level in enumerate(cx.simplices):
        rows = [[0] * len(level) for _ in range(new.count(m))]
        for col, s in enumerate(level):
            for t, c in images[s].items():
                rows[new.index[m][t]][col] = c
        maps[m] = _dm(rows, new.count(m), len(level))
    return new, ChainMap(maps), flags


def _chains_ending_at(cx: SimplicialComplex, top: tuple) -> list[list[tuple]]:
    """Maximal flags of faces of ``top`` ending at ``top``."""
    if len(top) == 1:
        return [[top]]
    out = []
    for k in range(len(top)):
        face = top[:k] + top[k + 1 :]
        for c in _chains_ending_at(cx, face):
            out.append(c + [top])
    return out


def barycentric_subdivide(cx: SimplicialComplex, m_rounds: int = 1) -> Subdivision:
    if m_rounds < 1:
        raise InvalidComplex("subdivision needs at least one round")
    n0 = cx.count(0)
    coords = {v: tuple(Fraction(int(k == j)) for k in range(n0)) for j, v in enumerate(cx.vertices)}
    current = cx
    total = identity_map(cx)
    carriers = {}
    for _ in range(m_rounds):
        new, cmap, flags = _subdivide_once(current)
        new_coords = {}
        for k, s in enumerate(flags):
            pts = [coords[v] for v in s]
            new_coords[k] = tuple(sum(col, Fraction(0)) / len(pts) for col in zip(*pts))
            carriers[k] = s
        coords = new_coords
        total = ChainMap({m: cmap[m] * total[m] for m in range(cx.dim + 1)})
        current = new
    return Subdivision(current, total, coords, carriers, cx)


def barycentric_coordinates(sd: Subdivision, vertex) -> tuple[Fraction, ...]:
    """Coordinates of a subdivided vertex relative to the original vertices."""
    return sd.coords[vertex]


# ---------------------------------------------------------------------------
# Commutant sampling and example complexes
# ---------------------------------------------------------------------------


def commutant_basis(cx: SimplicialComplex) -> list[ChainMap]:
    """Basis of all chain maps C(cx) -> C(cx), from the commutation equations."""
    sizes = [cx.count(m) for m in range(cx.dim + 1)]
    offsets = np.cumsum([0] + [n * n for n in sizes]).tolist()
    n_unknowns = offsets[-1]
    bd = boundary_matrices(cx)
    rows = []
    for m in range(1, cx.dim + 1):
        b = [[to_fraction(x) for x in r] for r in bd[m].to_list()]
        nm, nm1 = sizes[m], sizes[m - 1]
        # (d k_m - k_{m-1} d)[r, c] = 0; k_m[i, j] at offsets[m] + i*nm + j
        for r in range(nm1):
            for c in range(nm):
                row = [Fraction(0)] * n_unknowns
                for i in range(nm):
                    if b[r][i]:
                        row[offsets[m] + i * nm + c] += b[r][i]
                for j in range(nm1):
                    if b[j][c]:
                        row[offsets[m - 1] + r * nm1 + j] -= b[j][c]
                rows.append(row)
    if rows:
        ns = _dm(rows, len(rows), n_unknowns).nullspace()
        vectors = dm_to_fractions(ns)
    else:
        vectors = [[Fraction(int(i == j)) for i in range(n_unknowns)] for j in range(n_unknowns)]
    out = []
    for vec in vectors:
        maps = {}
        for m, n in enumerate(sizes):
            block = vec[offsets[m] : offsets[m + 1]]
            maps[m] = _dm([block[i * n : (i + 1) * n] for i in range(n)], n, n)
        out.append(ChainMap(maps))
    return out


def random_chain_map(cx: SimplicialComplex, rng: np.random.Generator, basis: list[ChainMap] | None = None, scale: int = 3) -> ChainMap:
    """Identity plus a small-integer combination of commutant basis maps."""
    basis = basis if basis is not None else commutant_basis(cx)
    out = identity_map(cx).maps
    for b in basis:
        c = int(rng.integers(-scale, scale + 1))
        if c:
            out = {m: out[m] + b[m].mul(QQ(c)) for m in out}
    return ChainMap(out)


def point() -> SimplicialComplex:
    return SimplicialComplex.from_maximal([(0,)])


def segment() -> SimplicialComplex:
    return SimplicialComplex.from_maximal([(0, 1)])


def triangle_boundary() -> SimplicialComplex:
    return SimplicialComplex.from_maximal([(0, 1), (1, 2), (0, 2)])


def filled_triangle() -> SimplicialComplex:
    return SimplicialComplex.from_maximal([(0, 1, 2)])


def hexagon() -> SimplicialComplex:
    return SimplicialComplex.from_maximal([(k, (k + 1) % 6) for k in range(6)])


def two_triangles() -> SimplicialComplex:
    return SimplicialComplex.from_maximal([(0, 1, 2), (1, 2, 3)])


def tetrahedron_boundary() -> SimplicialComplex:
    return SimplicialComplex.from_maximal(list(itertools.combinations(range(4), 3)))


EXAMPLES = {
    "point": point,
    "segment": segment,
    "triangle_boundary": triangle_boundary,
    "filled_triangle": filled_triangle,
    "hexagon": hexagon,
    "two_triangles": two_triangles,
    "tetrahedron_boundary": tetrahedron_boundary,
}


def complex_from_dict(spec: Mapping) -> SimplicialComplex:
    if "example" in spec:
        name = spec["example"]
        if name not in EXAMPLES:
            raise InvalidComplex(f"unknown example complex {name!r}")
        return EXAMPLES[name]()
    if "simplices" not in spec:
        raise InvalidComplex("complex definition needs 'simplices' or 'example'")
    return SimplicialComplex.from_maximal(spec["simplices"])


def rotation_map(n: int, step: int = 1) -> dict:
    return {k: (k + step) % n for k in range(n)}
