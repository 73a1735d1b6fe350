import math
from fractions import Fraction

import numpy as np
import pytest
from sympy.polys.domains import QQ

from goaldyn.errors import InvalidComplex, NotAChainMap, NotSimplicial
from goaldyn.topology import (
    EXAMPLES,
    ChainMap,
    SimplicialComplex,
    barycentric_subdivide,
    betti_numbers,
    boundary_matrices,
    check_chain_map,
    commutant_basis,
    dm_to_fractions,
    filled_triangle,
    hexagon,
    homology_map,
    hopf_trace_check,
    identity_map,
    lefschetz_number,
    random_chain_map,
    rotation_map,
    segment,
    simplicial_chain_map,
    tetrahedron_boundary,
    triangle_boundary,
    two_triangles,
)

KNOWN_BETTI = {
    "point": [1],
    "segment": [1, 0],
    "triangle_boundary": [1, 1],
    "filled_triangle": [1, 0, 0],
    "hexagon": [1, 1],
    "two_triangles": [1, 0, 0],
    "tetrahedron_boundary": [1, 0, 1],
}


def as_array(m):
    return np.array([[float(x) for x in row] for row in dm_to_fractions(m)]).reshape(m.shape)


def numeric_betti(cx):
    bd = boundary_matrices(cx)
    rank = {m: (np.linalg.matrix_rank(as_array(bd[m])) if min(bd[m].shape) else 0) for m in bd}
    return [cx.count(m) - rank[m] - rank[m + 1] for m in range(cx.dim + 1)]


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_boundary_squares_to_zero(name):
    cx = EXAMPLES[name]()
    bd = boundary_matrices(cx)
    for m in range(2, cx.dim + 1):
        assert (bd[m - 1] * bd[m]).is_zero_matrix


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_betti_numbers(name):
    cx = EXAMPLES[name]()
    assert betti_numbers(cx) == KNOWN_BETTI[name] == numeric_betti(cx)
    assert sum((-1) ** m * b for m, b in enumerate(KNOWN_BETTI[name])) == cx.euler_characteristic()


def test_identity_and_constant_homology_maps():
    cx = triangle_boundary()
    hom = homology_map(cx, identity_map(cx))
    assert dm_to_fractions(hom[0]) == [[1]] and dm_to_fractions(hom[1]) == [[1]]
    const = simplicial_chain_map(cx, cx, {0: 1, 1: 1, 2: 1})
    hom = homology_map(cx, const)
    assert dm_to_fractions(hom[0]) == [[1]] and dm_to_fractions(hom[1]) == [[0]]


def test_rotation_acts_trivially_on_homology():
    cx = hexagon()
    hom = homology_map(cx, simplicial_chain_map(cx, cx, rotation_map(6)))
    assert dm_to_fractions(hom[1]) == [[1]]


def test_reflection_reverses_cycle():
    cx = hexagon()
    refl = {k: (-k) % 6 for k in range(6)}
    rep = lefschetz_number(cx, refl)
    assert rep.homology_traces == (1, -1) and rep.lefschetz == 2


@pytest.mark.parametrize("name", ["triangle_boundary", "filled_triangle", "hexagon", "two_triangles", "tetrahedron_boundary"])
def test_hopf_identity_on_random_commutant_maps(name):
    cx = EXAMPLES[name]()
    basis = commutant_basis(cx)
    rng = np.random.default_rng(7)
    for _ in range(20):
        cmap = random_chain_map(cx, rng, basis)
        check_chain_map(cx, cx, cmap)
        assert hopf_trace_check(cx, cmap).hopf_holds


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_identity_lefschetz_is_euler(name):
    cx = EXAMPLES[name]()
    rep = lefschetz_number(cx, {v: v for v in cx.vertices})
    assert rep.lefschetz == cx.euler_characteristic() == rep.homotopy_check


def test_worked_examples():
    assert lefschetz_number(hexagon(), rotation_map(6)).lefschetz == 0
    assert not lefschetz_number(hexagon(), rotation_map(6)).fixed_point_forced
    disk = lefschetz_number(filled_triangle(), {0: 1, 1: 2, 2: 0})
    assert disk.lefschetz == 1 and disk.fixed_point_forced
    swap = lefschetz_number(tetrahedron_boundary(), {0: 1, 1: 0, 2: 2, 3: 3})
    assert swap.lefschetz == 0 and swap.homology_traces == (1, 0, -1)
    constant = lefschetz_number(hexagon(), {k: 3 for k in range(6)})
    assert constant.lefschetz == 1 == constant.homotopy_check


def test_homotopy_check_after_two_rounds():
    rep = lefschetz_number(triangle_boundary(), rotation_map(3), subdivision_rounds=2)
    assert rep.homotopy_check == rep.lefschetz == 0


def test_subdivision_counts():
    sd = barycentric_subdivide(segment())
    assert (sd.complex.count(0), sd.complex.count(1)) == (3, 2)
    sd = barycentric_subdivide(filled_triangle())
    assert [sd.complex.count(m) for m in range(3)] == [7, 12, 6]
    sd2 = barycentric_subdivide(filled_triangle(), 2)
    assert sd2.complex.count(2) == 36


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_subdivision_keeps_euler_and_commutes(name):
    cx = EXAMPLES[name]()
    sd = barycentric_subdivide(cx, 2)
    assert sd.complex.euler_characteristic() == cx.euler_characteristic()
    check_chain_map(cx, sd.complex, sd.chain_map)
    assert betti_numbers(sd.complex) == betti_numbers(cx)


def test_mesh_shrinks():
    base = math.sqrt(2)
    assert barycentric_subdivide(segment()).mesh() == pytest.approx(base / 2, rel=1e-15)
    for rounds in (1, 2):
        m = barycentric_subdivide(filled_triangle(), rounds).mesh()
        assert m <= (2 / 3) ** rounds * base + 1e-15


def test_barycentre_coordinates_sum_to_one():
    sd = barycentric_subdivide(two_triangles(), 2)
    for c in sd.coords.values():
        assert sum(c, Fraction(0)) == 1 and min(c) >= 0


def test_non_simplicial_map_rejected():
    with pytest.raises(NotSimplicial):
        simplicial_chain_map(hexagon(), hexagon(), {k: (3 * k) % 6 for k in range(6)})


def test_non_chain_map_rejected():
    cx = segment()
    ident = identity_map(cx).maps
    bad = dict(ident)
    bad[1] = ident[1].mul(QQ(2))
    with pytest.raises(NotAChainMap):
        check_chain_map(cx, cx, ChainMap(bad))


def test_invalid_complexes():
    with pytest.raises(InvalidComplex):
        SimplicialComplex([[(0,), (1,)], [(0, 2)]])
    with pytest.raises(InvalidComplex):
        SimplicialComplex([[]])
    with pytest.raises(InvalidComplex):
        barycentric_subdivide(segment(), 0)
