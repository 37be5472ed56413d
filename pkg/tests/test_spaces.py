import numpy as np
import pytest

from conftest import rect_maps, voronoi_maps
from oracles import brute_force_dimension, local_functionals, triangle_points
from sdgflow.mesh import DUAL, PRIMAL_INTERIOR
from sdgflow.spaces import (FEField, UnisolvenceError, build_dof_maps, interpolate_H, interpolate_Q,
                            interpolate_V, mean_value)
from sdgflow.analysis import error_L2, norm_04h
from sdgflow.cases import taylor_pressure, taylor_velocity
from sdgflow.mesh import PrimalMesh, triangulate


def test_unit_square_counts():
    maps = rect_maps(1, 1)
    assert maps.ndofs == {"H": 40, "V": 16, "Q": 12}
    assert maps.ndofs == maps.expected_ndofs()


def test_4x4_velocity_count():
    assert rect_maps(4, 1).ndofs["V"] == 256


@pytest.mark.parametrize("k,sizes", [(1, {"H": 12, "V": 6, "Q": 3}), (2, {"H": 24, "V": 12, "Q": 6})])
def test_local_matrix_sizes(k, sizes):
    maps = rect_maps(2, k)
    for s, n in sizes.items():
        assert maps.C[s].shape[1:] == (n, n)
        assert maps.l2g[s].shape[1] == n


def test_counts_match_closed_form(small_maps):
    assert small_maps.ndofs == small_maps.expected_ndofs()


@pytest.mark.parametrize("space", ["H", "V", "Q"])
def test_counts_match_brute_force_rank(small_maps, space):
    assert brute_force_dimension(small_maps, space) == small_maps.ndofs[space]


@pytest.mark.parametrize("space", ["H", "V", "Q"])
def test_local_dof_matrices_full_rank(small_maps, space):
    D = small_maps.dof_matrices()[space]
    ranks = np.linalg.matrix_rank(D)
    assert np.all(ranks == D.shape[1])
    assert np.all(small_maps.condition[space] < 1e8)


@pytest.mark.parametrize("space", ["H", "V", "Q"])
def test_round_trip_and_shared_dofs(small_maps, space, rng):
    for _ in range(3):
        f = FEField(space, rng.standard_normal(small_maps.ndofs[space]), small_maps)
        got = local_functionals(f)
        np.testing.assert_allclose(got, f.local_dofs(), atol=1e-10 * max(1, np.abs(f.coeffs).max()))


def _side_values(f, edges, degree=7):
    maps, mesh = f.maps, f.maps.mesh
    pts, _ = maps.edge_quad(degree)
    return f.eval(mesh.edge_plus[edges], pts[edges]), f.eval(mesh.edge_minus[edges], pts[edges])


def test_staggered_continuity_random_fields(small_maps, rng):
    maps, mesh = small_maps, small_maps.mesh
    pi = mesh.edges_of_kind(PRIMAL_INTERIOR)
    dl = mesh.edges_of_kind(DUAL)
    n, t = mesh.edge_normal, mesh.edge_tangent
    for _ in range(5):
        H = FEField("H", rng.standard_normal(maps.ndofs["H"]), maps)
        V = FEField("V", rng.standard_normal(maps.ndofs["V"]), maps)
        Q = FEField("Q", rng.standard_normal(maps.ndofs["Q"]), maps)
        hp, hm = _side_values(H, pi)
        assert np.abs(np.einsum("eqrs,es->eqr", hp - hm, n[pi])).max() < 1e-10
        hp, hm = _side_values(H, dl)
        assert np.abs(np.einsum("er,eqrs,es->eq", t[dl], hp - hm, n[dl])).max() < 1e-10
        vp, vm = _side_values(V, dl)
        assert np.abs(np.einsum("eqr,er->eq", vp - vm, n[dl])).max() < 1e-10
        qp, qm = _side_values(Q, pi)
        assert np.abs(qp - qm).max() < 1e-10
        # the complementary components are genuinely discontinuous
        vp, vm = _side_values(V, dl)
        assert np.abs(np.einsum("eqr,er->eq", vp - vm, t[dl])).max() > 1e-6


def _poly_vec(pts):
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([1 + 2 * x - y + 0.5 * x * y + x ** 2, -3 + y ** 2 - x * y + 0.25 * x], -1)


def _poly_ten(pts):
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([np.stack([x * y, 1 + x], -1), np.stack([y ** 2 - x, 2 - x ** 2], -1)], -2)


@pytest.mark.parametrize("which", ["rect", "voronoi"])
def test_interpolants_reproduce_polynomials(which):
    maps = rect_maps(2, 2) if which == "rect" else voronoi_maps(16, 3, 2)
    T = np.arange(maps.mesh.n_triangles)
    pts, _ = maps.tri_quad(5)
    V = interpolate_V(maps, _poly_vec)
    assert np.abs(V.eval(T, pts) - _poly_vec(pts)).max() < 1e-10
    H = interpolate_H(maps, _poly_ten)
    assert np.abs(H.eval(T, pts) - _poly_ten(pts)).max() < 1e-10
    Q = interpolate_Q(maps, lambda p: 1 + p[..., 0] * p[..., 1] - p[..., 1] ** 2)
    assert np.abs(Q.eval(T, pts) - (1 + pts[..., 0] * pts[..., 1] - pts[..., 1] ** 2)).max() < 1e-10


def test_interpolate_constant_and_linear_q():
    maps = voronoi_maps(16, 3, 1)
    one = interpolate_Q(maps, lambda p: np.ones(p.shape[:-1]))
    T = np.arange(maps.mesh.n_triangles)
    pts, _ = maps.tri_quad(3)
    assert np.abs(one.eval(T, pts) - 1).max() < 1e-12
    lin = interpolate_Q(maps, lambda p: p[..., 0] + p[..., 1])
    c = maps.mesh.tri_verts.mean(axis=1)
    got = lin.eval(T, c[:, None, :])[:, 0]
    np.testing.assert_allclose(got, c.sum(axis=1), atol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_velocity_interpolation_rate(k):
    errs = [error_L2(interpolate_V(rect_maps(n, k), taylor_velocity), taylor_velocity) for n in (4, 8, 16, 32)]
    slope = -np.polyfit(np.log([4, 8, 16, 32]), np.log(errs), 1)[0]
    assert slope >= k + 0.8


def test_mean_value_examples(rng):
    maps = rect_maps(4, 2)
    c = interpolate_Q(maps, lambda p: 2.5 * np.ones(p.shape[:-1]))
    assert mean_value(c) == pytest.approx(2.5, rel=1e-12)
    assert abs(mean_value(interpolate_Q(maps, taylor_pressure))) < 1e-10
    q = FEField("Q", rng.standard_normal(maps.ndofs["Q"]), maps)
    total = 0.0
    for t in range(maps.mesh.n_triangles):
        pts, w = triangle_points(maps.mesh.tri_verts[t], 4)
        total += w @ q.eval([t], pts[None])[0]
    assert mean_value(q) == pytest.approx(total, rel=1e-12, abs=1e-12)


def test_field_rejects_wrong_length():
    maps = rect_maps(1, 1)
    with pytest.raises(ValueError):
        FEField("V", np.zeros(3), maps)
    with pytest.raises(ValueError):
        FEField("W", np.zeros(3), maps)


def test_degree_zero_rejected():
    with pytest.raises(ValueError):
        build_dof_maps(rect_maps(1, 1).mesh, 0)


def test_degenerate_geometry_reports_unisolvence_failure():
    # a sliver polygon whose fan triangles are nearly flat
    eps = 1e-13
    v = np.array([[0, 0], [1, 0], [1, eps], [0, eps]], dtype=float)
    mesh = triangulate(PrimalMesh(v, [[0, 1, 2, 3]]))
    with pytest.raises(UnisolvenceError, match="triangle"):
        build_dof_maps(mesh, 2)


def test_field_arithmetic(rng):
    maps = rect_maps(2, 1)
    a = FEField("V", rng.standard_normal(maps.ndofs["V"]), maps)
    b = FEField("V", rng.standard_normal(maps.ndofs["V"]), maps)
    np.testing.assert_allclose((a + b - b).coeffs, a.coeffs)
    np.testing.assert_allclose((2 * a).coeffs, 2 * a.coeffs)


@pytest.mark.parametrize("k", [1, 2])
def test_interpolation_04h_rates(k):
    # printed edge weight h_e^-1 gives k + 1/2, weight h_e gives k + 1
    ns = (4, 8, 16, 32)
    inv = [norm_04h(interpolate_V(rect_maps(n, k), taylor_velocity), taylor_velocity) for n in ns]
    hw = [norm_04h(interpolate_V(rect_maps(n, k), taylor_velocity), taylor_velocity, edge_weight="h")
          for n in ns]
    s_inv = -np.polyfit(np.log(ns), np.log(inv), 1)[0]
    s_h = -np.polyfit(np.log(ns), np.log(hw), 1)[0]
    assert s_inv == pytest.approx(k + 0.5, abs=0.15)
    assert s_h == pytest.approx(k + 1.0, abs=0.15)
