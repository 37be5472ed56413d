"""Acceptance criteria 1-7, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line (visible without ``-s``)
before asserting.  Cavity runs use h = 1/8 and 1/16 as the two finest meshes;
set ``SDGFLOW_FULL=1`` to add h = 1/32.
"""

import os
import time

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from conftest import rect_maps, voronoi_maps
from oracles import (B_of_continuous, Bstar_of_continuous, adjoint_B, adjoint_b, b_of_continuous,
                     brute_force_dimension, bstar_of_continuous, convection_of,
                     divergence_free_field, divergence_free_grad, load_of_continuous,
                     local_functionals)
from sdgflow.analysis import convergence_study, error_L2, streamfunction, streamfunction_extremum
from sdgflow.cases import CaseConfig, MeshSpec, taylor_case, taylor_grad, taylor_pressure, taylor_velocity
from sdgflow.forms import assemble_B, assemble_b, assemble_N, convective_functional
from sdgflow.solver import picard_solve
from sdgflow.spaces import FEField, interpolate_H, interpolate_Q, interpolate_V

RECT = [MeshSpec("rect", n, n) for n in (4, 8, 16, 32)]
VORONOI = [MeshSpec("voronoi", n_seeds=n, seed=7) for n in (16, 64, 256)]
CAVITY_N = (8, 16, 32) if os.environ.get("SDGFLOW_FULL") else (8, 16)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def taylor_studies():
    out = {}
    t0 = time.perf_counter()
    for k in (1, 2):
        out[k] = convergence_study(CaseConfig("taylor", nu=0.1, k=k), RECT)
    return out, time.perf_counter() - t0


def test_criterion_1_convergence_rates(taylor_studies, verdict):
    studies, elapsed = taylor_studies
    parts, ok = [], elapsed <= 600
    for k, table in studies.items():
        for q in ("u_L2", "G_L2", "p_L2", "Ju_uh_h"):
            s = table.least_squares(q)
            ok &= s >= k + 0.8
            parts.append(f"k={k} {q}={s:.2f}")
    assert verdict(1, ok, f"(gate k+0.8; {elapsed:.0f}s) " + ", ".join(parts))


def test_criterion_2_divergence_free(taylor_studies, verdict):
    studies, _ = taylor_studies
    worst_div = worst_jump = 0.0
    for table in studies.values():
        for r in table.reports:
            assert r.converged
            worst_div = max(worst_div, r.max_div * r.h / r.u_norm_h)
            worst_jump = max(worst_jump, r.max_normal_jump / r.u_norm_h)
    ok = worst_div <= 1e-9 and worst_jump <= 1e-9
    assert verdict(2, ok, f"max |div u_h| h/|u_h|_h = {worst_div:.1e}, "
                          f"max |[u_h.n]|/|u_h|_h = {worst_jump:.1e} (gate 1e-9)")


def test_criterion_3_pressure_robustness(verdict):
    table = convergence_study(CaseConfig("noflow", lam=1e7, k=2), VORONOI)
    u = table.errors("u_L2")
    rate = table.least_squares("p_L2")
    ok = max(u) <= 1e-6 and rate >= 2.8 and all(r.converged for r in table.reports)
    assert verdict(3, ok, f"|u_h| = {', '.join(f'{x:.1e}' for x in u)} (gate 1e-6); "
                          f"p rate {rate:.2f} (gate 2.8)")


def test_criterion_4_viscosity_robustness(verdict):
    errs = []
    for nu in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        res = picard_solve(CaseConfig("taylor", nu=nu, mesh=MeshSpec("rect", 16, 16), k=1, stokes=True))
        errs.append(error_L2(res.u, taylor_velocity))
    ratio = max(errs) / min(errs)
    assert verdict(4, ratio <= 2, f"max/min |u - u_h| over nu sweep = {ratio:.6f} (gate 2)")


def _rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


def test_criterion_5_structural_identities(verdict, rng):
    cases = [rect_maps(2, 1), rect_maps(2, 2), voronoi_maps(16, 3, 1), voronoi_maps(16, 3, 2)]
    adj = max(max(_rel(assemble_B(m).toarray(), -adjoint_B(m)),
                  _rel(assemble_b(m).toarray().T, -adjoint_b(m))) for m in cases)

    ortho = 0.0
    for m in (rect_maps(4, 1), rect_maps(4, 2), voronoi_maps(16, 3, 2)):
        pairs = [
            (assemble_B(m) @ interpolate_H(m, taylor_grad).coeffs, B_of_continuous(m, taylor_grad)),
            (assemble_b(m) @ interpolate_V(m, taylor_velocity).coeffs, b_of_continuous(m, taylor_velocity)),
            (-(assemble_B(m).T @ interpolate_V(m, taylor_velocity).coeffs),
             Bstar_of_continuous(m, taylor_velocity)),
            (-(assemble_b(m).T @ interpolate_Q(m, taylor_pressure).coeffs),
             bstar_of_continuous(m, taylor_pressure)),
        ]
        ortho = max([ortho] + [np.abs(a - b).max() / max(1.0, np.abs(b).max()) for a, b in pairs])

    res = picard_solve(CaseConfig("taylor", nu=0.1, mesh=MeshSpec("rect", 8, 8), k=2))
    A = assemble_N(res.maps, res.u)
    scale = spla.norm(A)
    worst = min(v @ (A @ v) / (scale * (v @ v))
                for v in rng.standard_normal((100, res.maps.ndofs["V"])))

    cons = 0.0
    for m in (rect_maps(4, 2), voronoi_maps(16, 3, 2)):
        got = convective_functional(m, divergence_free_field, divergence_free_field, 18, 18)
        ref = load_of_continuous(m, lambda p: convection_of(divergence_free_field, divergence_free_grad, p))
        cons = max(cons, np.abs(got - ref).max() / max(1.0, np.abs(ref).max()))

    ok = adj <= 1e-12 and ortho <= 1e-9 and worst >= -1e-12 and cons <= 1e-8
    assert verdict(5, ok, f"adjoint {adj:.1e} (1e-12), orthogonality {ortho:.1e} (1e-9), "
                          f"min v'Nv/scale {worst:.1e} (>= -1e-12), consistency {cons:.1e} (1e-8)")


def test_criterion_6_unisolvence_and_counts(verdict, rng):
    mismatches, round_trip = [], 0.0
    for k in (1, 2):
        for m in (rect_maps(2, k), voronoi_maps(16, 3, k)):
            for s in ("H", "V", "Q"):
                if brute_force_dimension(m, s) != m.ndofs[s] or m.ndofs[s] != m.expected_ndofs()[s]:
                    mismatches.append((k, s))
                f = FEField(s, rng.standard_normal(m.ndofs[s]), m)
                round_trip = max(round_trip, np.abs(local_functionals(f) - f.local_dofs()).max())
    ok = not mismatches and round_trip <= 1e-10
    assert verdict(6, ok, f"count mismatches {mismatches or 'none'}, round trip {round_trip:.1e} (1e-10)")


@pytest.mark.parametrize("re", [400, 1000])
def test_criterion_7_cavity(re, verdict):
    lines, ok, extrema = [], True, []
    for n in CAVITY_N:
        res = picard_solve(CaseConfig("cavity", nu=1.0 / re, mesh=MeshSpec("rect", n, n), k=2))
        ok &= res.converged and res.history[-1] <= 1e-7
        sf = streamfunction(res.u)
        closure = sf.closure_residual / sf.scale
        ok &= closure <= 1e-9
        point, value = streamfunction_extremum(res.u, sf, "min")
        extrema.append(point)
        lines.append(f"h=1/{n}: {res.iterations} its, closure {closure:.1e}, "
                     f"psi_min {value:.4f} at ({point[0]:.3f}, {point[1]:.3f})")
    shift = float(np.linalg.norm(extrema[-1] - extrema[-2]))
    ok &= shift < 0.05
    assert verdict(7, ok, f"Re={re}: " + "; ".join(lines) + f"; extremum shift {shift:.3f} (0.05)")
