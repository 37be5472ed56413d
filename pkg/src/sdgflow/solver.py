"""Picard iteration around a bordered sparse saddle-point solve."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .cases import CaseConfig, SolverConfig
from .forms import assemble_system, assemble_static
from .mesh import triangulate
from .spaces import FEField, build_dof_maps

__all__ = ["SolverConfig", "SolveResult", "SolverError", "LinearSolution",
           "linear_step", "solve_problem", "picard_solve", "stokes_solve", "prepare"]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass
class LinearSolution:
    G: np.ndarray
    u: np.ndarray
    p: np.ndarray
    mu: float
    residual: float
    condition: float = float("nan")


@dataclass
class SolveResult:
    G: FEField
    u: FEField
    p: FEField
    iterations: int
    history: list
    converged: bool
    conditions: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def maps(self):
        return self.u.maps


def _condition_estimate(A, lu):
    """1-norm condition estimate ``||A||_1 ||A^-1||_1`` via Hager-Higham."""
    n = A.shape[0]
    inv = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"),
                              dtype=float)
    return float(spla.onenormest(A) * spla.onenormest(inv))


def linear_step(system, condition=False):
    """Solve one bordered saddle-point system; returns a LinearSolution."""
    A = system.matrix()
    rhs = system.rhs()
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"singular saddle-point matrix ({exc}); suspect a disconnected mesh "
                          "or a rank-deficient space") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution; suspect a disconnected mesh or a rank-deficient space")
    res = float(np.linalg.norm(A @ x - rhs))
    s = system.sizes
    nH, nV, nQ = s["H"], s["V"], s["Q"]
    cond = _condition_estimate(A, lu) if condition else float("nan")
    return LinearSolution(x[:nH], x[nH:nH + nV], x[nH + nV:nH + nV + nQ], float(x[-1]), res, cond)


def solve_problem(maps, data, config=None, stokes=None):
    """Picard iteration for ``data`` (a ProblemData) on prepared DOF maps.

    Starts from ``u = 0`` and stops once the largest change of a velocity DOF
    coefficient is at most ``config.tolerance``.  Stokes problems (no
    convective term) finish after one linear solve.
    """
    config = config or SolverConfig()
    convective = data.convective if stokes is None else not stokes
    t0 = time.perf_counter()
    static = assemble_static(maps, data.nu, data.f, data.g, convective=convective)
    timings = {"assembly": time.perf_counter() - t0, "solve": 0.0}

    u = np.zeros(maps.ndofs["V"])
    history, conds, residuals = [], [], []
    converged = False
    sol = None
    for it in range(1, (config.max_iterations if convective else 1) + 1):
        t0 = time.perf_counter()
        w = FEField("V", u, maps) if convective else None
        system = assemble_system(maps, data.nu, w=w, static=static)
        t1 = time.perf_counter()
        sol = linear_step(system, condition=config.condition_estimate)
        timings["assembly"] += t1 - t0
        timings["solve"] += time.perf_counter() - t1
        conds.append(sol.condition)
        residuals.append(sol.residual)
        u_new = config.theta * sol.u + (1.0 - config.theta) * u
        diff = float(np.max(np.abs(u_new - u))) if u.size else 0.0
        history.append(diff)
        u = u_new
        log.debug("picard %d: max dof change %.3e", it, diff)
        if not convective or diff <= config.tolerance:
            converged = True
            break
    if not converged:
        log.warning("Picard iteration did not converge in %d steps (last change %.3e)",
                    len(history), history[-1])
    return SolveResult(FEField("H", sol.G, maps), FEField("V", u, maps), FEField("Q", sol.p, maps),
                       len(history), history, converged, conds, residuals, timings)


def prepare(case):
    """Build mesh and DOF maps for a CaseConfig; returns (maps, data, timings)."""
    t0 = time.perf_counter()
    data = case.problem()
    primal = case.mesh.build(data.domain)
    mesh = triangulate(primal)
    t1 = time.perf_counter()
    maps = build_dof_maps(mesh, case.k)
    return maps, data, {"mesh": t1 - t0, "spaces": time.perf_counter() - t1}


def picard_solve(case: CaseConfig) -> SolveResult:
    maps, data, timings = prepare(case)
    result = solve_problem(maps, data, case.solver, stokes=case.stokes or not data.convective)
    result.timings = {**timings, **result.timings}
    return result


def stokes_solve(case: CaseConfig) -> SolveResult:
    """Single linear solve without the convective term.  For the Taylor vortex
    the load is switched to the Stokes one."""
    from dataclasses import replace
    case = replace(case, stokes=True)
    return picard_solve(case)
