"""Error norms, divergence diagnostics, convergence rates and streamfunctions."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, depth_first_order

from .mesh import PRIMAL_INTERIOR
from .quadrature import segment_rule
from .spaces import interpolate_V

log = logging.getLogger(__name__)

QUANTITIES = ("u_L2", "G_L2", "p_L2", "Ju_uh_h", "u_Ju_04h")


def _all_tris(maps):
    return np.arange(maps.mesh.n_triangles)


def _sqnorm(vals, value_ndim):
    axes = tuple(range(vals.ndim - value_ndim, vals.ndim))
    return np.sum(vals ** 2, axis=axes) if axes else vals ** 2


def _field_values(f, pts):
    return f.eval(_all_tris(f.maps), pts)


def error_L2(f, exact=None, degree=None):
    """Broken L2 norm of ``exact - f`` (or of ``f`` alone when ``exact`` is None)."""
    maps = f.maps
    degree = degree or maps.default_degree["error"]
    pts, w = maps.tri_quad(degree)
    vals = _field_values(f, pts)
    if exact is not None:
        vals = np.asarray(exact(pts), dtype=float) - vals
    return float(np.sqrt(np.sum(w * _sqnorm(vals, vals.ndim - 2))))


def _traces(f, degree):
    """Plus and minus traces of ``f`` at the edge quadrature points; the minus
    trace of a boundary edge is zero."""
    maps, mesh = f.maps, f.maps.mesh
    pts, w = maps.edge_quad(degree)
    plus = f.eval(mesh.edge_plus, pts)
    minus = np.zeros_like(plus)
    inner = np.flatnonzero(mesh.edge_minus >= 0)
    minus[inner] = f.eval(mesh.edge_minus[inner], pts[inner])
    return plus, minus, w


def norm_h(v, degree=None):
    """Discrete H1-type norm of a V field:
    ``|grad v|^2 + sum_pr h_e^-1 |[v]|^2 + sum_dl h_e^-1 |[v.t]|^2``."""
    maps, mesh = v.maps, v.maps.mesh
    degree = degree or maps.default_degree["error"]
    pts, w = maps.tri_quad(degree)
    _, g = v.eval(_all_tris(maps), pts, grad=True)
    total = np.sum(w * np.sum(g ** 2, axis=(-2, -1)))
    plus, minus, ew = _traces(v, degree)
    jump = plus - minus
    inv_h = 1.0 / mesh.edge_length
    pr = mesh.primal_edges
    total += np.sum(inv_h[pr, None] * ew[pr] * np.sum(jump[pr] ** 2, axis=-1))
    dl = mesh.dual_edges
    jt = np.einsum("eqr,er->eq", jump[dl], mesh.edge_tangent[dl])
    total += np.sum(inv_h[dl, None] * ew[dl] * jt ** 2)
    return float(np.sqrt(total))


def norm_04h(v, exact=None, degree=None, edge_weight="inverse"):
    """Discrete L4 norm ``(|v|_{L4}^4 + sum_e w_e |{v}|_{L4(e)}^4)^(1/4)`` of
    ``v`` or of ``exact - v``; on boundary edges ``{v}`` is the trace.

    ``edge_weight="inverse"`` uses ``w_e = 1/h_e``.  With that weight a smooth
    O(h^(k+1)) error has norm O(h^(k+1/2)); ``edge_weight="h"`` uses
    ``w_e = h_e``, which scales like the volume term and keeps order k+1.
    """
    if edge_weight not in ("inverse", "h"):
        raise ValueError(f"edge_weight must be 'inverse' or 'h', got {edge_weight!r}")
    maps, mesh = v.maps, v.maps.mesh
    degree = degree or maps.default_degree["error"]
    pts, w = maps.tri_quad(degree)
    vals = _field_values(v, pts)
    if exact is not None:
        vals = np.asarray(exact(pts), dtype=float) - vals
    total = np.sum(w * _sqnorm(vals, vals.ndim - 2) ** 2)
    plus, minus, ew = _traces(v, degree)
    inner = (mesh.edge_minus >= 0).reshape((-1, 1) + (1,) * (plus.ndim - 2))
    avg = np.where(inner, 0.5 * (plus + minus), plus)
    if exact is not None:
        epts, _ = maps.edge_quad(degree)
        avg = np.asarray(exact(epts), dtype=float) - avg
    we = 1.0 / mesh.edge_length if edge_weight == "inverse" else mesh.edge_length
    total += np.sum(ew * we[:, None] * _sqnorm(avg, avg.ndim - 2) ** 2)
    return float(total ** 0.25)


def norm_1h(q, degree=None):
    """Discrete H1 seminorm ``|grad q|^2 + sum_dl h_e^-1 |[q]|^2`` of a Q field."""
    maps, mesh = q.maps, q.maps.mesh
    degree = degree or maps.default_degree["error"]
    pts, w = maps.tri_quad(degree)
    _, g = q.eval(_all_tris(maps), pts, grad=True)
    total = np.sum(w * np.sum(g ** 2, axis=-1))
    plus, minus, ew = _traces(q, degree)
    dl = mesh.dual_edges
    total += np.sum(ew[dl] / mesh.edge_length[dl, None] * (plus[dl] - minus[dl]) ** 2)
    return float(np.sqrt(total))


@dataclass(frozen=True)
class DivergenceReport:
    max_div: float
    max_normal_jump: float

    def relative(self, scale, h):
        """``(max_div * h / scale, max_normal_jump / scale)``."""
        if scale == 0:
            return (0.0 if self.max_div == 0 else np.inf, 0.0 if self.max_normal_jump == 0 else np.inf)
        return self.max_div * h / scale, self.max_normal_jump / scale


def divergence_report(u, degree=None):
    """Largest elementwise ``|div u|`` and largest ``|[u.n]|`` over interior
    primal edges, sampled at degree-``2k`` quadrature points."""
    maps, mesh = u.maps, u.maps.mesh
    degree = degree or 2 * maps.k
    pts, _ = maps.tri_quad(degree)
    _, g = u.eval(_all_tris(maps), pts, grad=True)
    div = g[..., 0, 0] + g[..., 1, 1]
    plus, minus, _ = _traces(u, degree)
    pi = mesh.edges_of_kind(PRIMAL_INTERIOR)
    jn = np.einsum("eqr,er->eq", plus[pi] - minus[pi], mesh.edge_normal[pi])
    return DivergenceReport(float(np.max(np.abs(div))), float(np.max(np.abs(jn), initial=0.0)))


# ------------------------------------------------------------------ streamfunction
@dataclass
class StreamFunction:
    points: np.ndarray
    values: np.ndarray
    anchor: int
    closure_residual: float
    fluxes: np.ndarray = field(repr=False, default=None)

    @property
    def scale(self):
        return float(np.max(np.abs(self.values)))


def edge_fluxes(u):
    """``int_e u.n ds`` for every edge, ``n = (t_y, -t_x)`` with ``t`` running
    from the first to the second endpoint.  Interior primal edges use the mean
    of both traces."""
    maps, mesh = u.maps, u.maps.mesh
    pts, w = maps.edge_quad(maps.k)
    plus = u.eval(mesh.edge_plus, pts)
    inner = np.flatnonzero(mesh.edge_minus >= 0)
    vals = plus.copy()
    vals[inner] = 0.5 * (plus[inner] + u.eval(mesh.edge_minus[inner], pts[inner]))
    return np.einsum("eq,eqr,er->e", w, vals, mesh.edge_normal)


def streamfunction(u, tree="bfs", check=True, rtol=1e-8):
    """Vertex values of the streamfunction of a divergence-free V field.

    ``psi(b) - psi(a) = int_(a,b) u.n`` is integrated along a spanning tree of
    the edge graph (breadth- or depth-first) from ``psi = 0`` at the lowest
    numbered boundary vertex.  The closure residual is the largest mismatch
    over all edges, which vanishes exactly when ``u`` is divergence-free.
    """
    maps, mesh = u.maps, u.maps.mesh
    if check:
        rep = divergence_report(u)
        scale = norm_h(u)
        rd, rj = rep.relative(scale, mesh.h)
        if rd > rtol or rj > rtol:
            raise ValueError(f"velocity is not divergence-free (relative div {rd:.2e}, "
                             f"normal jump {rj:.2e}); streamfunction undefined")
    flux = edge_fluxes(u)
    a, b = mesh.edge_vertices[:, 0], mesh.edge_vertices[:, 1]
    npts = len(mesh.points)
    bverts = np.unique(mesh.edge_vertices[mesh.boundary_edges])
    anchor = int(bverts.min())
    # adjacency carrying signed fluxes; edge ids stored 1-based to keep zeros
    ids = np.arange(mesh.n_edges) + 1
    graph = coo_matrix((np.concatenate([ids, -ids]), (np.concatenate([a, b]), np.concatenate([b, a]))),
                       shape=(npts, npts)).tocsr()
    order_fn = breadth_first_order if tree == "bfs" else depth_first_order
    order, pred = order_fn(graph, anchor, directed=False, return_predecessors=True)
    if len(order) != npts:
        raise ValueError("triangulation edge graph is disconnected")
    psi = np.zeros(npts)
    for v in order[1:]:
        p = pred[v]
        e = int(graph[p, v])
        psi[v] = psi[p] + (flux[e - 1] if e > 0 else -flux[-e - 1])
    residual = float(np.max(np.abs(psi[b] - psi[a] - flux)))
    return StreamFunction(mesh.points.copy(), psi, anchor, residual, flux)


def streamfunction_extremum(u, sf, kind="min", subdivisions=8):
    """Locate the extremum of psi on a barycentric lattice inside every
    triangle.  Inside triangle ``(x, a, b)`` psi is integrated exactly from
    the vertex ``x`` along straight segments.  Returns ``(point, value)``."""
    maps, mesh = u.maps, u.maps.mesh
    r = subdivisions
    lam = np.array([(i, j) for i in range(r + 1) for j in range(r + 1 - i)], dtype=float) / r
    verts = mesh.tri_verts
    x0 = verts[:, 0]
    targets = (x0[:, None, :] + lam[None, :, 0, None] * (verts[:, 1] - x0)[:, None, :]
               + lam[None, :, 1, None] * (verts[:, 2] - x0)[:, None, :])
    rule = segment_rule(maps.k + 1)
    s = 0.5 * (rule.points + 1.0)
    ws = 0.5 * rule.weights
    d = targets - x0[:, None, :]                                  # (T, L, 2)
    qp = x0[:, None, None, :] + s[None, None, :, None] * d[:, :, None, :]
    T, L = d.shape[:2]
    vals = u.eval(_all_tris(maps), qp.reshape(T, L * len(s), 2)).reshape(T, L, len(s), 2)
    normal = np.stack([d[..., 1], -d[..., 0]], axis=-1)           # length folded in
    psi = sf.values[mesh.triangles[:, 0]][:, None] + np.einsum("q,tlqr,tlr->tl", ws, vals, normal)
    flat = psi.ravel()
    i = int(np.argmin(flat) if kind == "min" else np.argmax(flat))
    return targets.reshape(-1, 2)[i].copy(), float(flat[i])


# ------------------------------------------------------------------ reports
@dataclass
class ErrorReport:
    h: float
    k: int
    nu: float
    ndofs: dict
    errors: dict
    max_div: float
    max_normal_jump: float
    u_norm_h: float
    iterations: int = 0
    converged: bool = True

    def row(self):
        out = {"h": self.h, "k": self.k, "nu": self.nu,
               "dofs": sum(self.ndofs.values()), "dofs_H": self.ndofs["H"],
               "dofs_V": self.ndofs["V"], "dofs_Q": self.ndofs["Q"]}
        out.update({q: self.errors.get(q, np.nan) for q in QUANTITIES})
        out.update(max_div=self.max_div, max_normal_jump=self.max_normal_jump,
                   u_norm_h=self.u_norm_h, iterations=self.iterations, converged=int(self.converged))
        return out


def error_report(result, data):
    """ErrorReport of a SolveResult against ProblemData (norms of u_h only when
    no exact solution is known)."""
    maps = result.maps
    errors = {}
    if data.has_exact:
        Ju = interpolate_V(maps, data.u)
        errors = {
            "u_L2": error_L2(result.u, data.u),
            "G_L2": error_L2(result.G, data.G),
            "p_L2": error_L2(result.p, data.p),
            "Ju_uh_h": norm_h(Ju - result.u),
            "u_Ju_04h": norm_04h(Ju, data.u),
        }
    else:
        errors = {"u_L2": error_L2(result.u)}
    div = divergence_report(result.u)
    return ErrorReport(maps.mesh.h, maps.k, data.nu, dict(maps.ndofs), errors, div.max_div,
                       div.max_normal_jump, norm_h(result.u), result.iterations, result.converged)


# ------------------------------------------------------------------ rates
def _slope(h, e):
    h, e = np.asarray(h, float), np.asarray(e, float)
    ok = (h > 0) & (e > 0)
    if ok.sum() < 2:
        return np.nan
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


@dataclass
class RateTable:
    reports: list = field(default_factory=list)

    @property
    def h(self):
        return [r.h for r in self.reports]

    def errors(self, quantity):
        return [r.errors.get(quantity, np.nan) for r in self.reports]

    def pairwise(self, quantity):
        """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` for consecutive rows."""
        h, e = np.array(self.h), np.array(self.errors(quantity))
        if len(h) < 2:
            return []
        return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))

    def least_squares(self, quantity, last=3):
        """Least-squares slope of log e against log h over the finest ``last`` rows."""
        if len(self.reports) < 2:
            return np.nan
        return _slope(self.h[-last:], self.errors(quantity)[-last:])

    def quantities(self):
        return [q for q in QUANTITIES if any(q in r.errors for r in self.reports)]


class StudyError(RuntimeError):
    def __init__(self, message, table):
        super().__init__(message)
        self.table = table


def convergence_study(case, meshes, stokes=None):
    """Solve ``case`` on each mesh spec and collect a RateTable.

    A failing solve aborts the study; the partial table travels on the raised
    StudyError.
    """
    from .solver import picard_solve
    table = RateTable()
    for spec in meshes:
        c = replace(case, mesh=spec) if stokes is None else replace(case, mesh=spec, stokes=stokes)
        try:
            result = picard_solve(c)
        except Exception as exc:
            raise StudyError(f"solve on {spec} failed: {exc}", table) from exc
        report = error_report(result, c.problem())
        table.reports.append(report)
        if not result.converged:
            raise StudyError(f"Picard iteration did not converge on {spec}", table)
        log.info("%s: %s", spec, {q: f"{v:.3e}" for q, v in report.errors.items()})
    return table
