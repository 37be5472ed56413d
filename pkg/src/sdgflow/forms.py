"""Sparse assembly of the staggered DG operators.

Matrices follow the convention ``A[test, trial]``:

* ``M[H, H]``      nu^-1 (G, H)
* ``A_B[V, H]``    B_h(H, v)
* ``A_b[Q, V]``    b_h(v, q)
* ``A_N[V, V]``    N_h(w; psi, v) for a frozen transport field w

The adjoint blocks of the scheme are ``-A_B.T`` and ``-A_b.T``.

Edge terms exploit the DOF structure: on a primal edge only the XD1 moments of
that edge give a nonzero ``H n``, and there ``H n = e_r L_i``; likewise
``t . H n = L_i`` for XD2 on dual edges and ``v . n = L_i`` for VD1.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import DUAL, PRIMAL_BOUNDARY
from .spaces import FEField


def _scatter(rows, cols, vals, shape):
    """Sum local blocks ``vals[n, a, b]`` into a CSR matrix (fixed order)."""
    R = np.broadcast_to(rows[:, :, None], vals.shape)
    C = np.broadcast_to(cols[:, None, :], vals.shape)
    return sp.coo_matrix((vals.ravel(), (R.ravel(), C.ravel())), shape=shape).tocsr()


def _scatter_vec(rows, vals, n):
    return np.bincount(rows.ravel(), weights=vals.ravel(), minlength=n)


def _eval_any(w, tri, pts):
    if isinstance(w, FEField):
        return w.eval(tri, pts)
    return np.asarray(w(pts), dtype=float)


def assemble_mass(maps, nu, degree=None):
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    degree = degree or maps.default_degree["tri"]
    _, w = maps.tri_quad(degree)
    Hv = maps.tri_values("H", degree)
    loc = np.einsum("tq,tqars,tqbrs->tab", w, Hv, Hv) / nu
    l2g = maps.l2g["H"]
    n = maps.ndofs["H"]
    return _scatter(l2g, l2g, loc, (n, n))


def assemble_B(maps, degree=None, edge_degree=None):
    """B_h(H, v) = sum (H, grad v) - sum_pr <H n, [v]> - sum_dl <t.Hn, [v.t]>."""
    degree = degree or maps.default_degree["tri"]
    edge_degree = edge_degree or maps.default_degree["edge"]
    mesh, kp = maps.mesh, maps.k + 1
    nV, nH = maps.ndofs["V"], maps.ndofs["H"]
    _, w = maps.tri_quad(degree)
    Hv = maps.tri_values("H", degree)
    _, gV = maps.tri_values("V", degree, grad=True)
    loc = np.einsum("tq,tqbrs,tqars->tab", w, Hv, gV)
    A = _scatter(maps.l2g["V"], maps.l2g["H"], loc, (nV, nH))

    _, ew = maps.edge_quad(edge_degree)
    L = maps.edge_legendre(edge_degree)
    Vp, Vm = maps.side_values("V", edge_degree)
    dp, dm = maps.side_dofs("V")
    inner = mesh.edge_minus >= 0

    pr = mesh.primal_edges
    cols = maps.edge_offset["H"][pr][:, None] + np.arange(2 * kp)      # (r, i) -> r*kp + i
    # -<e_r L_i, v_r> from the plus side, + from the minus side
    blk = -np.einsum("eq,eqi,eqar->eari", ew[pr], L[pr], Vp[pr]).reshape(len(pr), -1, 2 * kp)
    A = A + _scatter(dp[pr], cols, blk, (nV, nH))
    pri = pr[inner[pr]]
    cols_i = maps.edge_offset["H"][pri][:, None] + np.arange(2 * kp)
    blk = np.einsum("eq,eqi,eqar->eari", ew[pri], L[pri], Vm[pri]).reshape(len(pri), -1, 2 * kp)
    A = A + _scatter(dm[pri], cols_i, blk, (nV, nH))

    dl = mesh.dual_edges
    t = mesh.edge_tangent[dl]
    cols = maps.edge_offset["H"][dl][:, None] + np.arange(kp)
    vt_p = np.einsum("eqar,er->eqa", Vp[dl], t)
    vt_m = np.einsum("eqar,er->eqa", Vm[dl], t)
    A = A + _scatter(dp[dl], cols, -np.einsum("eq,eqi,eqa->eai", ew[dl], L[dl], vt_p), (nV, nH))
    A = A + _scatter(dm[dl], cols, np.einsum("eq,eqi,eqa->eai", ew[dl], L[dl], vt_m), (nV, nH))
    return A.tocsr()


def assemble_b(maps, degree=None, edge_degree=None):
    """b_h(v, q) = -sum (v, grad q) + sum_dl <v.n, [q]>."""
    degree = degree or maps.default_degree["tri"]
    edge_degree = edge_degree or maps.default_degree["edge"]
    mesh, kp = maps.mesh, maps.k + 1
    nQ, nV = maps.ndofs["Q"], maps.ndofs["V"]
    _, w = maps.tri_quad(degree)
    Vv = maps.tri_values("V", degree)
    _, gQ = maps.tri_values("Q", degree, grad=True)
    loc = -np.einsum("tq,tqbr,tqar->tab", w, Vv, gQ)
    A = _scatter(maps.l2g["Q"], maps.l2g["V"], loc, (nQ, nV))

    _, ew = maps.edge_quad(edge_degree)
    L = maps.edge_legendre(edge_degree)
    Qp, Qm = maps.side_values("Q", edge_degree)
    dp, dm = maps.side_dofs("Q")
    dl = mesh.dual_edges
    cols = maps.edge_offset["V"][dl][:, None] + np.arange(kp)
    A = A + _scatter(dp[dl], cols, np.einsum("eq,eqi,eqa->eai", ew[dl], L[dl], Qp[dl]), (nQ, nV))
    A = A + _scatter(dm[dl], cols, -np.einsum("eq,eqi,eqa->eai", ew[dl], L[dl], Qm[dl]), (nQ, nV))
    return A.tocsr()


def _edge_transport(maps, w, edge_degree):
    """Average normal transport {w.n} at edge quadrature points."""
    mesh = maps.mesh
    pts, _ = maps.edge_quad(edge_degree)
    n = mesh.edge_normal
    if not isinstance(w, FEField):
        return np.einsum("eqr,er->eq", np.asarray(w(pts), dtype=float), n)
    wn = np.einsum("eqr,er->eq", w.eval(mesh.edge_plus, pts), n)
    inner = np.flatnonzero(mesh.edge_minus >= 0)
    wm = np.einsum("eqr,er->eq", w.eval(mesh.edge_minus[inner], pts[inner]), n[inner])
    wn[inner] = 0.5 * (wn[inner] + wm)
    return wn


def assemble_N(maps, w, degree=None, edge_degree=None):
    """Convective block for transport ``w`` (an FEField or a callable):

    N_h(w; psi, v) = -sum (psi (x) w, grad v) + sum_interior <{w.n}, {psi}.[v]>
                     + sum_all <|{w.n}|, [psi].[v]>
    """
    degree = degree or maps.default_degree["tri"]
    edge_degree = edge_degree or maps.default_degree["edge"]
    mesh = maps.mesh
    nV = maps.ndofs["V"]
    pts, wt = maps.tri_quad(degree)
    wv = _eval_any(w, np.arange(mesh.n_triangles), pts)
    Vv, gV = maps.tri_values("V", degree, grad=True)
    loc = -np.einsum("tq,tqbr,tqs,tqars->tab", wt, Vv, wv, gV)
    l2g = maps.l2g["V"]
    A = _scatter(l2g, l2g, loc, (nV, nV))

    _, ew = maps.edge_quad(edge_degree)
    a = _edge_transport(maps, w, edge_degree)
    Vp, Vm = maps.side_values("V", edge_degree)
    dp, dm = maps.side_dofs("V")
    inner = np.flatnonzero(mesh.edge_minus >= 0)

    # (+, +) on every edge; boundary edges only see the upwind term
    coef = np.abs(a)
    coef[inner] += 0.5 * a[inner]
    A = A + _scatter(dp, dp, np.einsum("eq,eqbr,eqar->eab", ew * coef, Vp, Vp), (nV, nV))
    ai = a[inner]
    sides = {1: (Vp[inner], dp[inner]), -1: (Vm[inner], dm[inner])}
    for s_test, s_trial in ((1, -1), (-1, 1), (-1, -1)):
        c = 0.5 * ai * s_test + np.abs(ai) * s_test * s_trial
        vt, rows = sides[s_test]
        vp, cols = sides[s_trial]
        A = A + _scatter(rows, cols, np.einsum("eq,eqbr,eqar->eab", ew[inner] * c, vp, vt), (nV, nV))
    return A.tocsr()


def convective_functional(maps, w, psi, degree=None, edge_degree=None):
    """N_h(w; psi, v) for all V basis functions v, with ``w`` and ``psi``
    continuous callables (so only the boundary carries a jump of psi)."""
    degree = degree or maps.default_degree["error"]
    edge_degree = edge_degree or maps.default_degree["error"]
    mesh = maps.mesh
    nV = maps.ndofs["V"]
    pts, wt = maps.tri_quad(degree)
    _, gV = maps.tri_values("V", degree, grad=True)
    W, P = np.asarray(w(pts)), np.asarray(psi(pts))
    out = _scatter_vec(maps.l2g["V"], -np.einsum("tq,tqr,tqs,tqars->ta", wt, P, W, gV), nV)

    epts, ew = maps.edge_quad(edge_degree)
    a = np.einsum("eqr,er->eq", np.asarray(w(epts)), mesh.edge_normal)
    Pe = np.asarray(psi(epts))
    Vp, Vm = maps.side_values("V", edge_degree)
    dp, dm = maps.side_dofs("V")
    inner = mesh.edge_minus >= 0
    # interior: <w.n, psi . (v+ - v-)>;  boundary: <|w.n|, psi . v+>
    coef = np.where(inner[:, None], a, np.abs(a))
    out += _scatter_vec(dp, np.einsum("eq,eqr,eqar->ea", ew * coef, Pe, Vp), nV)
    out -= _scatter_vec(dm[inner], np.einsum("eq,eqr,eqar->ea", (ew * a)[inner], Pe[inner], Vm[inner]), nV)
    return out


def assemble_rhs(maps, f=None, g=None, nu=None, degree=None, convective=True):
    """Right-hand sides ``(r_G, r_u, r_p)``.

    ``r_G = sum_b <g, H n>``, ``r_u = (f, v) + sum_b <|g.n| - g.n, g.v>`` and
    ``r_p = -sum_b <g.n, q>``; the minus sign in ``r_p`` is the one for which
    the exact solution satisfies ``b_h(u, q) = r_p(q)`` with ``b_h`` as
    assembled here.  The boundary part of ``r_u`` belongs to the convective
    form and is dropped when ``convective`` is false.
    """
    degree = degree or maps.default_degree["error"]
    mesh, kp = maps.mesh, maps.k + 1
    rG = np.zeros(maps.ndofs["H"])
    ru = np.zeros(maps.ndofs["V"])
    rp = np.zeros(maps.ndofs["Q"])
    if f is not None:
        pts, w = maps.tri_quad(degree)
        Vv = maps.tri_values("V", degree)
        F = np.asarray(f(pts), dtype=float)
        ru += _scatter_vec(maps.l2g["V"], np.einsum("tq,tqr,tqar->ta", w, F, Vv), maps.ndofs["V"])
    if g is not None:
        bd = mesh.boundary_edges
        epts, ew = maps.edge_quad(degree)
        L = maps.edge_legendre(degree)[bd]
        Gb = np.asarray(g(epts[bd]), dtype=float)
        n = mesh.edge_normal[bd]
        gn = np.einsum("eqr,er->eq", Gb, n)
        w = ew[bd]
        rG[maps.edge_offset["H"][bd][:, None] + np.arange(2 * kp)] = \
            np.einsum("eq,eqr,eqi->eri", w, Gb, L).reshape(len(bd), 2 * kp)
        rp[maps.edge_offset["Q"][bd][:, None] + np.arange(kp)] = -np.einsum("eq,eq,eqi->ei", w, gn, L)
        if not convective:
            return rG, ru, rp
        Vp, _ = maps.side_values("V", degree)
        dp, _ = maps.side_dofs("V")
        conv = np.einsum("eq,eqr,eqar->ea", w * (np.abs(gn) - gn), Gb, Vp[bd])
        ru += _scatter_vec(dp[bd], conv, maps.ndofs["V"])
    return rG, ru, rp


def mean_constraint_vector(maps, degree=None):
    """``c_i`` = integral of the i-th Q basis function."""
    degree = degree or maps.k
    _, w = maps.tri_quad(degree)
    Qv = maps.tri_values("Q", degree)
    return _scatter_vec(maps.l2g["Q"], np.einsum("tq,tqa->ta", w, Qv), maps.ndofs["Q"])


@dataclass
class AssembledSystem:
    M: sp.csr_matrix
    A_B: sp.csr_matrix
    A_b: sp.csr_matrix
    A_N: sp.csr_matrix
    c: np.ndarray
    r_G: np.ndarray
    r_u: np.ndarray
    r_p: np.ndarray
    nu: float
    w: object = None
    sizes: dict = field(default_factory=dict)

    def matrix(self):
        """Bordered block matrix for unknowns ``(G, u, p, mu)``."""
        nH, nV, nQ = self.M.shape[0], self.A_B.shape[0], self.A_b.shape[0]
        c = sp.csr_matrix(self.c.reshape(1, -1))
        return sp.bmat([
            [self.M, -self.A_B.T, None, None],
            [self.A_B, self.A_N, -self.A_b.T, None],
            [None, self.A_b, None, c.T],
            [None, None, c, None],
        ], format="csc")

    def rhs(self):
        return np.concatenate([self.r_G, self.r_u, self.r_p, [0.0]])


def assemble_system(maps, nu, f=None, g=None, w=None, static=None):
    """All blocks for one linear step; ``static`` reuses (M, A_B, A_b, c, rhs).
    Without a transport field ``w`` the system is the Stokes one."""
    if static is None:
        static = assemble_static(maps, nu, f, g, convective=w is not None)
    M, A_B, A_b, c, (rG, ru, rp) = static
    nV = maps.ndofs["V"]
    A_N = sp.csr_matrix((nV, nV)) if w is None else assemble_N(maps, w)
    return AssembledSystem(M, A_B, A_b, A_N, c, rG, ru, rp, nu, w,
                           dict(H=maps.ndofs["H"], V=nV, Q=maps.ndofs["Q"]))


def assemble_static(maps, nu, f=None, g=None, convective=True):
    return (assemble_mass(maps, nu), assemble_B(maps), assemble_b(maps),
            mean_constraint_vector(maps), assemble_rhs(maps, f, g, nu, convective=convective))
