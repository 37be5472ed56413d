"""Degree-of-freedom maps and fields for the staggered spaces.

Three piecewise-P_k spaces live on the fan sub-triangulation:

* ``H`` -- 2x2 tensors with continuous ``H n`` across primal edges and
  continuous ``t . H n`` across dual edges;
* ``V`` -- vectors with continuous ``v . n`` across dual edges;
* ``Q`` -- scalars continuous across interior primal edges.

Continuity is built in by numbering each edge moment once and sharing it
between the two neighbouring triangles.  Edge moments are taken against the
orthonormal Legendre basis of the edge, interior moments against the first
``dim P_{k-1}`` members of the triangle's orthonormal basis.

Local DOF ordering inside triangle ``t`` (local edges 0 = primal, 1, 2 = dual):

* Q: ``[edge0 (k+1) | interior (m')]``
* V: ``[edge1 (k+1) | edge2 (k+1) | interior x (m'), y (m')]``
* H: ``[edge0 x (k+1), y (k+1) | edge1 (k+1) | edge2 (k+1) | interior xx, xy, yx, yy (m' each)]``

with ``m' = k (k+1) / 2``.  Polynomial coefficients are stored
component-major in the same way (``m`` per component).
"""

from dataclasses import dataclass

import numpy as np

from .basis import EdgeBasis, TriangleBasis, dim_pk
from .mesh import DUAL, PRIMAL_BOUNDARY, PRIMAL_INTERIOR
from .quadrature import map_segment_rule, map_triangle_rule, segment_rule, triangle_rule

SPACES = ("H", "V", "Q")
NCOMP = {"Q": 1, "V": 2, "H": 4}


class UnisolvenceError(np.linalg.LinAlgError):
    pass


class DofMaps:
    """Global numbering and per-triangle dual bases of H_h, V_h and Q_h."""

    def __init__(self, mesh, k):
        if int(k) != k or k < 1:
            raise ValueError(f"polynomial degree must be an integer >= 1, got {k}")
        self.mesh = mesh
        self.k = k = int(k)
        self.m = dim_pk(k)
        self.mi = dim_pk(k - 1)
        self.tbasis = TriangleBasis(mesh.tri_verts, k)
        a, b = mesh.edge_endpoints()
        self.ebasis = EdgeBasis(a, b, k)
        self._number()
        self._build_dual_bases()
        self._cache = {}

    # ------------------------------------------------------------------ numbering
    def _number(self):
        mesh, k, mi = self.mesh, self.k, self.mi
        E, T = mesh.n_edges, mesh.n_triangles
        primal = mesh.primal_edges
        dual = mesh.dual_edges
        kp = k + 1

        self.edge_offset = {}
        self.interior_offset = {}
        self.ndofs = {}
        per_edge = {"Q": (kp, 0), "V": (0, kp), "H": (2 * kp, kp)}
        per_tri = {"Q": mi, "V": 2 * mi, "H": 4 * mi}
        for s in SPACES:
            off = np.full(E, -1, dtype=np.int64)
            n_pr, n_dl = per_edge[s]
            pos = 0
            if n_pr:
                off[primal] = pos + n_pr * np.arange(len(primal))
                pos += n_pr * len(primal)
            if n_dl:
                off[dual] = pos + n_dl * np.arange(len(dual))
                pos += n_dl * len(dual)
            self.edge_offset[s] = off
            self.interior_offset[s] = pos + per_tri[s] * np.arange(T)
            self.ndofs[s] = pos + per_tri[s] * T

        te = mesh.tri_edges
        r = np.arange
        self.l2g = {
            "Q": np.hstack([self.edge_offset["Q"][te[:, 0:1]] + r(kp),
                            self.interior_offset["Q"][:, None] + r(mi)]),
            "V": np.hstack([self.edge_offset["V"][te[:, 1:2]] + r(kp),
                            self.edge_offset["V"][te[:, 2:3]] + r(kp),
                            self.interior_offset["V"][:, None] + r(2 * mi)]),
            "H": np.hstack([self.edge_offset["H"][te[:, 0:1]] + r(2 * kp),
                            self.edge_offset["H"][te[:, 1:2]] + r(kp),
                            self.edge_offset["H"][te[:, 2:3]] + r(kp),
                            self.interior_offset["H"][:, None] + r(4 * mi)]),
        }
        for v in self.l2g.values():
            v.setflags(write=False)

    def expected_ndofs(self):
        """Closed-form dimensions of the three spaces."""
        k, mesh = self.k, self.mesh
        npr, ndl, T = len(mesh.primal_edges), len(mesh.dual_edges), mesh.n_triangles
        return {"H": 2 * (k + 1) * npr + (k + 1) * ndl + 2 * k * (k + 1) * T,
                "V": (k + 1) * ndl + k * (k + 1) * T,
                "Q": (k + 1) * npr + k * (k + 1) // 2 * T}

    # ------------------------------------------------------------- dual bases
    def edge_moments(self):
        """``mom[t, loc, i, j] = <phi_j, L_i>`` on local edge ``loc`` of ``t``."""
        mesh, k = self.mesh, self.k
        rule = segment_rule(2 * k)
        a, b = mesh.edge_endpoints()
        te = mesh.tri_edges
        T = mesh.n_triangles
        pts, wts = map_segment_rule(rule, a[te.ravel()], b[te.ravel()])
        L = self.ebasis.eval(te.ravel(), pts)
        tri = np.repeat(np.arange(T), 3)
        phi = self.tbasis.eval(tri, pts)
        mom = np.einsum("eq,eqi,eqj->eij", wts, L, phi)
        return mom.reshape(T, 3, k + 1, self.m)

    def dof_matrices(self):
        """Local DOF matrices ``D[t][dof, poly]`` for each space."""
        mesh, k, m, mi = self.mesh, self.k, self.m, self.mi
        T, kp = mesh.n_triangles, k + 1
        mom = self.edge_moments()
        te = mesh.tri_edges
        n = mesh.edge_normal[te]       # (T, 3, 2)
        t = mesh.edge_tangent[te]

        DQ = np.zeros((T, m, m))
        DQ[:, :kp, :] = mom[:, 0]
        DQ[:, kp:, :mi] = np.eye(mi)

        DV = np.zeros((T, 2 * m, 2 * m))
        for loc, row in ((1, 0), (2, kp)):
            for r in range(2):
                DV[:, row:row + kp, r * m:(r + 1) * m] = n[:, loc, r, None, None] * mom[:, loc]
        for r in range(2):
            DV[:, 2 * kp + r * mi:2 * kp + (r + 1) * mi, r * m:r * m + mi] = np.eye(mi)

        DH = np.zeros((T, 4 * m, 4 * m))
        for r in range(2):
            for s in range(2):
                c = 2 * r + s
                DH[:, r * kp:(r + 1) * kp, c * m:(c + 1) * m] = n[:, 0, s, None, None] * mom[:, 0]
                for loc, row in ((1, 2 * kp), (2, 3 * kp)):
                    DH[:, row:row + kp, c * m:(c + 1) * m] = (t[:, loc, r] * n[:, loc, s])[:, None, None] * mom[:, loc]
        for c in range(4):
            DH[:, 4 * kp + c * mi:4 * kp + (c + 1) * mi, c * m:c * m + mi] = np.eye(mi)
        return {"Q": DQ, "V": DV, "H": DH}

    def _build_dual_bases(self):
        D = self.dof_matrices()
        self.C = {}
        self.condition = {}
        for s in SPACES:
            cond = np.linalg.cond(D[s])
            self.condition[s] = cond
            bad = np.flatnonzero(~np.isfinite(cond) | (cond > 1e12))
            if len(bad):
                t = int(bad[0])
                raise UnisolvenceError(f"singular local {s} DOF matrix on triangle {t} (condition {cond[t]:.3g})")
            self.C[s] = np.linalg.inv(D[s])
            self.C[s].setflags(write=False)

    # ----------------------------------------------------------- quadrature
    def tri_quad(self, degree):
        key = ("tq", degree)
        if key not in self._cache:
            self._cache[key] = map_triangle_rule(triangle_rule(degree), self.mesh.tri_verts)
        return self._cache[key]

    def edge_quad(self, degree):
        key = ("eq", degree)
        if key not in self._cache:
            a, b = self.mesh.edge_endpoints()
            self._cache[key] = map_segment_rule(segment_rule(degree), a, b)
        return self._cache[key]

    def edge_legendre(self, degree):
        key = ("el", degree)
        if key not in self._cache:
            pts, _ = self.edge_quad(degree)
            self._cache[key] = self.ebasis.eval(np.arange(self.mesh.n_edges), pts)
        return self._cache[key]

    # -------------------------------------------------------- local bases
    def local_values(self, space, tri, pts, grad=False):
        """Values of the local DOF basis functions of triangles ``tri``.

        Shapes: Q ``(n, nq, nloc)``, V ``(n, nq, nloc, 2)``,
        H ``(n, nq, nloc, 2, 2)``; gradients append a trailing axis of 2.
        """
        tri = np.asarray(tri)
        out = self.tbasis.eval(tri, pts, grad)
        phi, dphi = out if grad else (out, None)
        C = self.C[space][tri]
        n, m = len(tri), self.m
        nloc = C.shape[-1]
        if space == "Q":
            vals = np.einsum("tqj,tja->tqa", phi, C)
            g = None if not grad else np.einsum("tqjd,tja->tqad", dphi, C)
        elif space == "V":
            C = C.reshape(n, 2, m, nloc)
            vals = np.einsum("tqj,trja->tqar", phi, C)
            g = None if not grad else np.einsum("tqjd,trja->tqard", dphi, C)
        else:
            C = C.reshape(n, 2, 2, m, nloc)
            vals = np.einsum("tqj,trsja->tqars", phi, C)
            g = None if not grad else np.einsum("tqjd,trsja->tqarsd", dphi, C)
        return (vals, g) if grad else vals

    def tri_values(self, space, degree, grad=False):
        """Local basis values at the degree-``degree`` points of every triangle."""
        key = ("tv", space, degree, grad)
        if key not in self._cache:
            pts, _ = self.tri_quad(degree)
            self._cache[key] = self.local_values(space, np.arange(self.mesh.n_triangles), pts, grad)
        return self._cache[key]

    def side_values(self, space, degree):
        """Local basis values from the plus and minus triangle of every edge at
        the edge quadrature points.  Minus values of boundary edges are zero."""
        key = ("sv", space, degree)
        if key not in self._cache:
            mesh = self.mesh
            pts, _ = self.edge_quad(degree)
            plus = self.local_values(space, mesh.edge_plus, pts)
            minus = np.zeros_like(plus)
            inner = np.flatnonzero(mesh.edge_minus >= 0)
            minus[inner] = self.local_values(space, mesh.edge_minus[inner], pts[inner])
            self._cache[key] = (plus, minus)
        return self._cache[key]

    def side_dofs(self, space):
        mesh = self.mesh
        plus = self.l2g[space][mesh.edge_plus]
        minus = self.l2g[space][np.maximum(mesh.edge_minus, 0)]
        return plus, minus

    @property
    def default_degree(self):
        """Triangle, edge and error-norm quadrature degrees."""
        k = self.k
        return {"tri": max(2 * k, 3 * k - 1) + 1, "edge": 3 * k + 2, "error": 2 * k + 6}


def build_dof_maps(mesh, k):
    return DofMaps(mesh, k)


@dataclass
class FEField:
    space: str
    coeffs: np.ndarray
    maps: DofMaps

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"unknown space {self.space!r}")
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.maps.ndofs[self.space],):
            raise ValueError(f"{self.space} field needs {self.maps.ndofs[self.space]} coefficients, "
                             f"got {self.coeffs.shape}")

    @property
    def mesh(self):
        return self.maps.mesh

    def local_dofs(self, tri=None):
        l2g = self.maps.l2g[self.space]
        return self.coeffs[l2g if tri is None else l2g[tri]]

    def poly_coeffs(self, tri=None):
        """Coefficients in the triangles' orthonormal bases, ``(n, ncomp*m)``."""
        tri = np.arange(self.mesh.n_triangles) if tri is None else np.asarray(tri)
        C = self.maps.C[self.space][tri]
        return np.einsum("tja,ta->tj", C, self.local_dofs(tri))

    def eval(self, tri, pts, grad=False):
        """Evaluate on triangles ``tri`` at points ``(n, nq, 2)``.

        Returns values ``(n, nq) + value_shape`` and, on request, gradients
        with a trailing axis of 2.
        """
        tri = np.atleast_1d(tri)
        pts = np.asarray(pts, dtype=float)
        out = self.maps.tbasis.eval(tri, pts, grad)
        phi, dphi = out if grad else (out, None)
        m = self.maps.m
        c = self.poly_coeffs(tri).reshape(len(tri), NCOMP[self.space], m)
        vals = np.einsum("tqj,tcj->tqc", phi, c)
        shape = {"Q": (), "V": (2,), "H": (2, 2)}[self.space]
        vals = vals.reshape(vals.shape[:2] + shape)
        if not grad:
            return vals
        g = np.einsum("tqjd,tcj->tqcd", dphi, c)
        return vals, g.reshape(g.shape[:2] + shape + (2,))

    def __add__(self, other):
        return FEField(self.space, self.coeffs + other.coeffs, self.maps)

    def __sub__(self, other):
        return FEField(self.space, self.coeffs - other.coeffs, self.maps)

    def __mul__(self, a):
        return FEField(self.space, a * self.coeffs, self.maps)

    __rmul__ = __mul__


def eval_field(f, tri, points, grad=False):
    return f.eval(tri, points, grad)


def _call(fn, pts):
    return np.asarray(fn(pts), dtype=float)


def interpolate_Q(maps, q, degree=None):
    """I_h: match the primal-edge trace moments and interior moments of ``q``."""
    degree = degree or maps.default_degree["error"]
    mesh, kp, mi = maps.mesh, maps.k + 1, maps.mi
    out = np.zeros(maps.ndofs["Q"])
    pts, w = maps.edge_quad(degree)
    L = maps.edge_legendre(degree)
    pr = mesh.primal_edges
    vals = _call(q, pts[pr])
    out[maps.edge_offset["Q"][pr][:, None] + np.arange(kp)] = np.einsum("eq,eq,eqi->ei", w[pr], vals, L[pr])
    tp, tw = maps.tri_quad(degree)
    phi = maps.tbasis.eval(np.arange(mesh.n_triangles), tp)[:, :, :mi]
    vals = _call(q, tp)
    out[maps.interior_offset["Q"][:, None] + np.arange(mi)] = np.einsum("tq,tq,tql->tl", tw, vals, phi)
    return FEField("Q", out, maps)


def interpolate_V(maps, v, degree=None):
    """J_h: match the dual-edge normal moments and interior moments of ``v``."""
    degree = degree or maps.default_degree["error"]
    mesh, kp, mi = maps.mesh, maps.k + 1, maps.mi
    out = np.zeros(maps.ndofs["V"])
    pts, w = maps.edge_quad(degree)
    L = maps.edge_legendre(degree)
    dl = mesh.dual_edges
    vals = _call(v, pts[dl])
    vn = np.einsum("eqr,er->eq", vals, mesh.edge_normal[dl])
    out[maps.edge_offset["V"][dl][:, None] + np.arange(kp)] = np.einsum("eq,eq,eqi->ei", w[dl], vn, L[dl])
    tp, tw = maps.tri_quad(degree)
    phi = maps.tbasis.eval(np.arange(mesh.n_triangles), tp)[:, :, :mi]
    vals = _call(v, tp)
    mom = np.einsum("tq,tqr,tql->trl", tw, vals, phi).reshape(mesh.n_triangles, 2 * mi)
    out[maps.interior_offset["V"][:, None] + np.arange(2 * mi)] = mom
    return FEField("V", out, maps)


def interpolate_H(maps, g, degree=None):
    """Pi_h: match ``H n`` moments on primal edges, ``t . H n`` moments on dual
    edges and interior tensor moments of ``g``."""
    degree = degree or maps.default_degree["error"]
    mesh, kp, mi = maps.mesh, maps.k + 1, maps.mi
    out = np.zeros(maps.ndofs["H"])
    pts, w = maps.edge_quad(degree)
    L = maps.edge_legendre(degree)
    pr, dl = mesh.primal_edges, mesh.dual_edges
    Hn = np.einsum("eqrs,es->eqr", _call(g, pts[pr]), mesh.edge_normal[pr])
    mom = np.einsum("eq,eqr,eqi->eri", w[pr], Hn, L[pr]).reshape(len(pr), 2 * kp)
    out[maps.edge_offset["H"][pr][:, None] + np.arange(2 * kp)] = mom
    tHn = np.einsum("er,eqrs,es->eq", mesh.edge_tangent[dl], _call(g, pts[dl]), mesh.edge_normal[dl])
    out[maps.edge_offset["H"][dl][:, None] + np.arange(kp)] = np.einsum("eq,eq,eqi->ei", w[dl], tHn, L[dl])
    tp, tw = maps.tri_quad(degree)
    phi = maps.tbasis.eval(np.arange(mesh.n_triangles), tp)[:, :, :mi]
    vals = _call(g, tp)
    mom = np.einsum("tq,tqrs,tql->trsl", tw, vals, phi).reshape(mesh.n_triangles, 4 * mi)
    out[maps.interior_offset["H"][:, None] + np.arange(4 * mi)] = mom
    return FEField("H", out, maps)


def mean_value(q):
    """Integral of a Q_h field over the domain."""
    maps = q.maps
    pts, w = maps.tri_quad(maps.k)
    vals = q.eval(np.arange(maps.mesh.n_triangles), pts)
    return float(np.sum(w * vals))

