"""Orthonormal polynomial bases on physical triangles and on oriented edges."""

import numpy as np

from .quadrature import map_triangle_rule, triangle_rule


def monomial_exponents(k):
    """Exponents ``(a, b)`` of x^a y^b with a + b <= k, ordered by total degree."""
    return [(d - b, b) for d in range(k + 1) for b in range(d + 1)]


def dim_pk(k):
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def _scaled_monomials(exps, z, grad=False):
    # z: (..., 2) scaled-centred coordinates
    zx, zy = z[..., 0], z[..., 1]
    k = max(a + b for a, b in exps)
    px = [np.ones_like(zx)]
    py = [np.ones_like(zy)]
    for _ in range(k):
        px.append(px[-1] * zx)
        py.append(py[-1] * zy)
    vals = np.stack([px[a] * py[b] for a, b in exps], axis=-1)
    if not grad:
        return vals, None
    zero = np.zeros_like(zx)
    dx = np.stack([a * px[a - 1] * py[b] if a else zero for a, b in exps], axis=-1)
    dy = np.stack([b * px[a] * py[b - 1] if b else zero for a, b in exps], axis=-1)
    return vals, np.stack([dx, dy], axis=-1)


class TriangleBasis:
    """Orthonormal P_k bases for a batch of triangles.

    Member ``j`` of triangle ``t`` is ``sum_a coef[t, a, j] * m_a`` where
    ``m_a`` are monomials in ``(x - c_t) / l_t`` (centroid ``c_t``, diameter
    ``l_t``).  The members are hierarchical: the first ``dim P_{k-1}`` of them
    span P_{k-1}.
    """

    def __init__(self, verts, k):
        verts = np.asarray(verts, dtype=float)
        self.k = k
        self.exps = monomial_exponents(k)
        self.dim = len(self.exps)
        self.centroid = verts.mean(axis=1)
        d01 = np.linalg.norm(verts[:, 0] - verts[:, 1], axis=1)
        d12 = np.linalg.norm(verts[:, 1] - verts[:, 2], axis=1)
        d20 = np.linalg.norm(verts[:, 2] - verts[:, 0], axis=1)
        self.diameter = np.max([d01, d12, d20], axis=0)
        self.coef = self._orthonormalize(verts)

    def _orthonormalize(self, verts):
        # modified Gram-Schmidt in the quadrature inner product, run twice
        pts, wts = map_triangle_rule(triangle_rule(2 * self.k), verts)
        mono, _ = _scaled_monomials(self.exps, self._scale(pts))
        sw = np.sqrt(wts)[:, :, None]
        A = sw * mono                      # (T, nq, m)
        T, _, m = A.shape
        coef = np.zeros((T, m, m))
        Q = np.zeros_like(A)
        for j in range(m):
            v = A[:, :, j].copy()
            c = np.zeros((T, m))
            c[:, j] = 1.0
            for _ in range(2):
                for i in range(j):
                    r = np.einsum("tq,tq->t", Q[:, :, i], v)
                    v -= r[:, None] * Q[:, :, i]
                    c -= r[:, None] * coef[:, :, i]
            nrm = np.sqrt(np.einsum("tq,tq->t", v, v))
            Q[:, :, j] = v / nrm[:, None]
            coef[:, :, j] = c / nrm[:, None]
        return coef

    def _scale(self, pts, tri=None):
        c = self.centroid if tri is None else self.centroid[tri]
        h = self.diameter if tri is None else self.diameter[tri]
        return (pts - c[:, None, :]) / h[:, None, None]

    def eval(self, tri, pts, grad=False):
        """Values ``(n, nq, m)`` (and gradients ``(n, nq, m, 2)``) of the bases
        of triangles ``tri`` at physical points ``pts`` of shape ``(n, nq, 2)``."""
        tri = np.asarray(tri)
        mono, dmono = _scaled_monomials(self.exps, self._scale(pts, tri), grad)
        coef = self.coef[tri]
        vals = np.einsum("tqa,taj->tqj", mono, coef)
        if not grad:
            return vals
        g = np.einsum("tqad,taj->tqjd", dmono, coef) / self.diameter[tri][:, None, None, None]
        return vals, g


def legendre_orthonormal(k, xi, length):
    """Legendre polynomials L_0..L_k at ``xi`` scaled to be orthonormal on an
    edge of the given length.  ``xi`` has shape (..., nq), ``length`` (...)."""
    xi = np.asarray(xi, dtype=float)
    P = [np.ones_like(xi), xi.copy()]
    for n in range(1, k):
        P.append(((2 * n + 1) * xi * P[n] - n * P[n - 1]) / (n + 1))
    P = np.stack(P[:k + 1], axis=-1)
    scale = np.sqrt((2 * np.arange(k + 1) + 1) / np.asarray(length, dtype=float)[..., None])
    return P * scale[..., None, :]


class EdgeBasis:
    """Orthonormal Legendre bases on a batch of oriented edges.

    The coordinate ``xi`` runs from -1 at the first endpoint to +1 at the
    second, so the basis depends only on the edge record and not on which
    neighbouring triangle evaluates it.
    """

    def __init__(self, a, b, k):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.k = k
        self.length = np.linalg.norm(self.b - self.a, axis=1)

    def coordinate(self, edges, pts):
        a, b = self.a[edges], self.b[edges]
        d = b - a
        s = np.einsum("eqd,ed->eq", pts - a[:, None, :], d) / np.einsum("ed,ed->e", d, d)[:, None]
        return 2.0 * s - 1.0

    def eval(self, edges, pts):
        """Values ``(n, nq, k+1)`` at physical points ``(n, nq, 2)`` on ``edges``."""
        edges = np.asarray(edges)
        return legendre_orthonormal(self.k, self.coordinate(edges, pts), self.length[edges])
