"""Quadrature rules on the reference triangle and the reference segment.

Triangle rules live on ``{(x, y): x, y >= 0, x + y <= 1}`` (area 1/2), segment
rules on ``[-1, 1]``.  Both are built from Gauss-type rules, so every weight is
strictly positive.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int
    kind: str

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def segment_rule(d):
    """Gauss-Legendre rule on [-1, 1] exact for polynomials of degree ``d``."""
    if d < 0:
        raise ValueError(f"degree must be nonnegative, got {d}")
    n = max(1, -(-(d + 1) // 2))
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(x, w, d, "segment")


@lru_cache(maxsize=None)
def triangle_rule(d):
    """Collapsed (Stroud conical product) rule exact to total degree ``d``.

    The map ``x = u, y = v (1 - u)`` sends the unit square onto the reference
    triangle with Jacobian ``1 - u``; that factor is absorbed by a
    Gauss-Jacobi(1, 0) rule in ``u`` and ``v`` uses plain Gauss-Legendre.
    """
    if d < 0:
        raise ValueError(f"degree must be nonnegative, got {d}")
    if d <= 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        wts = np.array([0.5])
    else:
        n = -(-(d + 1) // 2)
        # roots_jacobi weight is (1-s)^alpha (1+s)^beta on [-1, 1]
        su, wu = roots_jacobi(n, 1.0, 0.0)
        u = 0.5 * (su + 1.0)
        wu = wu / 4.0
        sv, wv = np.polynomial.legendre.leggauss(n)
        v = 0.5 * (sv + 1.0)
        wv = wv / 2.0
        U, V = np.meshgrid(u, v, indexing="ij")
        pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
        wts = np.outer(wu, wv).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, d, "triangle")


def map_triangle_rule(rule, verts):
    """Physical points and weights of ``rule`` on a batch of triangles.

    ``verts`` has shape ``(T, 3, 2)``.  Returns points ``(T, nq, 2)`` and
    weights ``(T, nq)`` (already scaled by the Jacobian).
    """
    v0 = verts[:, 0, :]
    e1 = verts[:, 1, :] - v0
    e2 = verts[:, 2, :] - v0
    xi = rule.points
    pts = (v0[:, None, :] + xi[None, :, 0:1] * e1[:, None, :]
           + xi[None, :, 1:2] * e2[:, None, :])
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, jac[:, None] * rule.weights[None, :]


def map_segment_rule(rule, a, b):
    """Physical points ``(E, nq, 2)`` and weights ``(E, nq)`` on segments a->b."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None, :] + rule.points[None, :, None] * half[:, None, :]
    length = np.hypot(half[:, 0], half[:, 1])
    return pts, length[:, None] * rule.weights[None, :]
