"""Manufactured solutions and benchmark problems.

All callables take an array of points with trailing axis 2 and return values
with trailing shape ``()``, ``(2,)`` or ``(2, 2)``.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

CASE_IDS = ("taylor", "taylor-stokes", "noflow", "cavity", "file")
UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class ProblemData:
    """Data ``(f, g)`` and, when known, the exact ``(u, p, G)``."""
    name: str
    nu: float
    f: Callable
    g: Callable
    u: Optional[Callable] = None
    p: Optional[Callable] = None
    G: Optional[Callable] = None
    domain: tuple = UNIT_SQUARE
    convective: bool = True

    @property
    def has_exact(self):
        return self.u is not None


def _xy(pts):
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0], pts[..., 1]


def taylor_velocity(pts):
    x, y = _xy(pts)
    pi = np.pi
    return np.stack([-np.cos(pi * x) * np.sin(pi * y), np.sin(pi * x) * np.cos(pi * y)], axis=-1)


def taylor_pressure(pts):
    x, y = _xy(pts)
    return -(np.cos(2 * np.pi * x) + np.cos(2 * np.pi * y)) / 4.0


def taylor_grad(pts):
    """Velocity gradient, ``[r, s] = d u_r / d x_s``."""
    x, y = _xy(pts)
    pi = np.pi
    sxsy = np.sin(pi * x) * np.sin(pi * y)
    cxcy = np.cos(pi * x) * np.cos(pi * y)
    return pi * np.stack([np.stack([sxsy, -cxcy], -1), np.stack([cxcy, -sxsy], -1)], -2)


def taylor_case(nu, stokes=False):
    """Taylor vortex on the unit square with Dirichlet data from the exact flow.

    For Navier-Stokes ``div(u (x) u) + grad p = 0``, hence ``f = 2 pi^2 nu u``;
    Stokes mode keeps the pressure gradient in the load instead.
    """
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    c = 2.0 * np.pi ** 2 * nu

    if stokes:
        def f(pts):
            x, y = _xy(pts)
            gp = np.stack([np.pi / 2 * np.sin(2 * np.pi * x), np.pi / 2 * np.sin(2 * np.pi * y)], -1)
            return c * taylor_velocity(pts) + gp
    else:
        def f(pts):
            return c * taylor_velocity(pts)

    return ProblemData("taylor-stokes" if stokes else "taylor", nu, f, taylor_velocity,
                       u=taylor_velocity, p=taylor_pressure,
                       G=lambda pts: nu * taylor_grad(pts), convective=not stokes)


def noflow_case(lam=1e7, nu=1.0):
    """Hydrostatic test: ``u = 0`` and ``p = lam (y^3 - y^2/2 + y - 7/12)``."""
    def p(pts):
        _, y = _xy(pts)
        return lam * (y ** 3 - y ** 2 / 2 + y - 7.0 / 12.0)

    def f(pts):
        _, y = _xy(pts)
        return np.stack([np.zeros_like(y), lam * (3 * y ** 2 - y + 1)], -1)

    def zero_vec(pts):
        return np.zeros(np.shape(pts)[:-1] + (2,))

    def zero_ten(pts):
        return np.zeros(np.shape(pts)[:-1] + (2, 2))

    return ProblemData("noflow", nu, f, zero_vec, u=zero_vec, p=p, G=zero_ten)


def cavity_case(nu, domain=UNIT_SQUARE):
    """Lid-driven cavity: ``u = (1, 0)`` on the top side, zero elsewhere."""
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    top = domain[3]
    tol = 1e-12 * (domain[3] - domain[2])

    def g(pts):
        _, y = _xy(pts)
        out = np.zeros(np.shape(pts)[:-1] + (2,))
        out[..., 0] = np.where(y >= top - tol, 1.0, 0.0)
        return out

    def f(pts):
        return np.zeros(np.shape(pts)[:-1] + (2,))

    return ProblemData("cavity", nu, f, g, domain=domain)


@dataclass(frozen=True)
class MeshSpec:
    kind: str            # rect | voronoi | file
    nx: int = 8
    ny: int = 8
    n_seeds: int = 64
    seed: int = 0
    path: str = ""

    @classmethod
    def parse(cls, text):
        """``rect:NxM``, ``voronoi:N:SEED`` or ``file:PATH``."""
        kind, _, rest = text.partition(":")
        try:
            if kind == "rect":
                nx, _, ny = rest.lower().partition("x")
                return cls("rect", nx=int(nx), ny=int(ny or nx))
            if kind == "voronoi":
                n, _, seed = rest.partition(":")
                return cls("voronoi", n_seeds=int(n), seed=int(seed or 0))
            if kind == "file" and rest:
                return cls("file", path=rest)
        except ValueError:
            pass
        raise ValueError(f"bad mesh spec {text!r}; expected rect:NxM, voronoi:N:SEED or file:PATH")

    def __str__(self):
        if self.kind == "rect":
            return f"rect:{self.nx}x{self.ny}"
        if self.kind == "voronoi":
            return f"voronoi:{self.n_seeds}:{self.seed}"
        return f"file:{self.path}"

    def build(self, domain=UNIT_SQUARE):
        from .mesh import build_rectangular_mesh, generate_voronoi_mesh, read_polygon_mesh
        if self.kind == "rect":
            return build_rectangular_mesh(self.nx, self.ny, domain)
        if self.kind == "voronoi":
            return generate_voronoi_mesh(self.n_seeds, self.seed, domain)
        return read_polygon_mesh(self.path)

    def refined(self):
        if self.kind == "rect":
            return replace(self, nx=2 * self.nx, ny=2 * self.ny)
        if self.kind == "voronoi":
            return replace(self, n_seeds=4 * self.n_seeds)
        raise ValueError("file meshes cannot be refined automatically")


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-7
    max_iterations: int = 100
    theta: float = 1.0
    linear_solver: str = "splu"
    condition_estimate: bool = False

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if not 0 < self.theta <= 1:
            raise ValueError(f"damping theta must lie in (0, 1], got {self.theta}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class CaseConfig:
    case: str = "taylor"
    nu: float = 0.1
    lam: float = 1e7
    mesh: MeshSpec = field(default_factory=lambda: MeshSpec("rect", 8, 8))
    k: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    stokes: bool = False
    out: str = "."

    def __post_init__(self):
        if self.case not in CASE_IDS:
            raise ValueError(f"unknown case {self.case!r}; choose from {', '.join(CASE_IDS)}")
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {self.k}")

    def problem(self):
        """ProblemData for this configuration.  ``file`` runs the cavity data on
        the supplied mesh."""
        if self.case == "taylor":
            return taylor_case(self.nu, stokes=self.stokes)
        if self.case == "taylor-stokes":
            return taylor_case(self.nu, stokes=True)
        if self.case == "noflow":
            data = noflow_case(self.lam, self.nu)
            return replace(data, convective=not self.stokes)
        data = cavity_case(self.nu)
        return replace(data, convective=not self.stokes)
