from functools import lru_cache

import numpy as np
import pytest

from sdgflow.mesh import build_rectangular_mesh, generate_voronoi_mesh, triangulate
from sdgflow.spaces import build_dof_maps


@lru_cache(maxsize=None)
def rect_maps(n, k, m=None):
    return build_dof_maps(triangulate(build_rectangular_mesh(n, m or n)), k)


@lru_cache(maxsize=None)
def voronoi_maps(n, seed, k):
    return build_dof_maps(triangulate(generate_voronoi_mesh(n, seed)), k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[("rect", 2, 1), ("rect", 2, 2), ("voronoi", 16, 1), ("voronoi", 16, 2)],
                ids=["rect2-k1", "rect2-k2", "vor16-k1", "vor16-k2"])
def small_maps(request):
    kind, n, k = request.param
    return rect_maps(n, k) if kind == "rect" else voronoi_maps(n, 3, k)
