"""Staggered polygonal meshes.

A primal mesh is a conforming partition of the domain into star-shaped,
counter-clockwise polygons.  :func:`triangulate` picks one interior point per
polygon and fans the polygon into triangles; the fan segments are the dual
edges, the polygon sides are the primal edges.
"""

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree

logger = logging.getLogger(__name__)

PRIMAL_INTERIOR = 0
PRIMAL_BOUNDARY = 1
DUAL = 2
EDGE_KINDS = {PRIMAL_INTERIOR: "primal-interior", PRIMAL_BOUNDARY: "primal-boundary", DUAL: "dual"}


class MeshError(ValueError):
    """Invalid mesh input or geometry."""


def _signed_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _polygon_centroid(p):
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * a)


def _diameter(p):
    d = p[:, None, :] - p[None, :, :]
    return np.sqrt((d ** 2).sum(-1)).max()


def _is_convex(p):
    d1 = np.roll(p, -1, axis=0) - p
    d2 = np.roll(d1, -1, axis=0)
    cr = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return bool(np.all(cr > -1e-14 * _diameter(p) ** 2))


def kernel_chebyshev(p):
    """Chebyshev centre and radius of the kernel of a CCW polygon.

    Each side contributes the half-plane ``n_i . x <= b_i`` (outward unit
    normal).  The centre maximizes ``r`` subject to ``n_i . x + r <= b_i``;
    the optimum of this 3-variable LP sits on a vertex of the constraint
    arrangement, so all triples of active constraints are enumerated.  When
    the optimum is not unique the optimal vertices are averaged.
    """
    d = np.roll(p, -1, axis=0) - p
    ln = np.hypot(d[:, 0], d[:, 1])
    n = np.column_stack([d[:, 1], -d[:, 0]]) / ln[:, None]
    b = np.einsum("ij,ij->i", n, p)
    A = np.column_stack([n, np.ones(len(p))])
    scale = _diameter(p)
    tol = 1e-12 * scale
    best_r, best = -np.inf, []
    for i, j, k in itertools.combinations(range(len(p)), 3):
        M = A[[i, j, k]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        z = np.linalg.solve(M, b[[i, j, k]])
        if np.any(A @ z - b > tol):
            continue
        if z[2] > best_r + tol:
            best_r, best = z[2], [z[:2]]
        elif z[2] > best_r - tol:
            best.append(z[:2])
    if not best:
        return None, 0.0
    return np.mean(best, axis=0), float(best_r)


@dataclass(frozen=True)
class PrimalMesh:
    vertices: np.ndarray
    polygons: tuple
    bbox: tuple = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "polygons", tuple(tuple(int(i) for i in poly) for poly in self.polygons))
        if self.bbox is None:
            lo, hi = v.min(axis=0), v.max(axis=0)
            object.__setattr__(self, "bbox", (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])))

    @property
    def n_polygons(self):
        return len(self.polygons)

    def polygon_points(self, i):
        return self.vertices[list(self.polygons[i])]

    def segments(self):
        """Map sorted vertex pair -> list of (polygon, directed pair)."""
        seg = {}
        for pi, poly in enumerate(self.polygons):
            for a, b in zip(poly, poly[1:] + poly[:1]):
                seg.setdefault((min(a, b), max(a, b)), []).append((pi, (a, b)))
        return seg

    def area(self):
        return sum(_signed_area(self.polygon_points(i)) for i in range(self.n_polygons))

    def validate(self):
        """Check orientation, simplicity, conformity, tiling and star-shapedness."""
        v = self.vertices
        if len(self.polygons) == 0:
            raise MeshError("mesh has no polygons")
        diag = float(np.hypot(self.bbox[1] - self.bbox[0], self.bbox[3] - self.bbox[2]))
        tree = cKDTree(v)
        close = tree.query_pairs(1e-12 * diag)
        if close:
            i, j = sorted(close)[0]
            raise MeshError(f"duplicate vertices {i} and {j}")
        for pi, poly in enumerate(self.polygons):
            if len(poly) < 3 or len(set(poly)) != len(poly):
                raise MeshError(f"polygon {pi} is degenerate")
            if max(poly) >= len(v) or min(poly) < 0:
                raise MeshError(f"polygon {pi} references a missing vertex")
            p = v[list(poly)]
            if _signed_area(p) <= 0:
                raise MeshError(f"polygon {pi} is not counter-clockwise (signed area {_signed_area(p):.3g})")
            if not _is_simple(p):
                raise MeshError(f"polygon {pi} is not simple")
            _, r = kernel_chebyshev(p)
            if r <= 1e-10 * _diameter(p):
                raise MeshError(f"polygon {pi} is not star-shaped (empty kernel)")
        seg = self.segments()
        for key, users in seg.items():
            if len(users) > 2:
                raise MeshError(f"segment {key} shared by {len(users)} polygons")
            if len(users) == 2 and users[0][1] == users[1][1]:
                raise MeshError(f"polygons {users[0][0]} and {users[1][0]} overlap along segment {key}")
        _check_hanging_nodes(v, np.array(list(seg.keys())), diag)
        _check_overlap(self)
        return self


def _is_simple(p):
    m = len(p)
    if m == 3:
        return True
    a, b = p, np.roll(p, -1, axis=0)
    for i in range(m):
        for j in range(i + 1, m):
            if j == i + 1 or (i == 0 and j == m - 1):
                continue
            if _segments_cross(a[i], b[i], a[j], b[j]):
                return False
    return True


def _segments_cross(p1, p2, q1, q2):
    """True when the closed segments p1p2 and q1q2 share a point."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0) and d1 != 0 and d2 != 0
            and (d3 > 0) != (d4 > 0) and d3 != 0 and d4 != 0):
        return True
    return ((d1 == 0 and on_segment(q1, q2, p1)) or (d2 == 0 and on_segment(q1, q2, p2))
            or (d3 == 0 and on_segment(p1, p2, q1)) or (d4 == 0 and on_segment(p1, p2, q2)))


def _check_hanging_nodes(v, segs, diag):
    a, b = v[segs[:, 0]], v[segs[:, 1]]
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    tol = 1e-10 * diag
    for chunk in np.array_split(np.arange(len(v)), max(1, len(v) // 256)):
        w = v[chunk][:, None, :] - a[None, :, :]
        s = np.einsum("vsd,sd->vs", w, d) / L2[None, :]
        perp = np.abs(w[..., 0] * d[None, :, 1] - w[..., 1] * d[None, :, 0]) / np.sqrt(L2)[None, :]
        inside = (s > 1e-10) & (s < 1 - 1e-10) & (perp < tol)
        if inside.any():
            vi, si = np.argwhere(inside)[0]
            raise MeshError(f"hanging node: vertex {chunk[vi]} lies inside segment {tuple(segs[si])}")


def _check_overlap(mesh):
    from shapely.geometry import Polygon
    from shapely.ops import unary_union

    polys = [Polygon(mesh.polygon_points(i)) for i in range(mesh.n_polygons)]
    total = sum(pg.area for pg in polys)
    union = unary_union(polys).area
    if abs(total - union) > 1e-10 * max(total, 1e-300):
        raise MeshError(f"polygons overlap: area sum {total:.12g} exceeds union area {union:.12g}")


def build_rectangular_mesh(nx, ny, domain=(0.0, 1.0, 0.0, 1.0)):
    """nx-by-ny grid of axis-aligned rectangles on ``domain = (x0, x1, y0, y1)``."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive integers, got {nx}x{ny}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    polys = [(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
             for j in range(ny) for i in range(nx)]
    return PrimalMesh(verts, polys, (x0, x1, y0, y1))


def read_polygon_mesh(path):
    """Read the plain-text polygon format (``nv np``, vertices, polygons)."""
    try:
        with open(path) as fh:
            raw = fh.readlines()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    lines = []
    for no, line in enumerate(raw, start=1):
        s = line.split("#", 1)[0].strip()
        if s:
            lines.append((no, s.split()))
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    it = iter(lines)

    def parse(n_expected, conv, what):
        no, toks = next(it)
        try:
            vals = [conv(t) for t in toks]
        except ValueError:
            raise MeshError(f"{path}:{no}: cannot parse {what}: {' '.join(toks)!r}") from None
        if n_expected is not None and len(vals) != n_expected:
            raise MeshError(f"{path}:{no}: expected {n_expected} values for {what}, got {len(vals)}")
        return no, vals

    try:
        _, (nv, npoly) = parse(2, int, "header 'nv np'")
        verts = [parse(2, float, "vertex")[1] for _ in range(nv)]
        polys = []
        for _ in range(npoly):
            no, vals = parse(None, int, "polygon")
            if len(vals) < 1 or vals[0] != len(vals) - 1:
                raise MeshError(f"{path}:{no}: polygon vertex count does not match its index list")
            if any(i < 0 or i >= nv for i in vals[1:]):
                raise MeshError(f"{path}:{no}: polygon vertex index out of range")
            polys.append(vals[1:])
    except StopIteration:
        raise MeshError(f"{path}: unexpected end of file") from None
    mesh = PrimalMesh(np.array(verts, dtype=float).reshape(-1, 2), polys)
    return mesh.validate()


def write_polygon_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"{len(mesh.vertices)} {mesh.n_polygons}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for poly in mesh.polygons:
            fh.write(f"{len(poly)} {' '.join(map(str, poly))}\n")


def _clipped_voronoi(seeds, box):
    """Voronoi cells of ``seeds`` clipped to ``box`` via mirror images."""
    x0, x1, y0, y1 = box
    m = [seeds,
         np.column_stack([2 * x0 - seeds[:, 0], seeds[:, 1]]),
         np.column_stack([2 * x1 - seeds[:, 0], seeds[:, 1]]),
         np.column_stack([seeds[:, 0], 2 * y0 - seeds[:, 1]]),
         np.column_stack([seeds[:, 0], 2 * y1 - seeds[:, 1]])]
    vor = Voronoi(np.vstack(m))
    cells = []
    for i in range(len(seeds)):
        reg = vor.regions[vor.point_region[i]]
        if -1 in reg or not reg:
            raise MeshError("unbounded Voronoi cell after mirroring")
        cells.append(vor.vertices[reg])
    return cells


def _ccw(p):
    c = p.mean(axis=0)
    ang = np.arctan2(p[:, 1] - c[1], p[:, 0] - c[0])
    return p[np.argsort(ang)]


def generate_voronoi_mesh(n_seeds, rng_seed=0, domain=(0.0, 1.0, 0.0, 1.0), lloyd_iterations=100):
    """Lloyd-relaxed clipped Voronoi mesh of a rectangle."""
    if int(n_seeds) != n_seeds or n_seeds < 1:
        raise MeshError(f"n_seeds must be a positive integer, got {n_seeds}")
    x0, x1, y0, y1 = map(float, domain)
    if n_seeds == 1:
        return build_rectangular_mesh(1, 1, domain)
    rng = np.random.default_rng(rng_seed)
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    seeds = lo + rng.random((n_seeds, 2)) * (hi - lo)
    for _ in range(lloyd_iterations):
        cells = [_ccw(c) for c in _clipped_voronoi(seeds, (x0, x1, y0, y1))]
        new = np.array([_polygon_centroid(c) for c in cells])
        moved = np.abs(new - seeds).max()
        seeds = new
        if moved < 1e-10 * (x1 - x0):
            break
    cells = [_ccw(c) for c in _clipped_voronoi(seeds, (x0, x1, y0, y1))]

    diag = float(np.hypot(x1 - x0, y1 - y0))
    pts = np.vstack(cells)
    # snap to the box so boundary vertices are exact
    for col, (a, b) in ((0, (x0, x1)), (1, (y0, y1))):
        pts[np.abs(pts[:, col] - a) < 1e-9 * diag, col] = a
        pts[np.abs(pts[:, col] - b) < 1e-9 * diag, col] = b
    # merge coincident vertices (degenerate co-circular seeds produce them)
    tree = cKDTree(pts)
    rep = np.arange(len(pts))
    for i, j in sorted(tree.query_pairs(1e-9 * diag)):
        ri, rj = rep[i], rep[j]
        while rep[ri] != ri:
            ri = rep[ri]
        while rep[rj] != rj:
            rj = rep[rj]
        rep[max(ri, rj)] = min(ri, rj)
    for i in range(len(rep)):
        r = i
        while rep[r] != r:
            r = rep[r]
        rep[i] = r
    uniq, inv = np.unique(rep, return_inverse=True)
    verts = pts[uniq]
    polys, off = [], 0
    for c in cells:
        ids = inv[off:off + len(c)]
        off += len(c)
        cyc = [int(i) for n, i in enumerate(ids) if i != ids[n - 1]]
        if len(cyc) < 3:
            raise MeshError("Voronoi cell collapsed after vertex merge")
        polys.append(cyc)
    # polygons corners on the box must also be split where a neighbour has a vertex
    mesh = PrimalMesh(verts, _insert_collinear(verts, polys, diag), (x0, x1, y0, y1))
    return mesh.validate()


def _insert_collinear(verts, polys, diag):
    # a box corner is a vertex of only one cell but lies on none of the others;
    # still, guard against a vertex lying inside a neighbouring side
    out = []
    for poly in polys:
        new = []
        for a, b in zip(poly, poly[1:] + poly[:1]):
            new.append(a)
            pa, pb = verts[a], verts[b]
            d = pb - pa
            L2 = d @ d
            w = verts - pa
            s = w @ d / L2
            perp = np.abs(w[:, 0] * d[1] - w[:, 1] * d[0]) / np.sqrt(L2)
            hit = np.where((s > 1e-10) & (s < 1 - 1e-10) & (perp < 1e-10 * diag))[0]
            new.extend(int(h) for h in hit[np.argsort(s[hit])])
        out.append(new)
    return out


@dataclass(frozen=True)
class Edge:
    endpoints: tuple
    kind: str
    length: float
    tangent: np.ndarray
    normal: np.ndarray
    plus_triangle: int
    minus_triangle: int = None


class StaggeredMesh:
    """Fan sub-triangulation of a primal mesh with classified, oriented edges.

    Triangle ``t`` has vertices ``(x, v_i, v_{i+1})`` (CCW) where ``x`` is
    the interior point of its polygon; local edge 0 is the primal side
    ``(v_i, v_{i+1})`` and local edges 1, 2 are the dual edges ``(x, v_i)``
    and ``(x, v_{i+1})``.

    Interior edges are oriented from the lower to the higher global vertex
    index; boundary edges follow the counter-clockwise boundary so that the
    normal ``n = (t_y, -t_x)`` points out of the domain.  ``edge_plus`` is the
    neighbour for which ``n`` is outward.
    """

    def __init__(self, primal, interior_points):
        self.primal = primal
        self.interior_points = np.asarray(interior_points, dtype=float)
        nv = len(primal.vertices)
        self.points = np.vstack([primal.vertices, self.interior_points])
        tris, parent = [], []
        for pi, poly in enumerate(primal.polygons):
            x = nv + pi
            for a, b in zip(poly, poly[1:] + poly[:1]):
                tris.append((x, a, b))
                parent.append(pi)
        self.triangles = np.array(tris, dtype=np.int64)
        self.parent = np.array(parent, dtype=np.int64)

        index, ev, kinds, users = {}, [], [], []
        tri_edges = np.zeros((len(tris), 3), dtype=np.int64)
        for t, (x, a, b) in enumerate(tris):
            for loc, (p, q, kind) in enumerate(((a, b, PRIMAL_INTERIOR), (x, a, DUAL), (b, x, DUAL))):
                key = (min(p, q), max(p, q))
                if key not in index:
                    index[key] = len(ev)
                    ev.append(key)
                    kinds.append(kind)
                    users.append([])
                e = index[key]
                users[e].append((t, (p, q)))   # (p, q) is CCW within t
                tri_edges[t, loc] = e
        E = len(ev)
        ev = np.array(ev, dtype=np.int64)
        kinds = np.array(kinds, dtype=np.int64)
        plus = np.full(E, -1, dtype=np.int64)
        minus = np.full(E, -1, dtype=np.int64)
        for e in range(E):
            u = users[e]
            if len(u) == 1:
                if kinds[e] == DUAL:
                    raise MeshError(f"dual edge {tuple(ev[e])} has a single neighbour")
                kinds[e] = PRIMAL_BOUNDARY
                ev[e] = u[0][1]
                plus[e] = u[0][0]
            elif len(u) == 2:
                for t, (p, q) in u:
                    if (p, q) == tuple(ev[e]):
                        plus[e] = t
                    else:
                        minus[e] = t
                if plus[e] < 0 or minus[e] < 0:
                    raise MeshError(f"edge {tuple(ev[e])}: inconsistent orientation of neighbours")
            else:
                raise MeshError(f"edge {tuple(ev[e])} shared by {len(u)} triangles")
        self.edge_vertices = ev
        self.edge_kind = kinds
        self.edge_plus = plus
        self.edge_minus = minus
        self.tri_edges = tri_edges
        a, b = self.points[ev[:, 0]], self.points[ev[:, 1]]
        d = b - a
        self.edge_length = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.edge_length <= 0):
            raise MeshError("zero-length edge")
        self.edge_tangent = d / self.edge_length[:, None]
        self.edge_normal = np.column_stack([self.edge_tangent[:, 1], -self.edge_tangent[:, 0]])
        # side of each local edge: +1 if the triangle is the plus neighbour
        self.tri_edge_sign = np.where(plus[tri_edges] == np.arange(len(tris))[:, None], 1.0, -1.0)

        for arr in (self.points, self.triangles, self.parent, self.edge_vertices, self.edge_kind,
                    self.edge_plus, self.edge_minus, self.tri_edges, self.edge_length,
                    self.edge_tangent, self.edge_normal, self.tri_edge_sign):
            arr.setflags(write=False)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edge_vertices)

    @property
    def tri_verts(self):
        return self.points[self.triangles]

    @property
    def tri_area(self):
        p = self.tri_verts
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def h(self):
        p = self.tri_verts
        d = [np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)]
        return float(np.max(d))

    def edges_of_kind(self, *kinds):
        return np.flatnonzero(np.isin(self.edge_kind, kinds))

    @property
    def primal_edges(self):
        return self.edges_of_kind(PRIMAL_INTERIOR, PRIMAL_BOUNDARY)

    @property
    def dual_edges(self):
        return self.edges_of_kind(DUAL)

    @property
    def boundary_edges(self):
        return self.edges_of_kind(PRIMAL_BOUNDARY)

    def edge(self, e):
        m = int(self.edge_minus[e])
        return Edge(tuple(int(i) for i in self.edge_vertices[e]), EDGE_KINDS[int(self.edge_kind[e])],
                    float(self.edge_length[e]), self.edge_tangent[e].copy(), self.edge_normal[e].copy(),
                    int(self.edge_plus[e]), None if m < 0 else m)

    def edge_endpoints(self):
        return self.points[self.edge_vertices[:, 0]], self.points[self.edge_vertices[:, 1]]


def triangulate(primal):
    """Fan-triangulate every polygon from a point inside its kernel.

    Convex polygons use their centroid; others use the Chebyshev centre of
    the kernel.
    """
    xs = []
    for pi in range(primal.n_polygons):
        p = primal.polygon_points(pi)
        if _is_convex(p):
            xs.append(_polygon_centroid(p))
        else:
            c, r = kernel_chebyshev(p)
            if c is None or r <= 1e-10 * _diameter(p):
                raise MeshError(f"polygon {pi} is not star-shaped (empty kernel)")
            xs.append(c)
    mesh = StaggeredMesh(primal, np.array(xs))
    area = primal.area()
    if abs(mesh.tri_area.sum() - area) > 1e-12 * area or np.any(mesh.tri_area <= 0):
        raise MeshError("sub-triangulation does not cover the polygons")
    return mesh


@dataclass(frozen=True)
class RegularityReport:
    rho_E: float
    rho_B: float
    h: float
    min_angle: float


def regularity_report(mesh):
    primal = mesh.primal
    rho_E, rho_B = np.inf, np.inf
    for pi in range(primal.n_polygons):
        p = primal.polygon_points(pi)
        diam = _diameter(p)
        d = np.roll(p, -1, axis=0) - p
        rho_E = min(rho_E, np.hypot(d[:, 0], d[:, 1]).min() / diam)
        _, r = kernel_chebyshev(p)
        rho_B = min(rho_B, r / diam)
    p = mesh.tri_verts
    angles = []
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        c = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles.append(np.arccos(np.clip(c, -1, 1)))
    rep = RegularityReport(float(rho_E), float(rho_B), mesh.h, float(np.degrees(np.min(angles))))
    if rep.rho_E < 0.01 or rep.rho_B < 0.01:
        warnings.warn(f"mesh regularity is poor: rho_E={rep.rho_E:.3g}, rho_B={rep.rho_B:.3g}")
    return rep
