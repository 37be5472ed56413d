"""Legacy ASCII VTK output with per-triangle vertices (keeps DG jumps visible)."""

import numpy as np

_VTK_TRIANGLE = 5


def _fmt(a):
    return "\n".join(" ".join(f"{x:.17g}" for x in row) for row in a)


def write_vtk(path, maps, fields, title="sdgflow solution"):
    """Write ``fields`` (name -> FEField) sampled at the corners of every
    triangle.  Each triangle owns its three points."""
    mesh = maps.mesh
    T = mesh.n_triangles
    verts = mesh.tri_verts                                  # (T, 3, 2)
    pts = np.concatenate([verts.reshape(-1, 2), np.zeros((3 * T, 1))], axis=1)
    cells = np.arange(3 * T).reshape(T, 3)
    tris = np.arange(T)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {3 * T} double", _fmt(pts),
             f"CELLS {T} {4 * T}", _fmt(np.column_stack([np.full(T, 3), cells])),
             f"CELL_TYPES {T}", "\n".join([str(_VTK_TRIANGLE)] * T),
             f"CELL_DATA {T}", "SCALARS polygon int 1", "LOOKUP_TABLE default",
             "\n".join(str(int(p)) for p in mesh.parent)]
    if fields:
        lines.append(f"POINT_DATA {3 * T}")
    for name, f in fields.items():
        vals = f.eval(tris, verts)
        if f.space == "Q":
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(vals.reshape(-1, 1))]
        elif f.space == "V":
            v = vals.reshape(-1, 2)
            lines += [f"VECTORS {name} double", _fmt(np.column_stack([v, np.zeros(len(v))]))]
        else:
            t = np.zeros((3 * T, 3, 3))
            t[:, :2, :2] = vals.reshape(-1, 2, 2)
            lines += [f"TENSORS {name} double", _fmt(t.reshape(-1, 3))]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
