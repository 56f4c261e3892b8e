"""Legacy ASCII VTK output for meshes and nodal scalar fields.

Float formatting is pinned to 17 significant digits so identical inputs
produce byte-identical files.
"""
from __future__ import annotations

import numpy as np


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def export_vtk(mesh, fields: dict, path) -> None:
    """Write an UNSTRUCTURED_GRID file with one SCALARS block per field.

    ``fields`` maps names to nodal arrays; insertion order is preserved.
    """
    for name, values in fields.items():
        v = np.asarray(values)
        if v.shape != (mesh.n_nodes,):
            raise ValueError(f"field '{name}' is not a nodal array")

    lines = [
        "# vtk DataFile Version 3.0",
        "lowcontrast output",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y in mesh.node_coords:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {mesh.n_elems} {4 * mesh.n_elems}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.n_elems}")
    lines.extend(["5"] * mesh.n_elems)
    if fields:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in fields.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in np.asarray(values, dtype=float))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
