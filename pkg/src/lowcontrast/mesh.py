"""Conforming 2D triangular meshes with precomputed element geometry.

Provides structured unit-square generation (crossed-diagonal pattern),
a Gmsh MSH 2.2 ASCII importer, and per-element geometry (areas and
P1 basis gradients).  Boundary nodes are detected topologically from
single-owner edges, so imported curved domains work without tags.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MshParseError(Exception):
    """Raised when an MSH file cannot be parsed; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation with element geometry.

    Attributes:
        node_coords: (n_nodes, 2) float array of node positions.
        triangles: (n_elems, 3) int array of node indices, positively oriented.
        boundary_nodes: sorted int array of nodes on single-owner edges.
        elem_area: (n_elems,) positive triangle areas.
        elem_basis_grad: (n_elems, 3, 2) gradients of the three P1 basis
            functions, constant on each triangle.
    """

    node_coords: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    elem_area: np.ndarray = field(default=None)
    elem_basis_grad: np.ndarray = field(default=None)

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elems(self) -> int:
        return self.triangles.shape[0]

    @property
    def free_nodes(self) -> np.ndarray:
        """Sorted indices of non-Dirichlet (interior) nodes."""
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def total_area(self) -> float:
        return float(self.elem_area.sum())


def _boundary_nodes(triangles: np.ndarray, n_nodes: int) -> np.ndarray:
    """Nodes lying on edges owned by exactly one triangle."""
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    single = uniq[counts == 1]
    return np.unique(single.ravel())


def compute_geometry(mesh: Mesh) -> Mesh:
    """Return a copy of ``mesh`` with areas and P1 basis gradients filled.

    Triangle orientation is normalized to positive signed area (node order
    flipped where needed).  A zero-area triangle raises ValueError naming
    the offending element.
    """
    coords = np.asarray(mesh.node_coords, dtype=float)
    tris = np.asarray(mesh.triangles, dtype=np.int64).copy()
    if tris.size and tris.max() >= coords.shape[0]:
        raise ValueError("triangle references node index out of range")

    p0 = coords[tris[:, 0]]
    p1 = coords[tris[:, 1]]
    p2 = coords[tris[:, 2]]
    signed2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (
        p2[:, 0] - p0[:, 0]
    )
    flip = signed2 < 0
    if flip.any():
        tris[flip] = tris[flip][:, [0, 2, 1]]
        p1, p2 = coords[tris[:, 1]], coords[tris[:, 2]]
        signed2 = np.abs(signed2)
    degenerate = np.flatnonzero(signed2 == 0.0)
    if degenerate.size:
        raise ValueError(f"degenerate (zero-area) triangle at element {degenerate[0]}")
    area = 0.5 * signed2

    # grad of barycentric basis i is the inward normal of the opposite edge / 2A
    grads = np.empty((tris.shape[0], 3, 2))
    grads[:, 0, 0] = p1[:, 1] - p2[:, 1]
    grads[:, 0, 1] = p2[:, 0] - p1[:, 0]
    grads[:, 1, 0] = p2[:, 1] - p0[:, 1]
    grads[:, 1, 1] = p0[:, 0] - p2[:, 0]
    grads[:, 2, 0] = p0[:, 1] - p1[:, 1]
    grads[:, 2, 1] = p1[:, 0] - p0[:, 0]
    grads /= signed2[:, None, None]

    return Mesh(
        node_coords=coords,
        triangles=tris,
        boundary_nodes=_boundary_nodes(tris, coords.shape[0]),
        elem_area=area,
        elem_basis_grad=grads,
    )


def from_arrays(node_coords, triangles) -> Mesh:
    """Build a finished mesh (geometry + boundary detection) from raw arrays."""
    coords = np.asarray(node_coords, dtype=float).reshape(-1, 2)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    stub = Mesh(node_coords=coords, triangles=tris, boundary_nodes=np.empty(0, dtype=np.int64))
    return compute_geometry(stub)


def generate_unit_square(nx: int, ny: int) -> Mesh:
    """Structured triangulation of [0,1]^2 with (nx+1)(ny+1) nodes.

    Each cell is split along a diagonal that alternates with the parity of
    the cell index (crossed pattern), avoiding directional bias.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    xv, yv = np.meshgrid(xs, ys, indexing="ij")
    coords = np.column_stack([xv.ravel(), yv.ravel()])

    def nid(i, j):
        return i * (ny + 1) + j

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    n00 = nid(i, j)
    n10 = nid(i + 1, j)
    n01 = nid(i, j + 1)
    n11 = nid(i + 1, j + 1)
    even = (i + j) % 2 == 0

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    # even cells: diagonal n00-n11; odd cells: diagonal n10-n01
    tris[0::2] = np.where(even[:, None], np.column_stack([n00, n10, n11]), np.column_stack([n00, n10, n01]))
    tris[1::2] = np.where(even[:, None], np.column_stack([n00, n11, n01]), np.column_stack([n10, n11, n01]))
    return from_arrays(coords, tris)


def import_msh(path) -> Mesh:
    """Read a Gmsh MSH 2.2 ASCII file; keeps 3-node triangles only.

    Physical tags are ignored; boundary nodes are recovered topologically.
    Raises MshParseError (with line number) on malformed input, missing
    triangles, or an unsupported format version.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()

    nodes: dict[int, tuple[float, float]] = {}
    tris: list[tuple[int, int, int]] = []
    ln = 0
    n = len(lines)

    def next_line():
        nonlocal ln
        while ln < n and not lines[ln].strip():
            ln += 1
        if ln >= n:
            raise MshParseError("unexpected end of file", ln)
        ln += 1
        return lines[ln - 1].strip()

    saw_format = saw_nodes = False
    while ln < n:
        stripped = lines[ln].strip()
        if not stripped:
            ln += 1
            continue
        if stripped == "$MeshFormat":
            ln += 1
            header = next_line()
            version = header.split()[0] if header.split() else ""
            if not version.startswith("2.2"):
                raise MshParseError(f"unsupported MSH version '{version}' (need 2.2)", ln)
            if next_line() != "$EndMeshFormat":
                raise MshParseError("expected $EndMeshFormat", ln)
            saw_format = True
        elif stripped == "$Nodes":
            ln += 1
            try:
                count = int(next_line())
            except ValueError:
                raise MshParseError("node count is not an integer", ln) from None
            for _ in range(count):
                parts = next_line().split()
                if len(parts) < 4:
                    raise MshParseError("node line needs 'id x y z'", ln)
                try:
                    nodes[int(parts[0])] = (float(parts[1]), float(parts[2]))
                except ValueError:
                    raise MshParseError("malformed node line", ln) from None
            if next_line() != "$EndNodes":
                raise MshParseError("expected $EndNodes", ln)
            saw_nodes = True
        elif stripped == "$Elements":
            ln += 1
            try:
                count = int(next_line())
            except ValueError:
                raise MshParseError("element count is not an integer", ln) from None
            for _ in range(count):
                parts = next_line().split()
                if len(parts) < 3:
                    raise MshParseError("element line too short", ln)
                try:
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    if etype == 2:  # 3-node triangle
                        ids = [int(x) for x in parts[3 + ntags : 6 + ntags]]
                        if len(ids) != 3:
                            raise MshParseError("triangle needs 3 node ids", ln)
                        tris.append(tuple(ids))
                except ValueError:
                    raise MshParseError("malformed element line", ln) from None
            if next_line() != "$EndElements":
                raise MshParseError("expected $EndElements", ln)
        else:
            ln += 1  # skip unknown sections line by line

    if not saw_format:
        raise MshParseError("missing $MeshFormat section")
    if not saw_nodes or not nodes:
        raise MshParseError("missing or empty $Nodes section")
    if not tris:
        raise MshParseError("no triangles (element type 2) found")

    # keep only nodes referenced by a triangle; files often carry nodes that
    # belong to discarded line/point elements, which would orphan the pencil
    used = sorted({i for t in tris for i in t})
    remap = {msh_id: k for k, msh_id in enumerate(used)}
    try:
        coords = np.array([nodes[i] for i in used])
    except KeyError as exc:
        raise MshParseError(f"element references unknown node id {exc.args[0]}") from None
    conn = np.array([[remap[a], remap[b], remap[c]] for a, b, c in tris], dtype=np.int64)
    return from_arrays(coords, conn)
