"""Conforming triangulations of the unit square.

Vertices are stored as an ``(nv, 2)`` float array and triangles as an
``(nt, 3)`` int array with counterclockwise orientation. Edges are the
unique vertex pairs ``(a, b)`` with ``a < b``; each triangle also records
its three edge indices in the local order (0,1), (1,2), (2,0), which is
the order the P2 midpoint nodes use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "unit_square_mesh", "refine", "dump_mesh"]

_ON_BOUNDARY_TOL = 1e-12

# local vertex pairs for the three edges of a triangle
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with edge connectivity and boundary tags."""

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(init=False)
    triangle_edges: np.ndarray = field(init=False)
    boundary_edge_flags: np.ndarray = field(init=False)
    boundary_vertex_flags: np.ndarray = field(init=False)
    h: float = field(init=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle vertex index out of range")
        p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
        d1, d2 = p1 - p0, p2 - p0
        if np.any(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] <= 0):
            raise ValueError("triangles must be counterclockwise with positive area")

        # every triangle edge as a sorted pair, then uniquified
        pairs = triangles[:, LOCAL_EDGES].reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise ValueError("non-manifold mesh: an edge is shared by more than 2 triangles")
        triangle_edges = inverse.reshape(-1, 3)
        boundary_edges = counts == 1

        boundary_vertices = np.zeros(len(vertices), dtype=bool)
        boundary_vertices[edges[boundary_edges].ravel()] = True

        lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
        h = float(lengths.max()) if len(lengths) else 0.0

        for name, value in [("vertices", vertices), ("triangles", triangles),
                            ("edges", edges), ("triangle_edges", triangle_edges),
                            ("boundary_edge_flags", boundary_edges),
                            ("boundary_vertex_flags", boundary_vertices)]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "h", h)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def on_square_boundary(self, points: np.ndarray) -> np.ndarray:
        """Geometric test for ``x in {0, 1}`` or ``y in {0, 1}``."""
        points = np.asarray(points)
        near = lambda s: (np.abs(s) <= _ON_BOUNDARY_TOL) | (np.abs(s - 1.0) <= _ON_BOUNDARY_TOL)
        return near(points[:, 0]) | near(points[:, 1])


def unit_square_mesh(n: int) -> Mesh:
    """Split an ``n x n`` grid of squares into ``2 n**2`` right triangles.

    Every square is cut along the diagonal from its lower-left to its
    upper-right corner, so ``h = sqrt(2) / n``.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(s, s)
    vertices = np.column_stack([x.ravel(), y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles)


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement: each triangle is split into four similar children."""
    nv = mesh.n_vertices
    vertices = np.vstack([mesh.vertices, mesh.edge_midpoints()])
    t = mesh.triangles
    m = mesh.triangle_edges + nv  # midpoint vertex of local edges (01, 12, 20)
    children = np.stack([
        np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ], axis=1).reshape(-1, 3)
    return Mesh(vertices, children)


def dump_mesh(mesh: Mesh, path) -> None:
    """Write a plain-text debugging dump of ``mesh``."""
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        fh.write(f"boundary {mesh.n_vertices}\n")
        for flag in mesh.boundary_vertex_flags:
            fh.write(f"{int(flag)}\n")
