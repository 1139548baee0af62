"""Taylor-Hood P2-P1 spaces on triangle meshes.

Scalar P2 nodes are the mesh vertices followed by the edge midpoints, so
global node ``nv + e`` sits on edge ``e``. P1 pressure nodes are the
vertices. A velocity coefficient vector stacks the x-component block on
top of the y-component block, each of length ``space.n_velocity_scalar``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations

import numpy as np

from .mesh import Mesh

__all__ = [
    "QuadratureRule", "quadrature", "TaylorHoodSpace", "build_space",
    "p1_basis", "p2_basis", "interpolate", "interpolate_velocity",
    "interpolate_pressure", "CellGeometry",
]

ASSEMBLY_DEGREE = 5
ERROR_DEGREE = 7


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on the reference triangle (0,0), (1,0), (0,1).

    ``points`` are barycentric coordinates ``(l0, l1, l2)``; the reference
    coordinates are ``(x, y) = (l1, l2)``. Weights sum to 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, 1:]


def _orbit(weight, *bary):
    pts = sorted(set(permutations(bary)))
    return [(p, weight) for p in pts]


# Dunavant rules, weights normalised to unit area
_RULES = {
    1: _orbit(1.0, 1 / 3, 1 / 3, 1 / 3),
    2: _orbit(1 / 3, 2 / 3, 1 / 6, 1 / 6),
    # the 4-point degree-3 rule has a negative weight; use the 6-point degree-4 rule
    3: (_orbit(0.223381589678011, 0.108103018168070, 0.445948490915965, 0.445948490915965)
        + _orbit(0.109951743655322, 0.816847572980459, 0.091576213509771, 0.091576213509771)),
    5: (_orbit(0.225, 1 / 3, 1 / 3, 1 / 3)
        + _orbit(0.132394152788506, 0.059715871789770, 0.470142064105115, 0.470142064105115)
        + _orbit(0.125939180544827, 0.797426985353087, 0.101286507323456, 0.101286507323456)),
    7: (_orbit(-0.149570044467682, 1 / 3, 1 / 3, 1 / 3)
        + _orbit(0.175615257433208, 0.479308067841920, 0.260345966079040, 0.260345966079040)
        + _orbit(0.053347235608838, 0.869739794195568, 0.065130102902216, 0.065130102902216)
        + _orbit(0.077113760890257, 0.048690315425316, 0.312865496004874, 0.638444188569810)),
}


def quadrature(degree: int) -> QuadratureRule:
    """Return the symmetric triangle rule exact to ``degree``."""
    if degree not in _RULES:
        raise ValueError(f"unsupported quadrature degree {degree}; choose from {sorted(_RULES)}")
    entries = _RULES[degree]
    points = np.array([p for p, _ in entries], dtype=float)
    weights = 0.5 * np.array([w for _, w in entries], dtype=float)
    return QuadratureRule(points, weights, degree)


def p1_basis(xy):
    """Values ``(nq, 3)`` and reference gradients ``(nq, 3, 2)`` of P1."""
    xy = np.atleast_2d(xy)
    x, y = xy[:, 0], xy[:, 1]
    vals = np.column_stack([1 - x - y, x, y])
    grads = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
                            (len(xy), 3, 2)).copy()
    return vals, grads


def p2_basis(xy):
    """Values ``(nq, 6)`` and reference gradients ``(nq, 6, 2)`` of P2.

    Local ordering: vertices 0, 1, 2, then midpoints of edges (0,1),
    (1,2), (2,0).
    """
    xy = np.atleast_2d(xy)
    x, y = xy[:, 0], xy[:, 1]
    l0, l1, l2 = 1 - x - y, x, y
    vals = np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])
    # d(l0, l1, l2)/d(x, y)
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    lam = np.column_stack([l0, l1, l2])
    grads = np.empty((len(xy), 6, 2))
    for k in range(3):
        grads[:, k] = (4 * lam[:, k] - 1)[:, None] * dl[k]
    for k, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)]):
        grads[:, 3 + k] = 4 * (lam[:, a, None] * dl[b] + lam[:, b, None] * dl[a])
    return vals, grads


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Basis data at the quadrature points of every cell for one rule."""

    points: np.ndarray    # (nc, nq, 2) physical quadrature points
    jxw: np.ndarray       # (nc, nq) weight times |det J|
    phi2: np.ndarray      # (nq, 6)
    dphi2: np.ndarray     # (nc, nq, 6, 2) physical gradients
    phi1: np.ndarray      # (nq, 3)


class TaylorHoodSpace:
    """P2 velocity / P1 pressure degrees of freedom over a mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        nv = mesh.n_vertices
        self.n_velocity_scalar = nv + mesh.n_edges
        self.n_pressure = nv
        self.cell_dofs_p2 = np.hstack([mesh.triangles, mesh.triangle_edges + nv])
        self.cell_dofs_p1 = mesh.triangles
        self.dof_coordinates = np.vstack([mesh.vertices, mesh.edge_midpoints()])
        boundary = np.concatenate([mesh.boundary_vertex_flags, mesh.boundary_edge_flags])
        self.boundary_scalar_dofs = np.flatnonzero(boundary)
        for arr in (self.cell_dofs_p2, self.dof_coordinates, self.boundary_scalar_dofs):
            arr.setflags(write=False)
        self._geometry = {}

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_velocity_scalar

    @cached_property
    def dirichlet_velocity_dofs(self) -> np.ndarray:
        """Constrained entries of a velocity vector (both components)."""
        b = self.boundary_scalar_dofs
        out = np.concatenate([b, b + self.n_velocity_scalar])
        out.setflags(write=False)
        return out

    @cached_property
    def _affine(self):
        p = self.mesh.vertices[self.mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nc, 2, 2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.linalg.inv(jac)
        return p[:, 0], jac, det, inv

    def geometry(self, degree: int = ASSEMBLY_DEGREE) -> CellGeometry:
        if degree not in self._geometry:
            rule = quadrature(degree)
            origin, jac, det, inv = self._affine
            points = origin[:, None, :] + np.einsum("cij,qj->cqi", jac, rule.xy)
            phi2, dref2 = p2_basis(rule.xy)
            phi1, _ = p1_basis(rule.xy)
            # physical gradient = J^{-T} reference gradient
            dphi2 = np.einsum("qkj,cji->cqki", dref2, inv)
            jxw = np.abs(det)[:, None] * rule.weights[None, :]
            self._geometry[degree] = CellGeometry(points, jxw, phi2, dphi2, phi1)
        return self._geometry[degree]

    # -- evaluation of discrete fields at quadrature points -----------------

    def split(self, u: np.ndarray):
        u = np.asarray(u)
        if u.shape[-1] != self.n_velocity:
            raise ValueError(
                f"velocity vector has length {u.shape[-1]}, expected {self.n_velocity}")
        return u[..., :self.n_velocity_scalar], u[..., self.n_velocity_scalar:]

    def velocity_at_quad(self, u, degree=ASSEMBLY_DEGREE):
        """Return values ``(nc, nq, 2)`` and gradients ``(nc, nq, 2, 2)``.

        ``grad[..., i, j]`` is the derivative of component ``i`` along ``x_j``.
        """
        geo = self.geometry(degree)
        comps = self.split(u)
        vals, grads = [], []
        for c in comps:
            local = c[self.cell_dofs_p2]  # (nc, 6)
            vals.append(local @ geo.phi2.T)
            grads.append(np.einsum("ck,cqkj->cqj", local, geo.dphi2))
        return np.stack(vals, axis=-1), np.stack(grads, axis=-2)

    def pressure_at_quad(self, p, degree=ASSEMBLY_DEGREE):
        p = np.asarray(p)
        if p.shape[-1] != self.n_pressure:
            raise ValueError(f"pressure vector has length {p.shape[-1]}, expected {self.n_pressure}")
        geo = self.geometry(degree)
        return p[self.cell_dofs_p1] @ geo.phi1.T

    def evaluate_velocity(self, u, points):
        """Evaluate a velocity field at arbitrary points inside the mesh."""
        cells, ref = self.locate(points)
        phi, _ = p2_basis(ref)
        ux, uy = self.split(u)
        dofs = self.cell_dofs_p2[cells]
        return np.column_stack([np.sum(ux[dofs] * phi, axis=1), np.sum(uy[dofs] * phi, axis=1)])

    def evaluate_pressure(self, p, points):
        cells, ref = self.locate(points)
        phi, _ = p1_basis(ref)
        return np.sum(np.asarray(p)[self.cell_dofs_p1[cells]] * phi, axis=1)

    def locate(self, points, tol=1e-12):
        """Find a containing cell and reference coordinates for each point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        origin, _, _, inv = self._affine
        cells = np.empty(len(points), dtype=np.int64)
        ref = np.empty((len(points), 2))
        for i, pt in enumerate(points):
            xy = np.einsum("cij,cj->ci", inv, pt - origin)
            inside = (xy[:, 0] >= -tol) & (xy[:, 1] >= -tol) & (xy.sum(axis=1) <= 1 + tol)
            hits = np.flatnonzero(inside)
            if len(hits) == 0:
                raise ValueError(f"point {pt} lies outside the mesh")
            cells[i] = hits[0]
            ref[i] = xy[hits[0]]
        return cells, ref


def build_space(mesh: Mesh) -> TaylorHoodSpace:
    return TaylorHoodSpace(mesh)


def interpolate_velocity(space: TaylorHoodSpace, field, t=0.0) -> np.ndarray:
    """Nodal P2 interpolant of ``field(x, y, t) -> (ux, uy)``."""
    x, y = space.dof_coordinates.T
    ux, uy = field(x, y, t)
    out = np.empty(space.n_velocity)
    n = space.n_velocity_scalar
    out[:n] = np.broadcast_to(ux, (n,))
    out[n:] = np.broadcast_to(uy, (n,))
    return out


def interpolate_pressure(space: TaylorHoodSpace, field, t=0.0) -> np.ndarray:
    """Nodal P1 interpolant of a scalar ``field(x, y, t)``."""
    x, y = space.mesh.vertices.T
    return np.array(np.broadcast_to(field(x, y, t), (space.n_pressure,)), dtype=float)


def interpolate(space: TaylorHoodSpace, field, t=0.0, kind="velocity") -> np.ndarray:
    if kind == "velocity":
        return interpolate_velocity(space, field, t)
    if kind == "pressure":
        return interpolate_pressure(space, field, t)
    raise ValueError(f"unknown field kind {kind!r}")
