"""Sparse operators for the Taylor-Hood discretization.

Vector velocity operators act on stacked ``[ux, uy]`` vectors. Mass,
stiffness and convection have no component coupling and are assembled
as a scalar P2 matrix placed on the block diagonal.

The saddle-point matrix uses the unknown ordering
``[velocity (2V), pressure (P), multiplier (1)]`` and reads::

    [[ F, -B^T, 0  ],
     [-B,  0,   m^T],
     [ 0,  m,   0  ]]

where ``B[i, k] = (psi_i, div phi_k)`` and ``m[i] = (psi_i, 1)``. The
multiplier row pins the pressure mean to zero. The sign convention keeps
the matrix symmetric whenever ``F`` is.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .femspace import ASSEMBLY_DEGREE, ERROR_DEGREE, TaylorHoodSpace
from .linsolve import nested_dissection

__all__ = [
    "assemble_mass", "assemble_scalar_mass", "assemble_stiffness",
    "assemble_divergence", "assemble_pressure_mean", "assemble_graddiv",
    "assemble_convection", "convection_action", "trilinear", "assemble_load",
    "assemble_pressure_mass", "SaddleSystem", "saddle_system", "apply_dirichlet",
    "Operators", "lp_norm", "saddle_ordering",
]


def _scatter(space, local, rows_map, cols_map, shape):
    """Sum local cell matrices ``(nc, a, b)`` into a CSR matrix."""
    rows = np.repeat(rows_map[:, :, None], cols_map.shape[1], axis=2)
    cols = np.repeat(cols_map[:, None, :], rows_map.shape[1], axis=1)
    mat = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    out = mat.tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def _scalar_p2(space, local):
    n = space.n_velocity_scalar
    d = space.cell_dofs_p2
    return _scatter(space, local, d, d, (n, n))


def _block_diag(scalar):
    return sp.block_diag([scalar, scalar], format="csr")


def assemble_scalar_mass(space: TaylorHoodSpace, degree=ASSEMBLY_DEGREE):
    geo = space.geometry(degree)
    local = np.einsum("cq,qi,qk->cik", geo.jxw, geo.phi2, geo.phi2)
    return _scalar_p2(space, local)


def assemble_mass(space: TaylorHoodSpace):
    """Vector P2 mass matrix ``(phi_i, phi_k)``."""
    return _block_diag(assemble_scalar_mass(space))


def assemble_pressure_mass(space: TaylorHoodSpace):
    geo = space.geometry(ASSEMBLY_DEGREE)
    local = np.einsum("cq,qi,qk->cik", geo.jxw, geo.phi1, geo.phi1)
    d = space.cell_dofs_p1
    return _scatter(space, local, d, d, (space.n_pressure, space.n_pressure))


def assemble_stiffness(space: TaylorHoodSpace):
    """Vector Laplacian ``(grad phi_i, grad phi_k)`` without viscosity."""
    geo = space.geometry(ASSEMBLY_DEGREE)
    local = np.einsum("cq,cqij,cqkj->cik", geo.jxw, geo.dphi2, geo.dphi2)
    return _block_diag(_scalar_p2(space, local))


def assemble_divergence(space: TaylorHoodSpace):
    """``B[i, k] = (psi_i, div phi_k)`` of shape ``(P, 2V)``."""
    geo = space.geometry(ASSEMBLY_DEGREE)
    n, P = space.n_velocity_scalar, space.n_pressure
    d1, d2 = space.cell_dofs_p1, space.cell_dofs_p2
    blocks = []
    for comp in range(2):
        local = np.einsum("cq,qi,cqk->cik", geo.jxw, geo.phi1, geo.dphi2[..., comp])
        blocks.append(_scatter(space, local, d1, d2, (P, n)))
    return sp.hstack(blocks, format="csr")


def assemble_pressure_mean(space: TaylorHoodSpace):
    """Row vector ``m[i] = (psi_i, 1)``."""
    geo = space.geometry(ASSEMBLY_DEGREE)
    local = np.einsum("cq,qi->ci", geo.jxw, geo.phi1)
    return np.bincount(space.cell_dofs_p1.ravel(), local.ravel(), minlength=space.n_pressure)


def assemble_graddiv(space: TaylorHoodSpace):
    """``G[i, k] = (div phi_i, div phi_k)`` on the vector space."""
    geo = space.geometry(ASSEMBLY_DEGREE)
    n = space.n_velocity_scalar
    d = space.cell_dofs_p2
    # local dof index a*6 + k means component a, scalar basis k
    div = np.concatenate([geo.dphi2[..., 0], geo.dphi2[..., 1]], axis=2)  # (nc, nq, 12)
    local = np.einsum("cq,cqi,cqk->cik", geo.jxw, div, div)
    dofs = np.hstack([d, d + n])
    return _scatter(space, local, dofs, dofs, (2 * n, 2 * n))


def _check_velocity(space, w):
    w = np.asarray(w, dtype=float)
    if w.shape != (space.n_velocity,):
        raise ValueError(f"expected a velocity vector of length {space.n_velocity}, got shape {w.shape}")
    return w


def assemble_convection(space: TaylorHoodSpace, w):
    """Skew-symmetric convection matrix ``N(w)``.

    ``v^T N(w) u = b*(w, u, v) = 1/2 (w.grad u, v) - 1/2 (w.grad v, u)``.
    The matrix is exactly antisymmetric.
    """
    w = _check_velocity(space, w)
    geo = space.geometry(ASSEMBLY_DEGREE)
    wq, _ = space.velocity_at_quad(w)
    # C[i, k] = (w.grad phi_k, phi_i)
    adv = np.einsum("cqj,cqkj->cqk", wq, geo.dphi2)
    local = np.einsum("cq,qi,cqk->cik", geo.jxw, geo.phi2, adv)
    local = 0.5 * (local - local.transpose(0, 2, 1))
    return _block_diag(_scalar_p2(space, local))


def convection_action(space: TaylorHoodSpace, w, u):
    """Vector with entries ``b*(w, u, phi_i)``, i.e. ``N(w) @ u`` matrix-free."""
    w = _check_velocity(space, w)
    u = _check_velocity(space, u)
    geo = space.geometry(ASSEMBLY_DEGREE)
    wq, _ = space.velocity_at_quad(w)
    uq, gu = space.velocity_at_quad(u)
    w_grad_u = np.einsum("cqj,cqij->cqi", wq, gu)          # (w.grad) u
    w_grad_phi = np.einsum("cqj,cqkj->cqk", wq, geo.dphi2)  # (w.grad) phi_k
    n = space.n_velocity_scalar
    out = np.empty(space.n_velocity)
    d = space.cell_dofs_p2.ravel()
    for comp in range(2):
        local = 0.5 * (np.einsum("cq,cq,qk->ck", geo.jxw, w_grad_u[..., comp], geo.phi2)
                       - np.einsum("cq,cq,cqk->ck", geo.jxw, uq[..., comp], w_grad_phi))
        out[comp * n:(comp + 1) * n] = np.bincount(d, local.ravel(), minlength=n)
    return out


def trilinear(space: TaylorHoodSpace, u, v, w, degree=ASSEMBLY_DEGREE):
    """``b*(u, v, w)`` for three discrete velocity fields."""
    geo = space.geometry(degree)
    uq, _ = space.velocity_at_quad(u, degree)
    vq, gv = space.velocity_at_quad(v, degree)
    wq, gw = space.velocity_at_quad(w, degree)
    a = np.einsum("cqj,cqij,cqi->cq", uq, gv, wq)
    b = np.einsum("cqj,cqij,cqi->cq", uq, gw, vq)
    return float(0.5 * np.sum(geo.jxw * (a - b)))


def lp_norm(space: TaylorHoodSpace, values, p=4, degree=ERROR_DEGREE):
    """``L^p`` norm of pointwise data given at the quadrature points.

    ``values`` has shape ``(nc, nq)`` (scalar) or ``(nc, nq, d)`` (vector,
    Euclidean magnitude).
    """
    geo = space.geometry(degree)
    values = np.asarray(values)
    mag = np.linalg.norm(values, axis=-1) if values.ndim == 3 else np.abs(values)
    return float(np.sum(geo.jxw * mag ** p) ** (1.0 / p))


def assemble_load(space: TaylorHoodSpace, f, t=0.0):
    """Load vector ``(f(., t), phi_i)`` for ``f(x, y, t) -> (fx, fy)``."""
    geo = space.geometry(ASSEMBLY_DEGREE)
    x, y = geo.points[..., 0], geo.points[..., 1]
    fx, fy = f(x, y, t)
    n = space.n_velocity_scalar
    d = space.cell_dofs_p2.ravel()
    out = np.empty(space.n_velocity)
    for comp, fc in enumerate((fx, fy)):
        fc = np.broadcast_to(fc, x.shape)
        local = np.einsum("cq,cq,qk->ck", geo.jxw, fc, geo.phi2)
        out[comp * n:(comp + 1) * n] = np.bincount(d, local.ravel(), minlength=n)
    return out


class Operators:
    """Lazily assembled, field-independent operators of one space."""

    def __init__(self, space: TaylorHoodSpace):
        self.space = space

    @cached_property
    def mass(self):
        return assemble_mass(self.space)

    @cached_property
    def stiffness(self):
        return assemble_stiffness(self.space)

    @cached_property
    def divergence(self):
        return assemble_divergence(self.space)

    @cached_property
    def graddiv(self):
        return assemble_graddiv(self.space)

    @cached_property
    def pressure_mean(self):
        return assemble_pressure_mean(self.space)

    @cached_property
    def pressure_mass(self):
        return assemble_pressure_mass(self.space)


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """Block saddle-point operator plus its Dirichlet constraint set.

    ``lift`` is ``None`` until :func:`apply_dirichlet` (or
    :meth:`constrained`) has eliminated the constrained columns; it then
    holds those columns so right-hand sides can be corrected for any
    boundary values without touching the matrix.
    """

    F: sp.csr_matrix
    B: sp.csr_matrix
    m: np.ndarray
    dirichlet_dofs: np.ndarray
    matrix: sp.csr_matrix
    lift: sp.csr_matrix | None = None

    @property
    def n_velocity(self) -> int:
        return self.F.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.B.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def is_constrained(self) -> bool:
        return self.lift is not None

    def constrained(self) -> "SaddleSystem":
        if self.is_constrained:
            return self
        n = self.matrix.shape[0]
        mask = np.zeros(n, dtype=bool)
        mask[self.dirichlet_dofs] = True
        keep = sp.diags((~mask).astype(float))
        A = self.matrix.tocsc()
        lift = A[:, self.dirichlet_dofs].tocsr()
        matrix = (keep @ A @ keep + sp.diags(mask.astype(float))).tocsr()
        matrix.eliminate_zeros()
        matrix.sort_indices()
        return replace(self, matrix=matrix, lift=lift)

    def lift_rhs(self, rhs, values):
        """Move known boundary values to the right-hand side.

        ``rhs`` may be a single vector or a block with one column per
        member; ``values`` must then have matching trailing shape.
        """
        if not self.is_constrained:
            raise ValueError("system has no Dirichlet elimination applied")
        rhs = np.array(rhs, dtype=float, copy=True)
        values = np.asarray(values, dtype=float)
        if values.shape[0] != len(self.dirichlet_dofs):
            raise ValueError(
                f"expected {len(self.dirichlet_dofs)} boundary values, got {values.shape[0]}")
        rhs -= self.lift @ values
        rhs[self.dirichlet_dofs] = values
        return rhs


def saddle_system(F, B, m, dirichlet_dofs) -> SaddleSystem:
    """Assemble the global block matrix from its velocity and pressure blocks."""
    m = np.asarray(m, dtype=float)
    mrow = sp.csr_matrix(m[None, :])
    matrix = sp.bmat([[F, -B.T, None],
                      [-B, None, mrow.T],
                      [None, mrow, None]], format="csr")
    matrix.sort_indices()
    return SaddleSystem(F=F.tocsr(), B=B.tocsr(), m=m,
                        dirichlet_dofs=np.asarray(dirichlet_dofs), matrix=matrix)


def apply_dirichlet(system: SaddleSystem, rhs, boundary_values):
    """Constrain ``system`` and correct ``rhs`` for the given boundary data.

    ``boundary_values`` is a mapping ``dof -> value`` that must cover the
    constraint set exactly. The returned matrix depends only on the set of
    constrained dofs, never on their values.
    """
    dofs = system.dirichlet_dofs
    keys = set(int(k) for k in boundary_values)
    expected = set(int(k) for k in dofs)
    if keys != expected:
        missing = sorted(expected - keys)[:5]
        extra = sorted(keys - expected)[:5]
        raise ValueError(f"boundary values do not match the constraint set "
                         f"(missing e.g. {missing}, extra e.g. {extra})")
    values = np.array([boundary_values[int(k)] for k in dofs], dtype=float)
    constrained = system.constrained()
    return constrained, constrained.lift_rhs(rhs, values)


def saddle_ordering(space: TaylorHoodSpace):
    """Nested-dissection ordering for the saddle matrix of ``space``."""
    cached = getattr(space, "_saddle_ordering", None)
    if cached is None:
        n = space.n_velocity_scalar
        cell_dofs = np.hstack([space.cell_dofs_p2, space.cell_dofs_p2 + n,
                               space.cell_dofs_p1 + 2 * n])
        centroids = space.mesh.vertices[space.mesh.triangles].mean(axis=1)
        cached = nested_dissection(cell_dofs, centroids, 2 * n + space.n_pressure + 1)
        cached.setflags(write=False)
        space._saddle_ordering = cached
    return cached
