"""Independent reference implementations used as test oracles."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ensnse.assembly import Operators, assemble_convection, assemble_load
from ensnse.femspace import interpolate_velocity


def single_member_bdf2(space, problem, dt, n_steps, extrapolation=(3.0, -3.0, 1.0)):
    """Plain BDF2 with extrapolated convection for one realization.

    Dirichlet rows are replaced (no column elimination), the pressure mean
    is fixed by a bordered row, and each step is solved with ``spsolve``.
    Returns the velocity at levels ``0..n_steps``.
    """
    ops = Operators(space)
    M, A, B, m = ops.mass, ops.stiffness, ops.divergence, ops.pressure_mean
    nv, P = space.n_velocity, space.n_pressure
    bnd = space.dirichlet_velocity_dofs
    xb, yb = space.dof_coordinates[space.boundary_scalar_dofs].T
    levels = [interpolate_velocity(space, problem.velocity, k * dt) for k in range(3)]
    e0, e1, e2 = extrapolation
    for n in range(2, n_steps):
        t_new = (n + 1) * dt
        w = e0 * levels[n] + e1 * levels[n - 1] + e2 * levels[n - 2]
        F = 1.5 / dt * M + problem.nu * A + assemble_convection(space, w)
        K = sp.bmat([[F, -B.T, None], [-B, None, sp.csr_matrix(m[:, None])],
                     [None, sp.csr_matrix(m[None, :]), None]], format="lil")
        rhs = np.zeros(nv + P + 1)
        rhs[:nv] = M @ (2.0 * levels[n] - 0.5 * levels[n - 1]) / dt
        rhs[:nv] += assemble_load(space, problem.forcing, t_new)
        gx, gy = problem.boundary(xb, yb, t_new)
        g = np.concatenate([np.broadcast_to(gx, xb.shape), np.broadcast_to(gy, yb.shape)])
        for d, val in zip(bnd, g):
            K.rows[d] = [int(d)]
            K.data[d] = [1.0]
            rhs[d] = val
        x = spla.spsolve(K.tocsc(), rhs)
        levels.append(x[:nv])
    return np.array(levels)
