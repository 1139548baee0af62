"""Ensemble time stepping with one shared matrix per step.

Each member ``j`` advances with

    (alpha . [u^{n+1}, u^n, u^{n-1}, u^{n-2}]_j / dt, v)
      + b*(<u>^n, u_j^{n+1}, v) + b*(u_j'^n, E u_j^n, v)
      - (p_j^{n+1}, div v) + nu (grad u_j^{n+1}, grad v)
      + gamma_gd (div u_j^{n+1}, div v) = (f_j^{n+1}, v)

where ``E u^n`` is the extrapolant ``beta . [u^n, u^{n-1}, u^{n-2}]``,
``<u>^n`` its ensemble average and ``u_j'^n`` the member's deviation from
that average. Only the average enters the matrix, so all members share
one factorization; the fluctuation term is applied to the right-hand side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .assembly import (Operators, SaddleSystem, assemble_convection, assemble_load,
                       convection_action, lp_norm, saddle_ordering, saddle_system)
from .femspace import ERROR_DEGREE, TaylorHoodSpace, interpolate_pressure, interpolate_velocity
from .linsolve import factorize, solve_multi
from .problems import AnalyticProblem

__all__ = [
    "SchemeCoefficients", "bdf_coefficients", "en_bdf2_coefficients",
    "scheme_coefficients", "EnsembleState", "StepReport", "NumericalBlowup",
    "ensemble_mean", "fluctuation", "fluctuations", "build_shared_operator",
    "member_rhs", "boundary_values", "advance", "startup", "cfl_indicator",
    "cfl_indicator_2d", "discrete_divergence", "interpolate_mean_free_pressure",
]

logger = logging.getLogger(__name__)


class NumericalBlowup(RuntimeError):
    def __init__(self, message, step=None, member=None):
        super().__init__(message)
        self.step = step
        self.member = member


@dataclass(frozen=True)
class SchemeCoefficients:
    """Time-derivative weights ``alpha`` (levels n+1, n, n-1, n-2; divide
    by dt) and extrapolation weights ``beta`` (levels n, n-1, n-2)."""

    name: str
    gamma: float | None
    alpha: tuple
    beta: tuple
    history_depth: int = 3


_BDF2 = np.array([1.5, -2.0, 0.5, 0.0])
_BDF3 = np.array([11 / 6, -3.0, 1.5, -1 / 3])


def bdf_coefficients(gamma: float = 0.5) -> SchemeCoefficients:
    """Blend of BDF2 (weight ``gamma``) and BDF3, with cubic-exact extrapolation."""
    if not 0.5 <= gamma <= 1.0:
        raise ValueError(f"blend parameter must lie in [1/2, 1], got {gamma}")
    if gamma == 0.5:
        alpha = tuple(np.array([10.0, -15.0, 6.0, -1.0]) / 6.0)
    else:
        alpha = tuple(gamma * _BDF2 + (1 - gamma) * _BDF3)
    return SchemeCoefficients("blended", float(gamma), alpha, (3.0, -3.0, 1.0))


def en_bdf2_coefficients() -> SchemeCoefficients:
    """Two-step BDF2 with linear extrapolation ``2 u^n - u^{n-1}``."""
    return SchemeCoefficients("bdf2", None, tuple(_BDF2), (2.0, -1.0, 0.0))


def scheme_coefficients(scheme: str = "blended", gamma: float = 0.5) -> SchemeCoefficients:
    if scheme == "blended":
        return bdf_coefficients(gamma)
    if scheme == "bdf2":
        return en_bdf2_coefficients()
    raise ValueError(f"unknown scheme {scheme!r}; expected 'blended' or 'bdf2'")


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """Velocity history of all members at levels ``n-2, n-1, n``.

    ``levels`` has shape ``(3, J, 2V)`` with the oldest level first.
    """

    space: TaylorHoodSpace
    operators: Operators
    problems: tuple
    coefficients: SchemeCoefficients
    dt: float
    nu: float
    levels: np.ndarray
    pressure: np.ndarray
    step: int = 2
    grad_div: float = 0.0
    cfl_threshold: float = 1.0

    @property
    def J(self) -> int:
        return self.levels.shape[1]

    @property
    def t(self) -> float:
        return self.step * self.dt

    def current(self, j=None):
        return self.levels[-1] if j is None else self.levels[-1, j]


@dataclass(frozen=True)
class StepReport:
    step: int
    t: float
    cfl: np.ndarray
    cfl_2d: np.ndarray
    kinetic_energy: np.ndarray
    grad_norm_sq: np.ndarray
    residuals: np.ndarray
    divergence_residuals: np.ndarray
    shared_factorization: bool = True
    cfl_exceeded: bool = False


def _extrapolants(state: EnsembleState) -> np.ndarray:
    b0, b1, b2 = state.coefficients.beta
    lv = state.levels
    if lv.shape[0] < 3:
        raise ValueError("ensemble state needs three history levels")
    return b0 * lv[2] + b1 * lv[1] + b2 * lv[0]


def ensemble_mean(state: EnsembleState) -> np.ndarray:
    """Average over members of the extrapolated velocity."""
    return _extrapolants(state).mean(axis=0)


def fluctuations(state: EnsembleState) -> np.ndarray:
    ext = _extrapolants(state)
    return ext - ext.mean(axis=0)


def fluctuation(state: EnsembleState, j: int) -> np.ndarray:
    return fluctuations(state)[j]


def build_shared_operator(state: EnsembleState) -> SaddleSystem:
    """Member-independent saddle system at the current step."""
    ops, space = state.operators, state.space
    a0 = state.coefficients.alpha[0]
    F = (a0 / state.dt) * ops.mass + state.nu * ops.stiffness
    F = F + assemble_convection(space, ensemble_mean(state))
    if state.grad_div:
        F = F + state.grad_div * ops.graddiv
    return saddle_system(F, ops.divergence, ops.pressure_mean, space.dirichlet_velocity_dofs)


def member_rhs(state: EnsembleState, j: int, fluct=None) -> np.ndarray:
    """Full saddle-system right-hand side of member ``j`` (before lifting)."""
    space, ops = state.space, state.operators
    _, a1, a2, a3 = state.coefficients.alpha
    lv = state.levels[:, j]
    history = -(a1 * lv[2] + a2 * lv[1] + a3 * lv[0]) / state.dt
    rhs_u = ops.mass @ history
    rhs_u += assemble_load(space, state.problems[j].forcing, state.t + state.dt)
    if fluct is None:
        fluct = fluctuation(state, j)
    if np.any(fluct):
        b0, b1, b2 = state.coefficients.beta
        ext = b0 * lv[2] + b1 * lv[1] + b2 * lv[0]
        rhs_u -= convection_action(space, fluct, ext)
    rhs = np.zeros(space.n_velocity + space.n_pressure + 1)
    rhs[:space.n_velocity] = rhs_u
    return rhs


def boundary_values(space: TaylorHoodSpace, problem: AnalyticProblem, t: float) -> np.ndarray:
    """Nodal boundary data ordered like ``space.dirichlet_velocity_dofs``."""
    x, y = space.dof_coordinates[space.boundary_scalar_dofs].T
    gx, gy = problem.boundary(x, y, t)
    n = len(x)
    return np.concatenate([np.broadcast_to(gx, (n,)), np.broadcast_to(gy, (n,))]).astype(float)


def _norms(state, u):
    ops = state.operators
    return float(u @ (ops.mass @ u)), float(u @ (ops.stiffness @ u))


def cfl_indicator(state: EnsembleState, j: int) -> float:
    """``dt ||grad u_j'||^2 / (nu h)`` for the current fluctuation."""
    u = fluctuation(state, j)
    grad_sq = max(float(u @ (state.operators.stiffness @ u)), 0.0)
    return state.dt * grad_sq / (state.nu * state.space.mesh.h)


def cfl_indicator_2d(state: EnsembleState, j: int, lp: int = 2) -> float:
    """``dt (||u_j'|| + ||div u_j'||)^2 / (nu h)``.

    With ``lp=4`` both norms are L^4 norms evaluated by quadrature.
    """
    u = fluctuation(state, j)
    ops = state.operators
    if lp == 2:
        a = np.sqrt(max(float(u @ (ops.mass @ u)), 0.0))
        b = np.sqrt(max(float(u @ (ops.graddiv @ u)), 0.0))
    elif lp == 4:
        vals, grads = state.space.velocity_at_quad(u, ERROR_DEGREE)
        a = lp_norm(state.space, vals, 4)
        b = lp_norm(state.space, grads[..., 0, 0] + grads[..., 1, 1], 4)
    else:
        raise ValueError("lp must be 2 or 4")
    return state.dt * (a + b) ** 2 / (state.nu * state.space.mesh.h)


def _split_solution(space, X):
    nu_, npr = space.n_velocity, space.n_pressure
    return X[:nu_], X[nu_:nu_ + npr], X[nu_ + npr]


def advance(state: EnsembleState):
    """Advance every member by one step; returns ``(new_state, report)``."""
    space = state.space
    J = state.J
    fl = fluctuations(state)
    cfl = np.array([state.dt * max(float(u @ (state.operators.stiffness @ u)), 0.0)
                    / (state.nu * space.mesh.h) for u in fl])
    cfl2 = np.array([cfl_indicator_2d(state, j) for j in range(J)])

    system = build_shared_operator(state).constrained()
    t_new = state.t + state.dt
    rhs = np.empty((system.shape[0], J))
    for j in range(J):
        rhs[:, j] = system.lift_rhs(member_rhs(state, j, fl[j]),
                                    boundary_values(space, state.problems[j], t_new))
    lu = factorize(system.matrix, saddle_ordering(space))
    X = solve_multi(lu, rhs)

    residuals = np.linalg.norm(system.matrix @ X - rhs, axis=0) / np.maximum(
        np.linalg.norm(rhs, axis=0), 1e-300)
    u_new, p_new, _ = _split_solution(space, X)
    u_new = u_new.T.copy()
    p_new = p_new.T.copy()
    for j in range(J):
        if not (np.all(np.isfinite(u_new[j])) and np.all(np.isfinite(p_new[j]))):
            raise NumericalBlowup(f"non-finite solution for member {j} at step {state.step + 1}",
                                  state.step + 1, j)

    new_levels = np.concatenate([state.levels[1:], u_new[None]], axis=0)
    new_state = replace(state, levels=new_levels, pressure=p_new, step=state.step + 1)
    ke = np.empty(J)
    gn = np.empty(J)
    div = np.empty(J)
    for j in range(J):
        m2, a2 = _norms(state, u_new[j])
        ke[j], gn[j] = 0.5 * m2, a2
        div[j] = discrete_divergence(state.operators, u_new[j])
        if not np.isfinite(ke[j]):
            raise NumericalBlowup(f"non-finite energy for member {j} at step {new_state.step}",
                                  new_state.step, j)
    report = StepReport(
        step=new_state.step, t=new_state.t, cfl=cfl, cfl_2d=cfl2, kinetic_energy=ke,
        grad_norm_sq=gn, residuals=residuals, divergence_residuals=div,
        cfl_exceeded=bool(np.any(cfl > state.cfl_threshold)))
    if report.cfl_exceeded:
        logger.warning("step %d: CFL indicator %.3g exceeds threshold %.3g",
                       new_state.step, cfl.max(), state.cfl_threshold)
    return new_state, report


def discrete_divergence(ops: Operators, u) -> float:
    """Norm of ``B u`` with its component along the pressure-mean row removed.

    Zero-mean pressures only test the divergence against mean-free
    functions, so the constant-mode part of ``B u`` is not constrained.
    """
    r = ops.divergence @ u
    m = ops.pressure_mean
    r = r - (r @ m) / (m @ m) * m
    return float(np.linalg.norm(r))


# -- startup -----------------------------------------------------------------

def _solve_single(state, F, rhs_u, problem, t):
    space, ops = state.space, state.operators
    system = saddle_system(F, ops.divergence, ops.pressure_mean,
                           space.dirichlet_velocity_dofs).constrained()
    rhs = np.zeros(system.shape[0])
    rhs[:space.n_velocity] = rhs_u
    rhs = system.lift_rhs(rhs, boundary_values(space, problem, t))
    X = factorize(system.matrix, saddle_ordering(space)).solve(rhs)
    u, p, _ = _split_solution(space, X)
    return u, p


def _crank_nicolson(state, u0, w, problem, t0):
    """One Crank-Nicolson step with convection linearised about ``w``."""
    ops, dt = state.operators, state.dt
    N = assemble_convection(state.space, w)
    half = 0.5 * (state.nu * ops.stiffness + N)
    if state.grad_div:
        half = half + 0.5 * state.grad_div * ops.graddiv
    F = ops.mass / dt + half
    rhs = ops.mass @ u0 / dt - half @ u0 + assemble_load(state.space, problem.forcing, t0 + 0.5 * dt)
    return _solve_single(state, F, rhs, problem, t0 + dt)


def startup(space: TaylorHoodSpace, problems: Sequence[AnalyticProblem], dt: float, *,
            scheme: str = "blended", gamma: float = 0.5, grad_div: float = 0.0,
            mode: str = "exact", cfl_threshold: float = 1.0,
            operators: Operators | None = None) -> EnsembleState:
    """Build the state at levels 0, 1, 2.

    ``mode='exact'`` interpolates the analytic solution; ``mode='cn'``
    takes two Crank-Nicolson steps from the interpolated initial data.
    The first of these uses a predictor-corrector pass for the advecting
    velocity, the second the extrapolation ``(3 u^1 - u^0) / 2``.
    """
    problems = tuple(problems)
    if not problems:
        raise ValueError("need at least one ensemble member")
    if dt <= 0:
        raise ValueError("time step must be positive")
    nu = problems[0].nu
    if any(p.nu != nu for p in problems):
        raise ValueError("all members must share one viscosity")
    coeffs = scheme_coefficients(scheme, gamma)
    ops = operators if operators is not None else Operators(space)
    J = len(problems)
    levels = np.empty((3, J, space.n_velocity))
    pressure = np.zeros((J, space.n_pressure))
    state = EnsembleState(space, ops, problems, coeffs, float(dt), float(nu), levels, pressure,
                          step=2, grad_div=float(grad_div), cfl_threshold=float(cfl_threshold))
    if mode == "exact":
        for j, prob in enumerate(problems):
            if not prob.has_exact_solution:
                raise ValueError(f"exact startup needs an analytic solution ({prob.name!r} has none)")
            for k in range(3):
                levels[k, j] = interpolate_velocity(space, prob.velocity, k * dt)
            pressure[j] = interpolate_mean_free_pressure(space, ops, prob, 2 * dt)
    elif mode in ("cn", "crank_nicolson"):
        for j, prob in enumerate(problems):
            u0 = interpolate_velocity(space, prob.initial, 0.0)
            guess, _ = _crank_nicolson(state, u0, u0, prob, 0.0)
            u1, _ = _crank_nicolson(state, u0, 0.5 * (u0 + guess), prob, 0.0)
            u2, p2 = _crank_nicolson(state, u1, 1.5 * u1 - 0.5 * u0, prob, dt)
            levels[0, j], levels[1, j], levels[2, j] = u0, u1, u2
            pressure[j] = p2
    else:
        raise ValueError(f"unknown startup mode {mode!r}; expected 'exact' or 'cn'")
    return state


def interpolate_mean_free_pressure(space, ops, problem, t):
    p = interpolate_pressure(space, problem.pressure, t)
    m = ops.pressure_mean
    return p - (m @ p) / m.sum()
