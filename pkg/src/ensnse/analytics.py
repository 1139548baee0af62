"""Error norms, convergence rates and numerical checks of the scheme's bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .femspace import ERROR_DEGREE, TaylorHoodSpace

__all__ = [
    "l2_error", "h1_semi_error", "pressure_l2_error", "ErrorSeries",
    "discrete_norm_inf0", "discrete_norm_20", "convergence_rate",
    "truncation_probe", "ConsistencyReport", "consistency_check",
    "EnergyLedger", "energy_ledger", "POINCARE_UNIT_SQUARE",
    "field_l2_norm_sq", "field_grad_l2_norm_sq",
]

# 1 / sqrt(lambda_1) for the Dirichlet Laplacian on the unit square
POINCARE_UNIT_SQUARE = 1.0 / (math.pi * math.sqrt(2.0))


def _exact_at_quad(space, exact, t, degree):
    geo = space.geometry(degree)
    x, y = geo.points[..., 0], geo.points[..., 1]
    return geo, x, y, exact(x, y, t)


def l2_error(space: TaylorHoodSpace, u_h, exact, t, degree=ERROR_DEGREE) -> float:
    """``||u_h - exact(., t)||`` over the domain."""
    geo, x, y, (ex, ey) = _exact_at_quad(space, exact, t, degree)
    vals, _ = space.velocity_at_quad(u_h, degree)
    err = (vals[..., 0] - ex) ** 2 + (vals[..., 1] - ey) ** 2
    return float(np.sqrt(np.sum(geo.jxw * err)))


def h1_semi_error(space: TaylorHoodSpace, u_h, exact_grad, t, degree=ERROR_DEGREE) -> float:
    """``||grad u_h - grad exact(., t)||``; ``exact_grad`` returns the 2x2 Jacobian."""
    geo, x, y, g = _exact_at_quad(space, exact_grad, t, degree)
    _, grads = space.velocity_at_quad(u_h, degree)
    err = 0.0
    for i in range(2):
        for j in range(2):
            err = err + (grads[..., i, j] - g[i][j]) ** 2
    return float(np.sqrt(np.sum(geo.jxw * err)))


def pressure_l2_error(space: TaylorHoodSpace, p_h, exact, t, degree=ERROR_DEGREE) -> float:
    """L2 error of the pressure after removing the mean of both fields."""
    geo, x, y, pe = _exact_at_quad(space, exact, t, degree)
    ph = space.pressure_at_quad(p_h, degree)
    area = geo.jxw.sum()
    diff = ph - np.broadcast_to(pe, ph.shape)
    diff = diff - np.sum(geo.jxw * diff) / area
    return float(np.sqrt(np.sum(geo.jxw * diff ** 2)))


def field_l2_norm_sq(space, fn, t, degree=ERROR_DEGREE) -> float:
    """``||fn(., t)||^2`` for a closed-form vector field."""
    geo, x, y, comps = _exact_at_quad(space, fn, t, degree)
    return float(sum(np.sum(geo.jxw * np.broadcast_to(c, x.shape) ** 2) for c in comps))


def field_grad_l2_norm_sq(space, grad_fn, t, degree=ERROR_DEGREE) -> float:
    geo, x, y, g = _exact_at_quad(space, grad_fn, t, degree)
    return float(sum(np.sum(geo.jxw * np.broadcast_to(g[i][j], x.shape) ** 2)
                     for i in range(2) for j in range(2)))


@dataclass
class ErrorSeries:
    """Per-level errors of one member."""

    dt: float
    h: float
    times: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    h1: list = field(default_factory=list)
    pressure: list = field(default_factory=list)

    def append(self, t, l2, h1, p=0.0):
        if self.times and t <= self.times[-1]:
            raise ValueError("error series times must increase")
        vals = (l2, h1, p)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"invalid error values {vals} at t={t}")
        self.times.append(float(t))
        self.l2.append(float(l2))
        self.h1.append(float(h1))
        self.pressure.append(float(p))

    def __len__(self):
        return len(self.times)


def _values(series, which):
    if isinstance(series, ErrorSeries):
        vals = getattr(series, which)
    else:
        vals = series
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        raise ValueError("empty error series")
    return vals


def discrete_norm_inf0(series, which="l2") -> float:
    """Maximum over time levels."""
    return float(_values(series, which).max())


def discrete_norm_20(series, which="h1", dt=None) -> float:
    """``(sum_n e_n^2 dt)^(1/2)`` over all recorded levels."""
    vals = _values(series, which)
    if dt is None:
        if not isinstance(series, ErrorSeries):
            raise ValueError("dt is required for a raw sequence")
        dt = series.dt
    return float(np.sqrt(np.sum(vals ** 2) * dt))


def convergence_rate(e_coarse: float, e_fine: float) -> float:
    """Observed order ``log2(e_coarse / e_fine)`` for a halved step."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError(f"errors must be positive, got {e_coarse}, {e_fine}")
    return math.log2(e_coarse / e_fine)


def truncation_probe(gamma: float, degree: int) -> float:
    """Apply the blended stencil to ``t**degree`` at ``t = 0, -1, -2, -3``.

    Returns the stencil value minus the exact derivative at ``t = 0``,
    i.e. the local truncation error for unit step.
    """
    from .stepper import bdf_coefficients

    if degree > 3 or degree < 0:
        raise ValueError("degree must be between 0 and 3")
    alpha = np.array(bdf_coefficients(gamma).alpha)
    nodes = np.array([0.0, -1.0, -2.0, -3.0])
    exact = 1.0 if degree == 1 else 0.0
    return float(alpha @ nodes ** degree - exact)


@dataclass(frozen=True)
class ConsistencyReport:
    t_n: float
    dt: float
    lhs1: float
    rhs1: float
    rhs1_grad: float
    lhs2: float
    rhs2: float

    @property
    def pass1(self) -> bool:
        return self.lhs1 <= self.rhs1 * (1 + 1e-8)

    @property
    def pass1_grad(self) -> bool:
        return self.lhs1 <= self.rhs1_grad * (1 + 1e-8)

    @property
    def pass2(self) -> bool:
        return self.lhs2 <= self.rhs2 * (1 + 1e-8)


def _time_integral(fn, a, b, points=16):
    x, w = np.polynomial.legendre.leggauss(points)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * sum(wi * fn(mid + half * xi) for xi, wi in zip(x, w))


def consistency_check(problem, t_n: float, dt: float, space: TaylorHoodSpace,
                      degree=ERROR_DEGREE) -> ConsistencyReport:
    """Evaluate both consistency bounds of the blended stencil at ``t_n``.

    ``space`` only supplies the spatial quadrature. The first bound is
    checked against the ``u_ttt`` integral; the ``grad u_ttt`` variant is
    reported alongside.
    """
    needed = ("velocity", "velocity_t", "velocity_grad", "velocity_ttt", "velocity_ttt_grad")
    missing = [n for n in needed if getattr(problem, n) is None]
    if missing:
        raise ValueError(f"problem lacks closed-form derivatives: {missing}")
    geo = space.geometry(degree)
    x, y = geo.points[..., 0], geo.points[..., 1]
    times = [t_n + dt, t_n, t_n - dt, t_n - 2 * dt]

    def at(fn, t):
        return [np.broadcast_to(c, x.shape) for c in fn(x, y, t)]

    u = [at(problem.velocity, t) for t in times]
    ut = at(problem.velocity_t, times[0])
    # integer weights first, one division: exact zero for exactly represented data
    lhs1 = 0.0
    for c in range(2):
        r = (10 * u[0][c] - 15 * u[1][c] + 6 * u[2][c] - u[3][c]) / (6 * dt) - ut[c]
        lhs1 += float(np.sum(geo.jxw * r ** 2))

    g = [problem.velocity_grad(x, y, t) for t in times]
    lhs2 = 0.0
    for i in range(2):
        for j in range(2):
            gk = [np.broadcast_to(g[k][i][j], x.shape) for k in range(4)]
            r = (gk[0] - gk[3]) - 3 * (gk[1] - gk[2])
            lhs2 += float(np.sum(geo.jxw * r ** 2))

    a, b = t_n - 2 * dt, t_n + dt
    int_u = _time_integral(lambda t: sum(float(np.sum(geo.jxw * c ** 2))
                                         for c in at(problem.velocity_ttt, t)), a, b)
    int_g = _time_integral(
        lambda t: sum(float(np.sum(geo.jxw * np.broadcast_to(gij, x.shape) ** 2))
                      for row in problem.velocity_ttt_grad(x, y, t) for gij in row), a, b)
    return ConsistencyReport(t_n=t_n, dt=dt, lhs1=lhs1, rhs1=7 / 3 * dt ** 3 * int_u,
                             rhs1_grad=7 / 3 * dt ** 3 * int_g, lhs2=lhs2,
                             rhs2=9 * dt ** 5 * int_g)


@dataclass(frozen=True)
class EnergyLedger:
    """Both sides of the long-time stability bound for ``N = 3, 4, ...``."""

    N: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def satisfied(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs * (1 + 1e-12) + 1e-300))


def energy_ledger(mass, stiffness, history, dt, nu, forcing_dual_sq=None,
                  homogeneous_bc=True) -> EnergyLedger:
    """Evaluate the stability bound along one member's trajectory.

    ``history`` holds the velocity vectors at levels ``0..N_T``.
    ``forcing_dual_sq[n]`` is an upper bound for ``||f^n||_{-1}^2`` at level
    ``n`` (zero when omitted).
    """
    if not homogeneous_bc:
        raise ValueError("the stability bound assumes homogeneous Dirichlet data")
    U = np.asarray(history, dtype=float)
    if len(U) < 4:
        raise ValueError("need at least levels 0..3")
    nrm = lambda v: float(v @ (mass @ v))
    grd = lambda v: float(v @ (stiffness @ v))
    if forcing_dual_sq is None:
        forcing_dual_sq = np.zeros(len(U))
    forcing_dual_sq = np.asarray(forcing_dual_sq, dtype=float)

    def level_terms(k):
        return (nrm(U[k]) + nrm(3 * U[k] - U[k - 1]) + nrm(3 * U[k] - 3 * U[k - 1] + U[k - 2])) / 12

    initial = level_terms(2)
    Ns, lhs, rhs = [], [], []
    diss = 0.0
    force = 0.0
    for N in range(3, len(U)):
        n = N - 1
        diss += nrm(U[n + 1] - 3 * U[n] + 3 * U[n - 1] - U[n - 2]) / 24
        diss += dt / 4 * nu * grd(U[n + 1])
        force += dt / nu * forcing_dual_sq[n + 1]
        Ns.append(N)
        lhs.append(level_terms(N) + diss)
        rhs.append(force + initial)
    return EnergyLedger(np.array(Ns), np.array(lhs), np.array(rhs))
