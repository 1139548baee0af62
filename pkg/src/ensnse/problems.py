"""Closed-form flows used as manufactured solutions and test data.

Fields are plain callables ``f(x, y, t)`` that broadcast over numpy
arrays. Vector fields return a tuple of components; gradients return
``((du1/dx, du1/dy), (du2/dx, du2/dy))``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AnalyticProblem", "green_taylor", "decaying_vortex", "rigid_rotation", "zero_problem",
    "EthierSteinman", "ethier_steinman", "momentum_residual",
    "divergence_fd", "PROBLEMS",
]

Field = Callable[..., object]


@dataclass(frozen=True)
class AnalyticProblem:
    """Data for one Navier-Stokes realization on the unit square.

    ``velocity`` and friends are ``None`` when no closed-form solution is
    known; such problems can only be started with Crank-Nicolson from
    ``initial``. ``member(eps)`` returns the realization whose data is
    scaled by ``1 + eps``.
    """

    name: str
    nu: float
    forcing: Field
    boundary: Field
    initial: Field
    velocity: Optional[Field] = None
    pressure: Optional[Field] = None
    velocity_grad: Optional[Field] = None
    velocity_t: Optional[Field] = None
    velocity_ttt: Optional[Field] = None
    velocity_ttt_grad: Optional[Field] = None
    homogeneous_bc: bool = False
    zero_forcing: bool = False
    scale: float = 1.0
    _factory: Optional[Callable[[float], "AnalyticProblem"]] = None

    @property
    def has_exact_solution(self) -> bool:
        return self.velocity is not None

    def member(self, eps: float) -> "AnalyticProblem":
        if self._factory is None:
            raise ValueError(f"problem {self.name!r} has no perturbation rule")
        return self._factory(self.scale * (1.0 + eps))


def _zeros(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def green_taylor(nu: float, scale: float = 1.0) -> AnalyticProblem:
    """Decaying Green-Taylor vortex with ``g(t) = sin(2t)``.

    ``u = g(t) (-cos x sin y, sin x cos y)``,
    ``p = -(cos 2x + cos 2y) g(t)^2 / 4``. The realization scaled by ``s``
    is again an exact solution with pressure ``s^2 p`` and forcing ``s f``.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    s = float(scale)

    def shape(x, y):
        return -np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)

    def timed(gfun):
        def field(x, y, t):
            g = s * gfun(t)
            a, b = shape(x, y)
            return g * a, g * b
        return field

    g = lambda t: np.sin(2 * t)
    dg = lambda t: 2 * np.cos(2 * t)
    dddg = lambda t: -8 * np.cos(2 * t)

    def timed_grad(gfun):
        def grad(x, y, t):
            gv = s * gfun(t)
            return ((gv * np.sin(x) * np.sin(y), -gv * np.cos(x) * np.cos(y)),
                    (gv * np.cos(x) * np.cos(y), -gv * np.sin(x) * np.sin(y)))
        return grad

    def pressure(x, y, t):
        return -0.25 * (np.cos(2 * x) + np.cos(2 * y)) * (s * g(t)) ** 2

    velocity = timed(g)
    return AnalyticProblem(
        name="green-taylor",
        nu=nu,
        forcing=timed(lambda t: dg(t) + 2 * nu * g(t)),
        boundary=velocity,
        initial=velocity,
        velocity=velocity,
        pressure=pressure,
        velocity_grad=timed_grad(g),
        velocity_t=timed(dg),
        velocity_ttt=timed(dddg),
        velocity_ttt_grad=timed_grad(dddg),
        scale=s,
        _factory=lambda s2: green_taylor(nu, s2),
    )


def decaying_vortex(nu: float, amplitude: float = 1.0, scale: float = 1.0) -> AnalyticProblem:
    """Unforced flow from a solenoidal initial vortex with no-slip walls.

    The initial velocity is the curl of ``sin^2(pi x) sin^2(pi y)``; no
    closed-form solution is provided.
    """
    a = amplitude * scale

    def initial(x, y, t=0.0):
        return (a * np.pi * np.sin(np.pi * x) ** 2 * np.sin(2 * np.pi * y),
                -a * np.pi * np.sin(2 * np.pi * x) * np.sin(np.pi * y) ** 2)

    zero = lambda x, y, t: (_zeros(x, y), _zeros(x, y))
    return AnalyticProblem(
        name="decaying-vortex", nu=nu, forcing=zero, boundary=zero, initial=initial,
        homogeneous_bc=True, zero_forcing=True, scale=scale,
        _factory=lambda s2: decaying_vortex(nu, amplitude, s2),
    )


def rigid_rotation(nu: float, scale: float = 1.0) -> AnalyticProblem:
    """``u = g(t) (y, -x)`` with ``g(t) = sin(2t)`` and zero pressure.

    The velocity is quadratic-free and the pressure vanishes, so P2-P1
    reproduces the solution exactly in space; the centripetal term is
    moved into the forcing. Only time discretization error remains.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    s = float(scale)
    g = lambda t: s * np.sin(2 * t)
    dg = lambda t: 2 * s * np.cos(2 * t)
    dddg = lambda t: -8 * s * np.cos(2 * t)

    def timed(gfun):
        return lambda x, y, t: (gfun(t) * y + 0 * x, -gfun(t) * x + 0 * y)

    def timed_grad(gfun):
        def grad(x, y, t):
            z = _zeros(x, y)
            return ((z, z + gfun(t)), (z - gfun(t), z))
        return grad

    def forcing(x, y, t):
        return dg(t) * y - g(t) ** 2 * x, -dg(t) * x - g(t) ** 2 * y

    velocity = timed(g)
    return AnalyticProblem(
        name="rigid-rotation", nu=nu, forcing=forcing, boundary=velocity, initial=velocity,
        velocity=velocity, pressure=lambda x, y, t: _zeros(x, y), velocity_grad=timed_grad(g),
        velocity_t=timed(dg), velocity_ttt=timed(dddg), velocity_ttt_grad=timed_grad(dddg),
        scale=s, _factory=lambda s2: rigid_rotation(nu, s2),
    )


def zero_problem(nu: float) -> AnalyticProblem:
    """Zero data: the exact solution is identically zero."""
    zero = lambda x, y, t: (_zeros(x, y), _zeros(x, y))
    zgrad = lambda x, y, t: ((_zeros(x, y),) * 2,) * 2
    return AnalyticProblem(
        name="zero", nu=nu, forcing=zero, boundary=zero, initial=zero,
        velocity=zero, pressure=lambda x, y, t: _zeros(x, y), velocity_grad=zgrad,
        velocity_t=zero, velocity_ttt=zero, velocity_ttt_grad=zgrad,
        homogeneous_bc=True, zero_forcing=True,
        _factory=lambda s2: zero_problem(nu),
    )


PROBLEMS = {
    "green-taylor": green_taylor,
    "decaying-vortex": decaying_vortex,
    "rigid-rotation": rigid_rotation,
    "zero": zero_problem,
}


@dataclass(frozen=True)
class EthierSteinman:
    """Ethier-Steinman exact 3D Navier-Stokes solution (zero forcing)."""

    a: float
    d: float
    nu: float

    def velocity(self, x, y, z, t):
        a, d = self.a, self.d
        decay = np.exp(-self.nu * d * d * t)
        u1 = -a * (np.exp(a * x) * np.sin(a * y + d * z) + np.exp(a * z) * np.cos(a * x + d * y))
        u2 = -a * (np.exp(a * y) * np.sin(a * z + d * x) + np.exp(a * x) * np.cos(a * y + d * z))
        u3 = -a * (np.exp(a * z) * np.sin(a * x + d * y) + np.exp(a * y) * np.cos(a * z + d * x))
        return u1 * decay, u2 * decay, u3 * decay

    def pressure(self, x, y, z, t):
        a, d = self.a, self.d
        return -0.5 * a * a * (
            np.exp(2 * a * x) + np.exp(2 * a * y) + np.exp(2 * a * z)
            + 2 * np.sin(a * x + d * y) * np.cos(a * z + d * x) * np.exp(a * (y + z))
            + 2 * np.sin(a * y + d * z) * np.cos(a * x + d * y) * np.exp(a * (z + x))
            + 2 * np.sin(a * z + d * x) * np.cos(a * y + d * z) * np.exp(a * (x + y))
        ) * np.exp(-2 * self.nu * d * d * t)

    def forcing(self, x, y, z, t):
        zero = np.zeros(np.broadcast(x, y, z).shape)
        return zero, zero, zero


def ethier_steinman(a: float = 1.25, d: float = 2.25, nu: float = 0.001) -> EthierSteinman:
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    return EthierSteinman(float(a), float(d), float(nu))


def _shift(coords, axis, step):
    out = list(coords)
    out[axis] = out[axis] + step
    return out


def divergence_fd(velocity, coords, t, step=1e-5):
    """Central-difference divergence of ``velocity(*coords, t)``."""
    dim = len(coords)
    div = 0.0
    for i in range(dim):
        up = velocity(*_shift(coords, i, step), t)[i]
        down = velocity(*_shift(coords, i, -step), t)[i]
        div = div + (np.asarray(up) - np.asarray(down)) / (2 * step)
    return div


def momentum_residual(velocity, pressure, forcing, nu, coords, t, step=1e-5):
    """``u_t + u.grad u - nu lap u + grad p - f`` by central differences.

    Works for any dimension; returns an array with one row per component.
    """
    dim = len(coords)
    u = [np.asarray(c, dtype=float) for c in velocity(*coords, t)]
    f = forcing(*coords, t)
    res = []
    for i in range(dim):
        ut = (np.asarray(velocity(*coords, t + step)[i])
              - np.asarray(velocity(*coords, t - step)[i])) / (2 * step)
        adv = 0.0
        lap = 0.0
        for j in range(dim):
            up = np.asarray(velocity(*_shift(coords, j, step), t)[i])
            down = np.asarray(velocity(*_shift(coords, j, -step), t)[i])
            adv = adv + u[j] * (up - down) / (2 * step)
            lap = lap + (up - 2 * u[i] + down) / step ** 2
        dp = (np.asarray(pressure(*_shift(coords, i, step), t))
              - np.asarray(pressure(*_shift(coords, i, -step), t))) / (2 * step)
        res.append(ut + adv - nu * lap + dp - np.asarray(f[i]))
    return np.array(res)
