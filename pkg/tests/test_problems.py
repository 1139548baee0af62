import numpy as np
import pytest

from ensnse.problems import (PROBLEMS, rigid_rotation, decaying_vortex, divergence_fd, ethier_steinman,
                             green_taylor, momentum_residual, zero_problem)


@pytest.fixture
def points(rng):
    return rng.uniform(0, 1, size=(2, 50)), rng.uniform(0.05, 1, size=50)


def test_green_taylor_zero_at_start():
    x, y = np.meshgrid(np.linspace(0, 1, 7), np.linspace(0, 1, 7))
    ux, uy = green_taylor(0.01).velocity(x, y, 0.0)
    assert np.all(ux == 0) and np.all(uy == 0)


def test_green_taylor_rejects_bad_nu():
    with pytest.raises(ValueError):
        green_taylor(0.0)


def test_green_taylor_divergence_free(points):
    (x, y), t = points
    div = divergence_fd(green_taylor(0.01).velocity, (x[:20], y[:20]), t[:20])
    assert np.abs(div).max() <= 1e-8


@pytest.mark.parametrize("eps", [0.0, 1e-3, -1e-3, 0.5])
def test_green_taylor_momentum_residual(points, eps):
    (x, y), t = points
    p = green_taylor(0.01).member(eps)
    r = momentum_residual(p.velocity, p.pressure, p.forcing, p.nu, (x, y), t)
    assert np.abs(r).max() <= 1e-6


def test_green_taylor_derivatives(points):
    (x, y), t = points
    p = green_taylor(0.05)
    h = 1e-3
    # third derivative from a 5-point stencil
    vals = [np.array(p.velocity(x, y, t + k * h)) for k in (-2, -1, 1, 2)]
    dddu = (vals[3] - 2 * vals[2] + 2 * vals[1] - vals[0]) / (2 * h ** 3)
    np.testing.assert_allclose(dddu, np.array(p.velocity_ttt(x, y, t)), atol=1e-5)
    du = (np.array(p.velocity(x, y, t + 1e-6)) - np.array(p.velocity(x, y, t - 1e-6))) / 2e-6
    np.testing.assert_allclose(du, np.array(p.velocity_t(x, y, t)), atol=1e-8)
    g = np.array(p.velocity_grad(x, y, t))
    for j, (dx, dy) in enumerate([(1e-6, 0), (0, 1e-6)]):
        fd = (np.array(p.velocity(x + dx, y + dy, t))
              - np.array(p.velocity(x - dx, y - dy, t))) / 2e-6
        np.testing.assert_allclose(fd, g[:, j], atol=1e-8)
    gt = np.array(p.velocity_ttt_grad(x, y, t))
    fd = (np.array(p.velocity_ttt(x + 1e-6, y, t)) - np.array(p.velocity_ttt(x - 1e-6, y, t))) / 2e-6
    np.testing.assert_allclose(fd, gt[:, 0], atol=1e-7)


def test_member_scaling():
    base = green_taylor(0.01)
    m = base.member(1e-3)
    x, y, t = np.array([0.3]), np.array([0.7]), 0.4
    np.testing.assert_allclose(m.velocity(x, y, t), 1.001 * np.array(base.velocity(x, y, t)),
                               rtol=1e-15)
    np.testing.assert_allclose(m.forcing(x, y, t), 1.001 * np.array(base.forcing(x, y, t)),
                               rtol=1e-15)
    assert m.pressure(x, y, t) == pytest.approx(1.001 ** 2 * base.pressure(x, y, t), rel=1e-14)


def test_forcing_at_origin():
    fx, fy = green_taylor(0.01).forcing(0.0, 0.0, 0.7)
    assert fx == 0.0 and fy == 0.0


def test_ethier_steinman_example():
    es = ethier_steinman(1.25, 2.25, 0.001)
    u1, _, _ = es.velocity(0.0, 0.0, 0.0, 0.0)
    assert u1 == pytest.approx(-1.25, abs=1e-15)


def test_ethier_steinman_rejects_bad_nu():
    with pytest.raises(ValueError):
        ethier_steinman(nu=-1.0)


def test_ethier_steinman_checks(rng):
    es = ethier_steinman()
    coords = tuple(rng.uniform(-1, 1, size=(3, 20)))
    t = rng.uniform(0, 1, size=20)
    assert np.abs(divergence_fd(es.velocity, coords, t)).max() <= 1e-6
    r = momentum_residual(es.velocity, es.pressure, es.forcing, es.nu, coords, t, step=1e-4)
    assert np.abs(r).max() <= 1e-5
    np.testing.assert_array_equal(es.forcing(*coords, t), 0.0)


def test_decaying_vortex_data(rng):
    p = decaying_vortex(0.01)
    assert not p.has_exact_solution and p.homogeneous_bc and p.zero_forcing
    x, y = rng.uniform(0, 1, size=(2, 20))
    assert np.abs(divergence_fd(lambda a, b, t: p.initial(a, b), (x, y), 0.0)).max() < 1e-8
    edge = np.linspace(0, 1, 11)
    for xb, yb in [(edge, 0 * edge), (edge, 1 + 0 * edge), (0 * edge, edge), (1 + 0 * edge, edge)]:
        np.testing.assert_allclose(p.initial(xb, yb), 0.0, atol=1e-14)
    np.testing.assert_allclose(p.member(0.1).initial(x, y), 1.1 * np.array(p.initial(x, y)),
                               rtol=1e-14)


def test_registry():
    assert set(PROBLEMS) == {"green-taylor", "decaying-vortex", "rigid-rotation", "zero"}
    z = zero_problem(0.1)
    assert z.has_exact_solution
    np.testing.assert_array_equal(z.velocity(np.ones(3), np.ones(3), 1.0), 0.0)


def test_rigid_rotation_is_exact_solution():
    rr = rigid_rotation(0.05, scale=1.3)
    rng = np.random.default_rng(3)
    x, y = rng.uniform(0, 1, (2, 40))
    t = rng.uniform(0, 1, 40)
    assert np.abs(divergence_fd(rr.velocity, (x, y), t)).max() <= 1e-8
    res = momentum_residual(rr.velocity, rr.pressure, rr.forcing, rr.nu, (x, y), t)
    assert np.abs(res).max() <= 1e-6
