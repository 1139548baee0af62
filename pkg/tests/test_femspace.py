import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ensnse.femspace import (build_space, interpolate, interpolate_pressure,
                             interpolate_velocity, p1_basis, p2_basis, quadrature)
from ensnse.mesh import unit_square_mesh
from ensnse.problems import green_taylor

DEGREES = [1, 2, 3, 5, 7]


def _monomial_integral(a, b):
    # int over reference triangle of x^a y^b = a! b! / (a + b + 2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def test_space_counts_single_cell():
    s = build_space(unit_square_mesh(1))
    assert (s.n_velocity_scalar, s.n_pressure) == (9, 4)
    # every vertex is on the boundary; of the P2 nodes only the diagonal midpoint is not
    interior = np.setdiff1d(np.arange(9), s.boundary_scalar_dofs)
    np.testing.assert_allclose(s.dof_coordinates[interior], [[0.5, 0.5]])
    assert np.all(s.mesh.boundary_vertex_flags)
    assert len(s.dirichlet_velocity_dofs) == 16


def test_space_counts_two_by_two():
    s = build_space(unit_square_mesh(2))
    assert s.n_pressure == 9
    assert s.n_velocity_scalar == s.mesh.n_vertices + s.mesh.n_edges


def test_dirichlet_set_is_boundary_nodes(space4):
    x, y = space4.dof_coordinates.T
    on = (np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1))
    np.testing.assert_array_equal(np.flatnonzero(on), np.sort(space4.boundary_scalar_dofs))


def test_cell_maps_consistent(space4):
    # a global dof has the same coordinates from every cell that references it
    mesh = space4.mesh
    v = mesh.vertices[mesh.triangles]
    local = np.concatenate([v, 0.5 * (v + v[:, [1, 2, 0]])], axis=1)
    np.testing.assert_allclose(space4.dof_coordinates[space4.cell_dofs_p2], local, atol=1e-15)
    np.testing.assert_array_equal(space4.cell_dofs_p1, mesh.triangles)


def test_midpoint_rule():
    q = quadrature(1)
    assert len(q.weights) == 1
    assert q.weights[0] == pytest.approx(0.5)


@pytest.mark.parametrize("degree", DEGREES)
def test_quadrature_exactness(degree):
    q = quadrature(degree)
    assert q.weights.sum() == pytest.approx(0.5, abs=1e-14)
    np.testing.assert_allclose(q.points.sum(axis=1), 1.0, atol=1e-14)
    x, y = q.xy.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert q.weights @ (x ** a * y ** b) == pytest.approx(_monomial_integral(a, b),
                                                                  abs=1e-14)


def test_quadrature_examples():
    x, y = quadrature(3).xy.T
    assert quadrature(3).weights @ (x * y) == pytest.approx(1 / 24, abs=1e-15)
    x, y = quadrature(5).xy.T
    assert quadrature(5).weights @ (x ** 4 * y) == pytest.approx(_monomial_integral(4, 1),
                                                                 abs=1e-14)


@pytest.mark.parametrize("degree", [0, 4, 6, 8])
def test_quadrature_rejects_unsupported(degree):
    with pytest.raises(ValueError):
        quadrature(degree)


@pytest.mark.parametrize("degree", DEGREES)
def test_partition_of_unity(degree):
    xy = quadrature(degree).xy
    v2, g2 = p2_basis(xy)
    np.testing.assert_allclose(v2.sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(g2.sum(axis=1), 0.0, atol=1e-13)
    v1, g1 = p1_basis(xy)
    np.testing.assert_allclose(v1.sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(g1.sum(axis=1), 0.0, atol=1e-13)


def test_p2_nodal_property():
    nodes = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]])
    vals, _ = p2_basis(nodes)
    np.testing.assert_allclose(vals, np.eye(6), atol=1e-15)


def test_p2_gradients_match_finite_differences(rng):
    xy = rng.uniform(0, 0.5, size=(10, 2))
    _, g = p2_basis(xy)
    eps = 1e-6
    for d in range(2):
        step = np.zeros(2)
        step[d] = eps
        fd = (p2_basis(xy + step)[0] - p2_basis(xy - step)[0]) / (2 * eps)
        np.testing.assert_allclose(g[..., d], fd, atol=1e-8)


def test_physical_gradients_partition(space4):
    geo = space4.geometry(5)
    np.testing.assert_allclose(geo.dphi2.sum(axis=2), 0.0, atol=1e-12)
    assert geo.jxw.sum() == pytest.approx(1.0, abs=1e-13)


def test_interpolate_constant(space4):
    u = interpolate(space4, lambda x, y, t: (1.0, 1.0), 0.0)
    np.testing.assert_array_equal(u, 1.0)


def test_interpolate_green_taylor_zero_at_start(space4):
    u = interpolate(space4, green_taylor(0.01).velocity, 0.0)
    np.testing.assert_allclose(u, 0.0, atol=0.0)


def test_interpolate_rejects_unknown_kind(space4):
    with pytest.raises(ValueError):
        interpolate(space4, lambda x, y, t: x, 0.0, kind="tensor")


def test_linear_field_reproduced(space4, rng):
    u = interpolate_velocity(space4, lambda x, y, t: (x, y))
    pts = rng.uniform(0, 1, size=(20, 2))
    np.testing.assert_allclose(space4.evaluate_velocity(u, pts), pts, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=12, max_size=12),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_polynomial_round_trip(c, d):
    space = build_space(unit_square_mesh(3))
    pts = np.random.default_rng(7).uniform(0, 1, size=(20, 2))

    def quad(k, x, y):
        return (c[k] + c[k + 1] * x + c[k + 2] * y + c[k + 3] * x * x
                + c[k + 4] * x * y + c[k + 5] * y * y)

    u = interpolate_velocity(space, lambda x, y, t: (quad(0, x, y), quad(6, x, y)))
    expect = np.column_stack([quad(0, *pts.T), quad(6, *pts.T)])
    np.testing.assert_allclose(space.evaluate_velocity(u, pts), expect, atol=1e-12)
    lin = lambda x, y, t=0: d[0] + d[1] * x + d[2] * y
    p = interpolate_pressure(space, lin)
    np.testing.assert_allclose(space.evaluate_pressure(p, pts), lin(*pts.T), atol=1e-12)


def test_quad_values_match_point_evaluation(space4):
    u = interpolate_velocity(space4, lambda x, y, t: (np.sin(x + y), x * y * y))
    vals, _ = space4.velocity_at_quad(u, 3)
    pts = space4.geometry(3).points[:3].reshape(-1, 2)
    np.testing.assert_allclose(vals[:3].reshape(-1, 2), space4.evaluate_velocity(u, pts),
                               atol=1e-13)


def test_layout_checked(space4):
    with pytest.raises(ValueError):
        space4.velocity_at_quad(np.zeros(space4.n_velocity + 1))
    with pytest.raises(ValueError):
        space4.pressure_at_quad(np.zeros(3))


def test_locate_outside(space4):
    with pytest.raises(ValueError):
        space4.locate([[1.5, 0.5]])
