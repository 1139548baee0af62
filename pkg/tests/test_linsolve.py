import threading

import numpy as np
import pytest
import scipy.sparse as sp

from ensnse.assembly import Operators, saddle_ordering, saddle_system
from ensnse.linsolve import SingularMatrixError, factorize, nested_dissection, solve_multi


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _sparse_system(n, rng, density=0.02):
    A = sp.random(n, n, density=density, random_state=np.random.RandomState(3), format="csr")
    return (A + A.T + sp.eye(n) * n * 0.1).tocsr()


def test_identity():
    b = np.arange(5.0)
    np.testing.assert_array_equal(factorize(sp.eye(5)).solve(b), b)


def test_diagonal_example():
    x = factorize(sp.csr_matrix([[2.0, 0.0], [0.0, 4.0]])).solve([2.0, 8.0])
    np.testing.assert_allclose(x, [1.0, 2.0], rtol=1e-15)


def test_random_spd_residual(rng):
    Q = rng.standard_normal((50, 50))
    A = sp.csr_matrix(Q @ Q.T + 50 * np.eye(50))
    b = rng.standard_normal(50)
    x = factorize(A).solve(b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-10


def test_input_unchanged(rng):
    A = _sparse_system(40, rng)
    before = A.copy()
    factorize(A, ordering=rng.permutation(40))
    assert (A != before).nnz == 0


def test_singular_reported_with_index():
    A = sp.csr_matrix(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(SingularMatrixError) as info:
        factorize(A)
    assert info.value.index is not None


def test_structurally_deficient_rejected():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(SingularMatrixError, match="structur"):
        factorize(A)


def test_rejects_bad_shapes(rng):
    with pytest.raises(ValueError):
        factorize(sp.random(3, 4, density=1.0))
    with pytest.raises(ValueError):
        factorize(sp.eye(3), ordering=[0, 0, 1])
    lu = factorize(sp.eye(3))
    with pytest.raises(ValueError):
        lu.solve(np.ones(4))
    with pytest.raises(ValueError):
        solve_multi(lu, np.ones(3))


def test_multi_matches_sequential(rng):
    A = _sparse_system(200, rng)
    lu = factorize(A)
    R = rng.standard_normal((200, 4))
    X = solve_multi(lu, R)
    for j in range(4):
        assert _rel(X[:, j], lu.solve(R[:, j])) <= 1e-12
        assert np.linalg.norm(A @ X[:, j] - R[:, j]) <= 1e-10 * (
            sp.linalg.norm(A) * np.linalg.norm(X[:, j]) + np.linalg.norm(R[:, j]))


def test_single_and_duplicate_columns(rng):
    A = _sparse_system(60, rng)
    lu = factorize(A)
    b = rng.standard_normal(60)
    np.testing.assert_allclose(solve_multi(lu, b[:, None])[:, 0], lu.solve(b), rtol=1e-14)
    X = solve_multi(lu, np.column_stack([b, b]))
    np.testing.assert_array_equal(X[:, 0], X[:, 1])


def test_factor_reuse_bit_identical(rng):
    A = _sparse_system(120, rng)
    R = rng.standard_normal((120, 3))
    shared = solve_multi(factorize(A), R)
    for j in range(3):
        np.testing.assert_array_equal(factorize(A).solve(R[:, j]), shared[:, j])


def test_concurrent_solves(rng):
    A = _sparse_system(150, rng)
    lu = factorize(A)
    R = rng.standard_normal((150, 8))
    expect = [lu.solve(R[:, j]) for j in range(8)]
    out = [None] * 8

    def work(j):
        out[j] = lu.solve(R[:, j])

    threads = [threading.Thread(target=work, args=(j,)) for j in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for j in range(8):
        np.testing.assert_array_equal(out[j], expect[j])


def test_nested_dissection_is_permutation(space8):
    order = saddle_ordering(space8)
    n = space8.n_velocity + space8.n_pressure + 1
    np.testing.assert_array_equal(np.sort(order), np.arange(n))
    assert order[-1] == n - 1  # the multiplier touches no cell


def test_nested_dissection_small():
    cells = np.array([[0, 1, 2], [1, 2, 3]])
    order = nested_dissection(cells, np.array([[0.0, 0.0], [1.0, 1.0]]), 5, leaf_size=1)
    np.testing.assert_array_equal(np.sort(order), np.arange(5))
    # shared dofs form the top separator and come after the two halves
    assert set(order[2:4]) == {1, 2}
    assert order[-1] == 4


def test_saddle_solve_with_ordering(space8, rng):
    ops = Operators(space8)
    sys = saddle_system(ops.mass + ops.stiffness, ops.divergence, ops.pressure_mean,
                        space8.dirichlet_velocity_dofs).constrained()
    b = rng.standard_normal(sys.shape[0])
    x1 = factorize(sys.matrix, saddle_ordering(space8)).solve(b)
    x2 = factorize(sys.matrix).solve(b)
    assert _rel(x1, x2) < 1e-10
    assert np.linalg.norm(sys.matrix @ x1 - b) <= 1e-10 * np.linalg.norm(b)
