import numpy as np
import pytest
import scipy.sparse as sp

from bregman_control.linalg import (
    CGNotConverged,
    NotSPDError,
    SparseSymMatrix,
    cg_solve,
    factorize,
    spmv,
)


def laplacian_1d(n):
    return SparseSymMatrix(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))


def test_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        SparseSymMatrix(sp.csr_array(np.array([[1.0, 2.0], [0.0, 1.0]])))


def test_spmv_dimension_check():
    A = laplacian_1d(4)
    with pytest.raises(ValueError):
        spmv(A, np.ones(3))
    np.testing.assert_allclose(spmv(A, np.ones(4)), [1, 0, 0, 1])


def test_submatrix_and_add():
    A = laplacian_1d(5)
    B = A.submatrix(np.array([1, 2, 3]))
    np.testing.assert_array_equal(B.toarray(), laplacian_1d(3).toarray())
    np.testing.assert_array_equal((A + A).toarray(), 2 * A.toarray())


def test_factorization_matches_dense():
    A = laplacian_1d(50)
    b = np.random.default_rng(0).standard_normal(50)
    x = factorize(A).solve(b)
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-12, atol=1e-12)


def test_factorization_reused_for_many_rhs():
    A = laplacian_1d(20)
    F = factorize(A)
    B = np.eye(20)
    X = np.column_stack([F.solve(B[:, j]) for j in range(20)])
    np.testing.assert_allclose(X @ A.toarray(), np.eye(20), atol=1e-10)


def test_indefinite_matrix_rejected():
    A = SparseSymMatrix(sp.csr_array(np.diag([1.0, -1.0, 2.0])))
    with pytest.raises(NotSPDError, match="not SPD"):
        factorize(A)


def test_empty_matrix():
    F = factorize(SparseSymMatrix(sp.csr_array((0, 0))))
    assert F.solve(np.zeros(0)).shape == (0,)


def test_cg_converges_with_jacobi():
    A = laplacian_1d(100)
    A = A + SparseSymMatrix(sp.diags(np.linspace(1, 100, 100)))
    b = np.ones(100)
    x, its = cg_solve(lambda v: A @ v, b, tol=1e-12, precond=A.diagonal())
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 10
    assert 0 < its <= 100


def test_cg_zero_rhs():
    x, its = cg_solve(lambda v: 2 * v, np.zeros(5))
    assert its == 0 and not x.any()


def test_cg_reports_best_iterate():
    A = laplacian_1d(200)
    with pytest.raises(CGNotConverged) as info:
        cg_solve(lambda v: A @ v, np.ones(200), max_iter=3)
    assert info.value.iterations == 3
    assert info.value.x.shape == (200,)
