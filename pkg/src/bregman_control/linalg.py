"""Sparse symmetric matrices, a reusable SPD factorization and preconditioned CG."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla


class NotSPDError(np.linalg.LinAlgError):
    pass


class CGNotConverged(RuntimeError):
    """Raised when CG hits its iteration cap.

    The best iterate seen and its relative residual are attached so callers
    can decide whether to fall back to something else.
    """

    def __init__(self, x, residual, iterations):
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.x = x
        self.residual = residual
        self.iterations = iterations


class SparseSymMatrix:
    """Symmetric matrix in CSR layout with sorted column indices.

    Parameters
    ----------
    data : array_like or scipy sparse matrix
        Anything :func:`scipy.sparse.csr_array` accepts.
    check : bool
        Verify exact structural and numerical symmetry.
    """

    def __init__(self, data, check=True):
        A = sp.csr_array(data, dtype=float)
        A.sum_duplicates()
        A.sort_indices()
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        if check and A.shape[0] and (A != A.T).nnz:
            raise ValueError("matrix is not symmetric")
        self._csr = A

    @property
    def n(self):
        return self._csr.shape[0]

    @property
    def shape(self):
        return self._csr.shape

    @property
    def csr(self):
        return self._csr

    def diagonal(self):
        return self._csr.diagonal()

    def toarray(self):
        return self._csr.toarray()

    def submatrix(self, index):
        """Principal submatrix on ``index`` (symmetric row/column selection)."""
        return SparseSymMatrix(self._csr[index][:, index], check=False)

    def __matmul__(self, x):
        return spmv(self, x)

    def __add__(self, other):
        return SparseSymMatrix(self._csr + other.csr, check=False)

    def __repr__(self):
        return f"SparseSymMatrix(n={self.n}, nnz={self._csr.nnz})"


def spmv(A: SparseSymMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector {x.shape}")
    # scipy's CSR kernel accumulates each row in ascending column order
    return A.csr @ x


class Factorization:
    """Sparse LDL^T-type factorization of an SPD matrix, reusable for many solves.

    SuperLU is run in symmetric mode with diagonal pivoting only, so the
    factorization is a symmetric permutation of ``L D L^T``; positivity of
    ``D`` (the diagonal of ``U``) is exactly the SPD test.
    """

    def __init__(self, A: SparseSymMatrix):
        self.n = A.n
        if self.n == 0:
            self._lu = None
            return
        self._lu = sla.splu(
            A.csr.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise NotSPDError("matrix not SPD (row pivoting was required)")
        pivots = self._lu.U.diagonal()
        if not np.all(np.isfinite(pivots)) or np.any(pivots <= 0.0):
            raise NotSPDError("matrix not SPD")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: factor is {self.n}, rhs {b.shape}")
        if self.n == 0:
            return np.zeros_like(b)
        return self._lu.solve(b)


def factorize(A: SparseSymMatrix) -> Factorization:
    return Factorization(A)


def cg_solve(apply, b, tol=1e-12, max_iter=None, precond=None, x0=None):
    """Preconditioned conjugate gradients for an SPD operator.

    Parameters
    ----------
    apply : callable
        ``apply(x)`` returns the operator applied to ``x``.
    b : ndarray
        Right-hand side.
    tol : float
        Stop once ``||b - apply(x)|| <= tol * ||b||``.
    max_iter : int, optional
        Defaults to ``10 * len(b)``.
    precond : ndarray, optional
        Diagonal of the (approximate) operator for Jacobi preconditioning.

    Returns
    -------
    x : ndarray
    iterations : int

    Raises
    ------
    CGNotConverged
        If the tolerance is not reached within ``max_iter`` iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    inv_diag = None if precond is None else 1.0 / np.asarray(precond, dtype=float)

    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), 0
    r = b - apply(x) if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= tol * bnorm:
        return x, 0

    z = r if inv_diag is None else inv_diag * r
    d = z.copy()
    rz = r @ z
    best_x, best_res = x.copy(), rnorm
    for it in range(1, max_iter + 1):
        Ad = apply(d)
        dAd = d @ Ad
        if dAd <= 0.0:
            break
        step = rz / dAd
        x += step * d
        r -= step * Ad
        rnorm = np.linalg.norm(r)
        if rnorm < best_res:
            best_x, best_res = x.copy(), rnorm
        if rnorm <= tol * bnorm:
            return x, it
        z = r if inv_diag is None else inv_diag * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise CGNotConverged(best_x, best_res / bnorm, it)
