"""Dense and sparse symmetric-indefinite solves used by every solver here.

Dense systems go through Bunch-Kaufman LDL^T with one step of iterative
refinement; sparse systems through a cached SuperLU factorization, also
refined once.  Saddle problems [[M, B^T], [B, 0]] with a known constraint
kernel are handled by a symmetric bordering row/column against the kernel
vector, after projecting the constraint data onto the compatible subspace.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(RuntimeError):
    pass


def _ldl_block_solve(d, y):
    """Solve d z = y for the block-diagonal (1x1 / 2x2) LDL pivot matrix."""
    n = len(y)
    z = np.empty_like(y)
    i = 0
    while i < n:
        if i + 1 < n and d[i, i + 1] != 0.0:
            blk = d[i : i + 2, i : i + 2]
            det = blk[0, 0] * blk[1, 1] - blk[0, 1] * blk[1, 0]
            if det == 0.0:
                raise SingularSystemError(f"singular 2x2 pivot block at {i}")
            z[i] = (blk[1, 1] * y[i] - blk[0, 1] * y[i + 1]) / det
            z[i + 1] = (-blk[1, 0] * y[i] + blk[0, 0] * y[i + 1]) / det
            i += 2
        else:
            if d[i, i] == 0.0:
                raise SingularSystemError(f"zero pivot at index {i}")
            z[i] = y[i] / d[i, i]
            i += 1
    return z


class DenseFactor:
    """Bunch-Kaufman factorization handle for a dense symmetric matrix."""

    def __init__(self, A):
        A = np.asarray(A, float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        sym_defect = np.abs(A - A.T).max()
        if sym_defect > 1e-10 * max(1.0, np.abs(A).max()):
            raise ValueError(f"matrix is not symmetric (defect {sym_defect:.2e})")
        self.A = A
        lu, d, perm = sla.ldl(A, lower=True)
        self.L = lu[perm]
        self.d = d
        self.perm = perm

    def _solve_once(self, b):
        y = sla.solve_triangular(self.L, b[self.perm], lower=True, unit_diagonal=True)
        z = _ldl_block_solve(self.d, y)
        w = sla.solve_triangular(self.L.T, z, lower=False, unit_diagonal=True)
        x = np.empty_like(w)
        x[self.perm] = w
        return x

    def solve(self, b, refine=1):
        b = np.asarray(b, float)
        x = self._solve_once(b)
        for _ in range(refine):
            r = b - self.A @ x
            x = x + self._solve_once(r)
        return x


def dense_solve(A, b, *, check_residual=True):
    """Solve a dense symmetric (indefinite) system with one refinement step."""
    b = np.asarray(b, float)
    fac = DenseFactor(A)
    x = fac.solve(b)
    if check_residual:
        scale = max(np.linalg.norm(b), np.abs(fac.A).max() * np.linalg.norm(x), 1e-300)
        res = np.linalg.norm(b - fac.A @ x) / scale
        if res > 1e-8:
            raise SingularSystemError(f"dense solve residual {res:.2e}")
    return x


def saddle_matrix(M, B, kernel=None):
    """Dense KKT matrix [[M, B^T], [B, 0]], optionally bordered by a kernel row.

    ``kernel`` is a left null vector of B (constraint-space direction along
    which the data must be compatible); the bordering pins the corresponding
    multiplier component.
    """
    M = np.asarray(M, float)
    B = np.atleast_2d(np.asarray(B, float))
    n, m = M.shape[0], B.shape[0]
    size = n + m + (1 if kernel is not None else 0)
    A = np.zeros((size, size))
    A[:n, :n] = M
    A[n : n + m, :n] = B
    A[:n, n : n + m] = B.T
    if kernel is not None:
        k = np.asarray(kernel, float)
        A[n : n + m, -1] = k
        A[-1, n : n + m] = k
    return A


def saddle_solve_dense(M, B, rhs, g, kernel=None):
    """Minimize 1/2 x^T M x - rhs^T x subject to B x = g (dense path).

    Returns (x, multiplier).  With a kernel, g is first projected onto the
    compatible subspace; the projected-out component is the compatibility
    defect, available to callers via the kernel inner product beforehand.
    """
    M = np.asarray(M, float)
    B = np.atleast_2d(np.asarray(B, float))
    g = np.asarray(g, float)
    if kernel is not None:
        k = np.asarray(kernel, float)
        g = g - k * (k @ g) / (k @ k)
    A = saddle_matrix(M, B, kernel)
    b = np.concatenate([np.asarray(rhs, float), g, [0.0] * (1 if kernel is not None else 0)])
    sol = dense_solve(A, b)
    n = M.shape[0]
    return sol[:n], sol[n : n + B.shape[0]]


class SparseFactor:
    """SuperLU handle for a sparse matrix; deterministic for a fixed pattern."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        self.A = A
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularSystemError(f"sparse factorization failed: {exc}") from exc

    def solve(self, b, refine=1):
        b = np.asarray(b, float)
        x = self.lu.solve(b)
        for _ in range(refine):
            x = x + self.lu.solve(b - self.A @ x)
        return x


def sparse_factor(A) -> SparseFactor:
    return SparseFactor(A)


def sparse_solve(handle: SparseFactor, b):
    x = handle.solve(b)
    scale = max(np.linalg.norm(b), 1e-300)
    res = np.linalg.norm(b - handle.A @ x) / scale
    if res > 1e-8:
        raise SingularSystemError(f"sparse solve residual {res:.2e}")
    return x
