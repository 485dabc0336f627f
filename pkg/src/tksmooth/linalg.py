"""Symmetric positive-definite block-tridiagonal systems.

The Gauss-Newton matrix of a smoothing problem only couples neighbouring
time steps, so it is stored as ``N`` diagonal blocks plus ``N - 1``
sub-diagonal blocks and factored as ``L D L^T`` in ``O(n^3 N)`` operations.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NotPositiveDefinite

__all__ = [
    "BlockTridiagonalSystem",
    "BlockFactorization",
    "factor",
    "solve",
]


@dataclass(frozen=True)
class BlockTridiagonalSystem:
    """Symmetric block-tridiagonal matrix.

    Parameters
    ----------
    diag : ndarray, shape (N, n, n)
        Diagonal blocks.
    sub : ndarray, shape (N - 1, n, n)
        Sub-diagonal blocks; ``sub[k - 1]`` sits in block-row ``k`` and
        block-column ``k - 1``. The super-diagonal is ``sub[k - 1].T``.
    """

    diag: np.ndarray
    sub: np.ndarray

    def __post_init__(self):
        diag = np.ascontiguousarray(self.diag, dtype=float)
        sub = np.ascontiguousarray(self.sub, dtype=float)
        if diag.ndim != 3 or diag.shape[1] != diag.shape[2] or diag.shape[0] < 1:
            raise DimensionMismatch(f"diag must have shape (N, n, n), got {diag.shape}")
        N, n, _ = diag.shape
        if sub.size == 0 and N == 1:
            sub = np.zeros((0, n, n))
        if sub.shape != (N - 1, n, n):
            raise DimensionMismatch(
                f"sub must have shape {(N - 1, n, n)}, got {sub.shape}")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "sub", sub)

    @property
    def N(self):
        return self.diag.shape[0]

    @property
    def n(self):
        return self.diag.shape[1]

    def is_symmetric(self, rtol=1e-12):
        asym = np.abs(self.diag - np.swapaxes(self.diag, 1, 2)).max()
        return asym <= rtol * max(np.abs(self.diag).max(), 1e-300)

    def to_dense(self):
        N, n = self.N, self.n
        out = np.zeros((N * n, N * n))
        for k in range(N):
            out[k * n:(k + 1) * n, k * n:(k + 1) * n] = self.diag[k]
        for k in range(1, N):
            a = self.sub[k - 1]
            out[k * n:(k + 1) * n, (k - 1) * n:k * n] = a
            out[(k - 1) * n:k * n, k * n:(k + 1) * n] = a.T
        return out

    def matvec(self, x):
        """Product ``C @ x`` for ``x`` of shape ``(N, n)`` or ``(N * n,)``."""
        flat = np.ndim(x) == 1
        y = np.asarray(x, dtype=float).reshape(self.N, self.n)
        out = np.einsum("kij,kj->ki", self.diag, y)
        out[1:] += np.einsum("kij,kj->ki", self.sub, y[:-1])
        out[:-1] += np.einsum("kji,kj->ki", self.sub, y[1:])
        return out.ravel() if flat else out


@dataclass(frozen=True)
class BlockFactorization:
    """``C = L D L^T`` with unit lower block-bidiagonal ``L``.

    ``lower[k - 1]`` is the block of ``L`` below the diagonal in block-row
    ``k``; ``chol[k]`` is the lower Cholesky factor of the pivot ``D_k``.
    """

    lower: np.ndarray
    chol: np.ndarray

    @property
    def N(self):
        return self.chol.shape[0]

    @property
    def n(self):
        return self.chol.shape[1]

    @property
    def pivots(self):
        return self.chol @ np.swapaxes(self.chol, 1, 2)

    def to_dense(self):
        """Dense ``(L, D)`` for inspection and testing."""
        N, n = self.N, self.n
        L = np.eye(N * n)
        D = np.zeros((N * n, N * n))
        piv = self.pivots
        for k in range(N):
            D[k * n:(k + 1) * n, k * n:(k + 1) * n] = piv[k]
        for k in range(1, N):
            L[k * n:(k + 1) * n, (k - 1) * n:k * n] = self.lower[k - 1]
        return L, D


def factor(sys):
    """Block ``L D L^T`` factorization of a block-tridiagonal system.

    Raises
    ------
    NotPositiveDefinite
        If a pivot block (Schur complement) is not positive definite. The
        1-based index of that block is stored on the exception.
    """
    if not sys.is_symmetric():
        raise DimensionMismatch("diagonal blocks are not symmetric")
    lower, chol, bad = kernels.factor_blocks(sys.diag, sys.sub, kernels.PIVOT_RTOL)
    if bad:
        raise NotPositiveDefinite(
            f"pivot block {bad} of {sys.N} is not positive definite", block=bad)
    return BlockFactorization(lower, chol)


def solve(fac, rhs):
    """Solve ``C y = rhs`` given ``fac = factor(C)``.

    ``rhs`` may be flat (length ``N * n``) or shaped ``(N, n)``; the result
    has the same shape.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.size != fac.N * fac.n or rhs.ndim not in (1, 2):
        raise DimensionMismatch(
            f"rhs has {rhs.size} entries, system has {fac.N * fac.n}")
    y = kernels.solve_blocks(fac.lower, fac.chol,
                             np.ascontiguousarray(rhs.reshape(fac.N, fac.n)))
    return y.reshape(rhs.shape)
