"""Inner loops of the smoother: block LDL^T factor/solve and Hessian assembly.

Every kernel exists twice, a numba version (``*_nb``) and a numpy version
(``*_np``). The public names (``factor_blocks``, ``solve_blocks``,
``assemble_blocks``) point to one or the other depending on
:data:`tksmooth._accel.USE_NUMBA`. Both flavours have identical semantics;
the test-suite runs them against each other.

Block conventions: ``diag`` has shape ``(N, n, n)``; ``sub`` has shape
``(N - 1, n, n)`` and ``sub[k - 1]`` couples states ``k - 1`` and ``k``
(0-based), i.e. it is the block in block-row ``k``, block-column ``k - 1``.
"""
import numpy as np
from scipy.linalg import cho_solve

from ._accel import USE_NUMBA, njit

# pivot rejected if it is <= PIVOT_RTOL * (largest diagonal entry of the block)
PIVOT_RTOL = 1e-14


# ---------------------------------------------------------------- numba

@njit
def _chol_nb(a, out, rtol):
    n = a.shape[0]
    amax = a[0, 0]
    for i in range(1, n):
        if a[i, i] > amax:
            amax = a[i, i]
    thresh = rtol * amax
    for j in range(n):
        s = a[j, j]
        for p in range(j):
            s -= out[j, p] * out[j, p]
        if s <= 0.0 or s <= thresh:
            return False
        ljj = np.sqrt(s)
        out[j, j] = ljj
        for i in range(j + 1, n):
            t = a[i, j]
            for p in range(j):
                t -= out[i, p] * out[j, p]
            out[i, j] = t / ljj
        for i in range(j):
            out[i, j] = 0.0
    return True


@njit
def _cho_solve_vec_nb(c, b, out):
    n = c.shape[0]
    for i in range(n):
        t = b[i]
        for p in range(i):
            t -= c[i, p] * out[p]
        out[i] = t / c[i, i]
    for i in range(n - 1, -1, -1):
        t = out[i]
        for p in range(i + 1, n):
            t -= c[p, i] * out[p]
        out[i] = t / c[i, i]


@njit
def factor_blocks_nb(diag, sub, rtol):
    N = diag.shape[0]
    n = diag.shape[1]
    lower = np.zeros((max(N - 1, 0), n, n))
    chol = np.zeros((N, n, n))
    piv = diag[0].copy()
    col = np.empty(n)
    for k in range(N):
        if k > 0:
            a = sub[k - 1]
            # row i of L_k solves D_{k-1} l = a[i, :]
            for i in range(n):
                _cho_solve_vec_nb(chol[k - 1], a[i], col)
                for j in range(n):
                    lower[k - 1, i, j] = col[j]
            for i in range(n):
                for j in range(n):
                    t = diag[k, i, j]
                    for p in range(n):
                        t -= lower[k - 1, i, p] * a[j, p]
                    piv[i, j] = t
            # symmetrize against rounding drift
            for i in range(n):
                for j in range(i):
                    m = 0.5 * (piv[i, j] + piv[j, i])
                    piv[i, j] = m
                    piv[j, i] = m
        if not _chol_nb(piv, chol[k], rtol):
            return lower, chol, k + 1
    return lower, chol, 0


@njit
def solve_blocks_nb(lower, chol, rhs):
    N = chol.shape[0]
    n = chol.shape[1]
    y = rhs.copy()
    for k in range(1, N):
        for i in range(n):
            t = y[k, i]
            for p in range(n):
                t -= lower[k - 1, i, p] * y[k - 1, p]
            y[k, i] = t
    z = np.empty(n)
    for k in range(N):
        _cho_solve_vec_nb(chol[k], y[k], z)
        for i in range(n):
            y[k, i] = z[i]
    for k in range(N - 2, -1, -1):
        for i in range(n):
            t = y[k, i]
            for p in range(n):
                t -= lower[k, p, i] * y[k + 1, p]
            y[k, i] = t
    return y


@njit
def assemble_blocks_nb(wq, gjac, hjac, wr):
    N = wq.shape[0]
    n = wq.shape[1]
    m = wr.shape[1]
    diag = wq.copy()
    sub = np.zeros((max(N - 1, 0), n, n))
    tmp = np.empty((n, n))
    for k in range(1, N):
        g = gjac[k - 1]
        w = wq[k]
        # tmp = W_k G_k
        for i in range(n):
            for j in range(n):
                t = 0.0
                for p in range(n):
                    t += w[i, p] * g[p, j]
                tmp[i, j] = t
                sub[k - 1, i, j] = -t
        # diag_{k-1} += G_k^T W_k G_k
        for i in range(n):
            for j in range(n):
                t = 0.0
                for p in range(n):
                    t += g[p, i] * tmp[p, j]
                diag[k - 1, i, j] += t
    tmh = np.empty((m, n))
    for k in range(N):
        h = hjac[k]
        r = wr[k]
        for i in range(m):
            for j in range(n):
                t = 0.0
                for p in range(m):
                    t += r[i, p] * h[p, j]
                tmh[i, j] = t
        for i in range(n):
            for j in range(n):
                t = 0.0
                for p in range(m):
                    t += h[p, i] * tmh[p, j]
                diag[k, i, j] += t
    return diag, sub


# ---------------------------------------------------------------- numpy

def _chol_np(a, rtol):
    try:
        c = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None
    piv = np.diag(c) ** 2
    if piv.min() <= rtol * a.diagonal().max():
        return None
    return c


def factor_blocks_np(diag, sub, rtol):
    N, n, _ = diag.shape
    lower = np.zeros((max(N - 1, 0), n, n))
    chol = np.zeros((N, n, n))
    piv = diag[0]
    for k in range(N):
        if k > 0:
            a = sub[k - 1]
            lower[k - 1] = cho_solve((chol[k - 1], True), a.T).T
            piv = diag[k] - lower[k - 1] @ a.T
            piv = 0.5 * (piv + piv.T)
        c = _chol_np(piv, rtol)
        if c is None:
            return lower, chol, k + 1
        chol[k] = c
    return lower, chol, 0


def solve_blocks_np(lower, chol, rhs):
    N = chol.shape[0]
    y = np.array(rhs, dtype=float)
    for k in range(1, N):
        y[k] -= lower[k - 1] @ y[k - 1]
    for k in range(N):
        y[k] = cho_solve((chol[k], True), y[k])
    for k in range(N - 2, -1, -1):
        y[k] -= lower[k].T @ y[k + 1]
    return y


def assemble_blocks_np(wq, gjac, hjac, wr):
    diag = wq.copy()
    wg = wq[1:] @ gjac
    sub = -wg
    diag[:-1] += np.swapaxes(gjac, 1, 2) @ wg
    diag += np.swapaxes(hjac, 1, 2) @ wr @ hjac
    return diag, sub


if USE_NUMBA:
    factor_blocks = factor_blocks_nb
    solve_blocks = solve_blocks_nb
    assemble_blocks = assemble_blocks_nb
else:
    factor_blocks = factor_blocks_np
    solve_blocks = solve_blocks_np
    assemble_blocks = assemble_blocks_np
