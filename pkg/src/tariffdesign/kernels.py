"""Hot numeric kernels with a numba path and a pure-numpy path.

``USE_NUMBA`` (see :mod:`tariffdesign._jit`) picks the implementation at
import time.  Both paths are always importable so tests and the benchmark can
compare them directly.
"""

import numpy as np

from ._jit import USE_NUMBA, njit

OPTIMAL = 0
UNBOUNDED = 1
ITER_LIMIT = 2


# ---------------------------------------------------------------------------
# scalar affine recursion x[k+1] = a * x[k] + drive[k]


def _affine_rollout_py(a, x0, drive):
    out = np.empty(drive.shape[0] + 1)
    out[0] = x0
    x = x0
    for k in range(drive.shape[0]):
        x = a * x + drive[k]
        out[k + 1] = x
    return out


def affine_rollout_numpy(a, x0, drive):
    drive = np.asarray(drive, dtype=float)
    n = drive.shape[0]
    if n == 0:
        return np.array([float(x0)])
    # x[k] = a^k x0 + sum_{j<k} a^(k-1-j) drive[j]; solved as a lower
    # triangular Toeplitz product, fine for the horizons used here.
    k = np.arange(n + 1)
    powers = a ** (k[:, None] - 1 - k[None, :n]).clip(min=0)
    mask = k[:, None] - 1 - k[None, :n] >= 0
    return a**k * x0 + (np.where(mask, powers, 0.0) @ drive)


_affine_rollout_nb = njit(_affine_rollout_py)


def affine_rollout(a, x0, drive):
    drive = np.ascontiguousarray(drive, dtype=np.float64)
    if USE_NUMBA:
        return _affine_rollout_nb(float(a), float(x0), drive)
    return affine_rollout_numpy(a, x0, drive)


# ---------------------------------------------------------------------------
# dense tableau simplex
#
# Tableau layout: rows 0..m-1 are constraints, row m is the reduced-cost row.
# The last column holds the right-hand side; T[m, -1] is minus the objective.


def _simplex_loop_py(T, basis, allowed, max_iter, tol, piv_tol, bland_after):
    m = T.shape[0] - 1
    n = T.shape[1] - 1
    it = 0
    degenerate = 0
    bland = False
    while it < max_iter:
        # entering column
        col = -1
        best = -tol
        for j in range(n):
            if not allowed[j]:
                continue
            rc = T[m, j]
            if bland:
                if rc < -tol:
                    col = j
                    break
            elif rc < best:
                best = rc
                col = j
        if col < 0:
            return OPTIMAL, it, -1
        # ratio test, ties broken by smallest basic index
        row = -1
        best_ratio = np.inf
        for i in range(m):
            a = T[i, col]
            if a > piv_tol:
                ratio = T[i, n] / a
                if ratio < best_ratio - 1e-12:
                    best_ratio = ratio
                    row = i
                elif ratio <= best_ratio + 1e-12 and basis[i] < basis[row]:
                    row = i
        if row < 0:
            return UNBOUNDED, it, col
        if best_ratio <= 1e-12:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
        # pivot
        p = T[row, col]
        for j in range(n + 1):
            T[row, j] /= p
        for i in range(m + 1):
            if i == row:
                continue
            f = T[i, col]
            if f != 0.0:
                for j in range(n + 1):
                    T[i, j] -= f * T[row, j]
        basis[row] = col
        it += 1
    return ITER_LIMIT, it, -1


def simplex_loop_numpy(T, basis, allowed, max_iter, tol, piv_tol, bland_after):
    m = T.shape[0] - 1
    it = 0
    degenerate = 0
    bland = False
    while it < max_iter:
        rc = np.where(allowed, T[m, :-1], 0.0)
        cand = np.flatnonzero(rc < -tol)
        if cand.size == 0:
            return OPTIMAL, it, -1
        col = int(cand[0]) if bland else int(np.argmin(rc))
        a = T[:m, col]
        pos = a > piv_tol
        if not pos.any():
            return UNBOUNDED, it, col
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / a[pos]
        best_ratio = ratios.min()
        ties = np.flatnonzero(ratios <= best_ratio + 1e-12)
        row = int(ties[np.argmin(basis[ties])])
        if best_ratio <= 1e-12:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
        T[row] /= T[row, col]
        f = T[:, col].copy()
        f[row] = 0.0
        T -= np.outer(f, T[row])
        basis[row] = col
        it += 1
    return ITER_LIMIT, it, -1


_simplex_loop_nb = njit(_simplex_loop_py)


def simplex_loop(T, basis, allowed, max_iter=50_000, tol=1e-9, piv_tol=1e-9, bland_after=50):
    """Run primal simplex pivots on tableau ``T`` in place.

    Returns ``(status, iterations, column)`` where ``column`` is the entering
    column that exposed an unbounded ray (``-1`` otherwise).
    """
    if USE_NUMBA:
        status, it, col = _simplex_loop_nb(
            T, basis, allowed, int(max_iter), float(tol), float(piv_tol), int(bland_after)
        )
        return int(status), int(it), int(col)
    return simplex_loop_numpy(T, basis, allowed, max_iter, tol, piv_tol, bland_after)
