"""Row-wise Givens least squares for systems with short row profiles.

The factor-update systems have rows supported on narrow column windows
(per-parameter averaging rows and in-group difference rows touch only
the column blocks their cells live in).  Rotating the rows one at a
time into a triangular factor touches only those windows, which is far
cheaper than a dense factorization when the profile is narrow.  This is
an exact orthogonal factorization; numerically it is on par with a
dense QR.

The kernel reports rank deficiency (a zero or negligible pivot) by
returning an all-NaN solution so the caller can fall back to a dense
minimum-norm solve.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - accelerator missing
    numba = None
    HAVE_NUMBA = False


def _profile_ls_impl(A, b, lo, hi, order, rel_tol):
    M, N = A.shape
    R = np.zeros((N, N))
    c = np.zeros(N)
    hi_r = np.zeros(N, dtype=np.int64)
    filled = np.zeros(N, dtype=np.uint8)
    for t in range(M):
        i = order[t]
        row_hi = hi[i]
        if row_hi <= lo[i]:
            continue
        v = np.zeros(N)
        for col in range(lo[i], row_hi):
            v[col] = A[i, col]
        beta = b[i]
        j = lo[i]
        v_hi = row_hi
        while j < N:
            if v[j] != 0.0:
                if filled[j] == 0:
                    for col in range(j, v_hi):
                        R[j, col] = v[col]
                    hi_r[j] = v_hi
                    c[j] = beta
                    filled[j] = 1
                    break
                a_jj = R[j, j]
                v_j = v[j]
                rad = math.hypot(a_jj, v_j)
                cs = a_jj / rad
                sn = v_j / rad
                span = hi_r[j]
                if v_hi > span:
                    span = v_hi
                for col in range(j, span):
                    t1 = R[j, col]
                    t2 = v[col]
                    R[j, col] = cs * t1 + sn * t2
                    v[col] = cs * t2 - sn * t1
                R[j, j] = rad
                v[j] = 0.0
                t1 = c[j]
                c[j] = cs * t1 + sn * beta
                beta = cs * beta - sn * t1
                hi_r[j] = span
                if v_hi < span:
                    v_hi = span
            j += 1
    max_diag = 0.0
    for j in range(N):
        if filled[j] == 1 and abs(R[j, j]) > max_diag:
            max_diag = abs(R[j, j])
    x = np.full(N, np.nan)
    if max_diag == 0.0:
        return x
    for j in range(N):
        if filled[j] == 0 or abs(R[j, j]) <= rel_tol * max_diag:
            return x
    for j in range(N - 1, -1, -1):
        acc = c[j]
        for col in range(j + 1, hi_r[j]):
            acc -= R[j, col] * x[col]
        x[j] = acc / R[j, j]
    return x


if HAVE_NUMBA:
    _profile_ls_jit = numba.njit(cache=True, fastmath=False)(_profile_ls_impl)
else:  # pragma: no cover - accelerator missing
    _profile_ls_jit = _profile_ls_impl


def profile_ls(A: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray,
               order: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Solve min ||A x - b|| given per-row column windows [lo, hi).

    Returns NaNs when a pivot falls below ``rel_tol`` times the largest
    pivot (rank deficiency); callers should then use a dense solver.
    """
    return _profile_ls_jit(
        np.ascontiguousarray(A), np.ascontiguousarray(b, dtype=np.float64),
        lo, hi, order, rel_tol
    )


def profile_flops(lo: np.ndarray, hi: np.ndarray) -> float:
    """Rough rotation cost estimate for the profile factorization."""
    w = np.maximum(hi - lo, 0).astype(float)
    return float(3.0 * np.sum(w * w))
