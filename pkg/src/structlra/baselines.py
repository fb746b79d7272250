"""Comparison methods: alternating projections and an SVD realization heuristic.

Both are classic baselines for structured low-rank fitting.  The
alternating-projections method converges to a structured matrix but not
necessarily to a stationary point of the approximation problem and may
terminate at the wrong numerical rank; the realization heuristic is
fast but offers no optimality guarantee at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .structure import StructureSpec, evaluate, extract_params, project

__all__ = ["BaselineReport", "cadzow", "kung"]

_RANK_TOL = 1e-8


@dataclass(frozen=True)
class BaselineReport:
    """Outcome of a baseline run.

    ``achieved_rank`` is the numerical rank of the final structured
    matrix and is reported honestly; it may exceed the requested bound.
    ``frobenius_error`` is the squared Frobenius distance between the
    structured matrices at the input and estimated parameters.
    ``distance_trace`` records the Frobenius distance between the two
    half-step iterates of each alternating-projections iteration.
    """

    p_hat: np.ndarray
    frobenius_error: float
    achieved_rank: int
    iterations: int
    converged: bool
    distance_trace: list[float]


def _svd_truncate(D: np.ndarray, r: int) -> np.ndarray:
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def _numerical_rank(D: np.ndarray) -> int:
    s = np.linalg.svd(D, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > _RANK_TOL * s[0]))


def cadzow(spec: StructureSpec, p: np.ndarray, r: int, max_iter: int = 1000,
           tol: float = 1e-12) -> BaselineReport:
    """Alternate rank truncation and structure projection from the data.

    Each iteration truncates the current structured matrix to rank r by
    SVD and projects the result back onto the structured family; stops
    once the parameter vector changes by less than ``tol`` in 2-norm.
    """
    m, n = spec.shape
    if not (1 <= r < min(m, n)):
        raise ValueError(f"rank bound r={r} must satisfy 1 <= r < min(m, n)={min(m, n)}")
    p = np.asarray(p, dtype=float)
    D_struct = evaluate(spec, p)
    p_prev = p
    iterations = 0
    converged = False
    trace: list[float] = []
    for _ in range(max_iter):
        D_low = _svd_truncate(D_struct, r)
        trace.append(float(np.linalg.norm(D_struct - D_low)))
        D_struct = project(spec, D_low)
        p_new = extract_params(spec, D_struct)
        iterations += 1
        if np.linalg.norm(p_new - p_prev) < tol:
            p_prev = p_new
            converged = True
            break
        p_prev = p_new

    diff = evaluate(spec, p) - evaluate(spec, p_prev)
    return BaselineReport(
        p_hat=p_prev,
        frobenius_error=float(np.sum(diff * diff)),
        achieved_rank=_numerical_rank(D_struct),
        iterations=iterations,
        converged=converged,
        distance_trace=trace,
    )


def kung(y: np.ndarray, order: int, window: int) -> tuple[np.ndarray, np.ndarray]:
    """SVD-based balanced realization of a scalar sequence.

    Builds the Hankel matrix of ``y`` with ``window`` rows, truncates it
    at ``order``, reads the state matrix off the shift-invariance of the
    extended observability factor, and resimulates.  Returns the model
    coefficients (recurrence weights, ascending shift, last entry 1) and
    the resimulated trajectory.
    """
    y = np.asarray(y, dtype=float)
    T = y.size
    if not (1 <= order < window <= T - order):
        raise ValueError(
            f"need 1 <= order < window <= len(y) - order, got order={order}, "
            f"window={window}, len(y)={T}"
        )
    n = T - window + 1
    H = y[np.arange(window)[:, None] + np.arange(n)[None, :]]
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    root = np.sqrt(s[:order])
    obs = U[:, :order] * root            # extended observability factor
    states = root[:, None] * Vt[:order]  # state sequence, one column per start time
    A, _, _, _ = np.linalg.lstsq(obs[:-1], obs[1:], rcond=None)
    C = obs[0]
    x = states[:, 0]
    y_hat = np.empty(T)
    for t in range(T):
        y_hat[t] = C @ x
        x = A @ x
    theta = np.poly(A)[::-1]
    return theta, y_hat
