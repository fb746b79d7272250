"""Penalized alternating least squares for structured low-rank fitting.

The approximation is kept as a product P L of rank at most r; closeness
to the structured family is encouraged by a quadratic penalty on the
component of P L orthogonal to the family.  For a fixed penalty weight
each factor update is an exact linear least squares solve; an outer
continuation loop grows the penalty weight until the product is
structured to working precision.

The least squares systems are assembled in reduced form: the penalty
block has m*n - num_params rows built from the orthonormal complement
basis of the structure span, and the misfit block has num_params rows
built from per-parameter cell averages.  No m*n-by-m*n projector is
ever formed, and the systems are solved by orthogonal factorization
(profile-aware Givens rows when the sparsity pays off, LAPACK QR
otherwise) with a minimum-norm fallback for rank-deficient systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.linalg import get_lapack_funcs

from ._fastls import HAVE_NUMBA, profile_flops, profile_ls
from .structure import (
    ComplementBasis,
    StructureSpec,
    complement_basis,
    evaluate,
    extract_params,
    occurrence_counts,
    off_structure,
)
from .weighting import WeightSpec, diagonal_weights, weighted_norm_sq

__all__ = [
    "Factors",
    "PenaltyConfig",
    "LambdaStep",
    "SolveReport",
    "init_svd",
    "update_L",
    "update_P",
    "objective",
    "structure_deviation",
    "solve_fixed_lambda",
    "solve",
    "completion_solve",
    "read_params_csv",
]

_RANK_DEFICIENCY_TOL = 1e-8
_PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class Factors:
    """Rank-bounded pair: the approximation is ``P @ L``."""

    P: np.ndarray
    L: np.ndarray

    @property
    def rank_bound(self) -> int:
        return self.P.shape[1]

    def product(self) -> np.ndarray:
        return self.P @ self.L


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty schedule and stopping tolerances.

    The inner loop at a fixed penalty weight stops once the relative
    objective decrease per sweep drops below the current inner
    tolerance; the outer loop multiplies the penalty weight by
    ``growth_ambitious`` after cheap inner solves (at most
    ``cheap_sweep_threshold`` sweeps) and by ``growth_modest``
    otherwise, until ``lambda_max`` is passed.
    """

    lambda_init: float = 1.0
    growth_modest: float = 1.5
    growth_ambitious: float = 10.0
    cheap_sweep_threshold: int = 5
    lambda_max: float = 1e14
    inner_tol_init: float = 1e-5
    inner_tol_decay: float = 0.5
    inner_tol_floor: float = 1e-12
    max_inner_sweeps: int = 200
    eps_structure: float = 1e-12

    def __post_init__(self) -> None:
        if self.lambda_init <= 0 or self.lambda_max < self.lambda_init:
            raise ValueError("need 0 < lambda_init <= lambda_max")
        if self.growth_modest <= 1 or self.growth_ambitious <= 1:
            raise ValueError("growth factors must exceed 1")
        if min(self.inner_tol_init, self.inner_tol_floor, self.eps_structure) <= 0:
            raise ValueError("tolerances must be positive")
        if not (0 < self.inner_tol_decay < 1):
            raise ValueError("inner_tol_decay must lie in (0, 1)")
        if self.max_inner_sweeps < 1 or self.cheap_sweep_threshold < 1:
            raise ValueError("sweep limits must be positive")


@dataclass(frozen=True)
class LambdaStep:
    """One outer continuation step: penalty weight, sweeps used, final objective."""

    lambda_value: float
    sweeps: int
    objective: float


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a penalized solve."""

    p_hat: np.ndarray
    weighted_error: float
    structure_deviation: float
    lambda_trace: list[LambdaStep]
    total_sweeps: int
    converged: bool
    multiplier_estimate: np.ndarray
    multiplier_change: float | None = None
    rank_deficient_P: bool = False
    rank_deficient_L: bool = False


# ---------------------------------------------------------------------------
# assembly of the least squares systems
# ---------------------------------------------------------------------------


class _Side:
    """Assembly data for one factor update direction.

    ``mis`` and ``pen`` map the fixed factor to the misfit and penalty
    blocks: for the L update they are (num_params*n, m) and
    (pen_rows*n, m) sparse matrices applied to P; for the P update,
    (num_params*m, n) and (pen_rows*m, n) matrices applied to L's
    transpose.  ``lo``/``hi`` bound each stacked row's column-block
    window; multiplied by the factor width r they bound the nonzero
    columns, which decides between the profile solver and dense QR.
    """

    def __init__(self, mis: scipy.sparse.csr_matrix, pen: scipy.sparse.csr_matrix,
                 blocks: int, lo: np.ndarray, hi: np.ndarray):
        self.mis = mis
        self.pen = pen
        self.blocks = blocks
        self.lo = lo
        self.hi = hi


def _build_side(spec: StructureSpec, basis: ComplementBasis, inv: np.ndarray,
                kk: np.ndarray, rows_mis, cols_mis, rows_pen, cols_pen,
                blocks: int, feed_dim: int, blk_mis, blk_pen) -> _Side:
    n_p = spec.num_params
    mis = scipy.sparse.csr_matrix(
        (inv, (rows_mis, cols_mis)), shape=(n_p * blocks, feed_dim)
    )
    pen = scipy.sparse.csr_matrix(
        (basis.weight, (rows_pen, cols_pen)), shape=(basis.num_rows * blocks, feed_dim)
    )
    lo = np.full(n_p + basis.num_rows, blocks, dtype=np.int64)
    hi = np.zeros(n_p + basis.num_rows, dtype=np.int64)
    np.minimum.at(lo, kk, blk_mis)
    np.maximum.at(hi, kk, blk_mis + 1)
    np.minimum.at(lo, n_p + basis.row, blk_pen)
    np.maximum.at(hi, n_p + basis.row, blk_pen + 1)
    lo = np.minimum(lo, hi)
    return _Side(mis, pen, blocks, lo, hi)


class _Plan:
    """Per-structure data reused across factor updates."""

    def __init__(self, spec: StructureSpec):
        self.spec = spec
        m, n = spec.shape
        mask = spec.param_index >= 0
        ii, jj = np.nonzero(mask)
        kk = spec.param_index[ii, jj]
        counts = occurrence_counts(spec).astype(float)
        safe = np.maximum(counts, 1.0)
        self.cell_i, self.cell_j, self.cell_k = ii, jj, kk
        self.counts = counts
        fi, fj = np.nonzero(~mask)
        self.fixed_i, self.fixed_j = fi, fj
        self.fixed_v = spec.fixed_values[fi, fj]
        basis = complement_basis(spec)
        self.basis = basis
        inv = 1.0 / safe[kk]

        # L update: unknowns are the r*n entries of L grouped by column;
        # the fixed factor P enters through its rows.
        self.side_L = _build_side(
            spec, basis, inv, kk, kk * n + jj, ii,
            basis.row * n + basis.cell_col, basis.cell_row,
            blocks=n, feed_dim=m, blk_mis=jj, blk_pen=basis.cell_col,
        )
        # P update: unknowns are the m*r entries of P grouped by row;
        # the fixed factor L enters through its columns.
        self.side_P = _build_side(
            spec, basis, inv, kk, kk * m + ii, jj,
            basis.row * m + basis.cell_row, basis.cell_col,
            blocks=m, feed_dim=n, blk_mis=ii, blk_pen=basis.cell_row,
        )


_plan_cache: dict[int, tuple[StructureSpec, _Plan]] = {}


def _make_plan(spec: StructureSpec) -> _Plan:
    cached = _plan_cache.get(id(spec))
    if cached is not None and cached[0] is spec:
        return cached[1]
    plan = _Plan(spec)
    if len(_plan_cache) > 32:
        _plan_cache.clear()
    # keep the spec referenced so its id cannot be recycled
    _plan_cache[id(spec)] = (spec, plan)
    return plan


_lapack_cache: dict[str, object] = {}
_lwork_cache: dict[tuple[str, int, int], int] = {}


def _lapack(name: str):
    fn = _lapack_cache.get(name)
    if fn is None:
        fn = get_lapack_funcs((name,), dtype=np.float64)[0]
        _lapack_cache[name] = fn
    return fn


def _lwork(name: str, M: int, N: int) -> int:
    key = (name, M, N)
    size = _lwork_cache.get(key)
    if size is None:
        if name == "gels":
            work, info = _lapack("gels_lwork")(M, N, 1)
        else:
            work, info = _lapack("gelsy_lwork")(M, N, 1, _PIVOT_TOL)
        size = max(int(work), N + 1) if info == 0 else max(4096, 32 * (M + N))
        _lwork_cache[key] = size
    return size


def _dense_ls(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense QR least squares with a minimum-norm fallback."""
    M, N = A.shape
    if M >= N:
        gels = _lapack("gels")
        lqr, x, info = gels(A.copy(), b.copy(), lwork=_lwork("gels", M, N))
        if info == 0:
            diag = np.abs(np.diag(lqr[:N, :N]))
            top = diag.max() if diag.size else 0.0
            if top > 0.0 and diag.min() > _PIVOT_TOL * top and np.all(np.isfinite(x[:N])):
                return np.ascontiguousarray(x[:N])
    gelsy = _lapack("gelsy")
    jptv = np.zeros(N, dtype=np.int32)
    _, x, _, _, info = gelsy(A.copy(), b.copy(), jptv, _PIVOT_TOL,
                             _lwork("gelsy", M, N))
    if info != 0:
        raise np.linalg.LinAlgError("least squares solve failed")
    return np.ascontiguousarray(x[:N])


def _solve_side(side: _Side, factor_rows: np.ndarray, weights: WeightSpec,
                p: np.ndarray, lam: float, r: int,
                shift: np.ndarray) -> np.ndarray:
    """Assemble and solve one stacked factor-update system.

    ``factor_rows`` carries the fixed factor so that one sparse product
    yields the block entries: row b*r+s of the result is the system row
    for block b, unknown slot s.
    """
    n_p = p.size
    pen_rows = shift.size
    blocks = side.blocks
    use_mis = bool(np.any(weights.data))
    root = np.sqrt(lam)
    rows_total = (n_p if use_mis else 0) + pen_rows
    A = np.zeros((rows_total, blocks * r))
    b = np.zeros(rows_total)
    lo = np.zeros(rows_total, dtype=np.int64)
    hi = np.zeros(rows_total, dtype=np.int64)
    off = 0
    if use_mis:
        G = (side.mis @ factor_rows).reshape(n_p, blocks * r)
        if weights.kind == "diagonal":
            A[:n_p] = weights.factor_matrix[:, None] * G
        else:
            A[:n_p] = weights.factor_matrix @ G
        b[:n_p] = weights.apply_factor(p)
        lo[:n_p] = side.lo[:n_p] * r
        hi[:n_p] = side.hi[:n_p] * r
        off = n_p
    B = (side.pen @ factor_rows).reshape(pen_rows, blocks * r)
    A[off:] = root * B
    b[off:] = root * shift
    lo[off:] = side.lo[n_p:] * r
    hi[off:] = side.hi[n_p:] * r

    N = blocks * r
    if HAVE_NUMBA and weights.kind != "full":
        fast = profile_flops(lo, hi)
        # scalar rotation flops run well below BLAS3 speed; only take the
        # profile path when the window structure wins by a wide margin
        if fast < 0.15 * (2.0 * rows_total * N * N):
            order = np.argsort(lo, kind="stable").astype(np.int64)
            x = profile_ls(A, b, lo, hi, order, _PIVOT_TOL)
            if np.all(np.isfinite(x)):
                return x
    return _dense_ls(A, b)


def _update_L_planned(plan: _Plan, weights: WeightSpec, p: np.ndarray,
                      P: np.ndarray, lam: float) -> np.ndarray:
    n = plan.spec.shape[1]
    r = P.shape[1]
    x = _solve_side(plan.side_L, np.ascontiguousarray(P), weights, p, lam, r,
                    plan.basis.shift)
    return x.reshape(n, r).T


def _update_P_planned(plan: _Plan, weights: WeightSpec, p: np.ndarray,
                      L: np.ndarray, lam: float) -> np.ndarray:
    m = plan.spec.shape[0]
    r = L.shape[0]
    x = _solve_side(plan.side_P, np.ascontiguousarray(L.T), weights, p, lam, r,
                    plan.basis.shift)
    return x.reshape(m, r)


def update_L(spec: StructureSpec, weights: WeightSpec, p: np.ndarray,
             P: np.ndarray, lam: float) -> np.ndarray:
    """Exact minimizer of the objective over L for fixed P."""
    _check_problem(spec, weights, p)
    return _update_L_planned(_make_plan(spec), weights,
                             np.asarray(p, dtype=float),
                             np.asarray(P, dtype=float), lam)


def update_P(spec: StructureSpec, weights: WeightSpec, p: np.ndarray,
             L: np.ndarray, lam: float) -> np.ndarray:
    """Exact minimizer of the objective over P for fixed L."""
    _check_problem(spec, weights, p)
    return _update_P_planned(_make_plan(spec), weights,
                             np.asarray(p, dtype=float),
                             np.asarray(L, dtype=float), lam)


# ---------------------------------------------------------------------------
# objective, initialization, alternation
# ---------------------------------------------------------------------------


def _objective_planned(plan: _Plan, weights: WeightSpec, p: np.ndarray,
                       PL: np.ndarray, lam: float) -> float:
    vals = PL[plan.cell_i, plan.cell_j]
    means = np.zeros(plan.spec.num_params)
    np.divide(
        np.bincount(plan.cell_k, weights=vals, minlength=plan.spec.num_params),
        plan.counts, out=means, where=plan.counts > 0,
    )
    dev = vals - means[plan.cell_k]
    off_sq = float(dev @ dev)
    if plan.fixed_i.size:
        fdev = PL[plan.fixed_i, plan.fixed_j] - plan.fixed_v
        off_sq += float(fdev @ fdev)
    resid = p - means
    wr = weights.apply_factor(resid)
    return float(wr @ wr) + lam * off_sq


def objective(spec: StructureSpec, weights: WeightSpec, p: np.ndarray,
              P: np.ndarray, L: np.ndarray, lam: float) -> float:
    """Weighted parameter misfit plus lam times the squared off-structure norm."""
    _check_problem(spec, weights, p)
    PL = np.asarray(P) @ np.asarray(L)
    return _objective_planned(_make_plan(spec), weights, np.asarray(p, dtype=float),
                              PL, lam)


def structure_deviation(spec: StructureSpec, P: np.ndarray, L: np.ndarray) -> float:
    """Squared off-structure norm of P L relative to its squared Frobenius norm."""
    PL = np.asarray(P) @ np.asarray(L)
    denom = float(np.sum(PL * PL))
    if denom == 0.0:
        return 0.0
    off = off_structure(spec, PL)
    return float(off @ off) / denom


def init_svd(spec: StructureSpec, p: np.ndarray, r: int) -> Factors:
    """Truncated SVD initialization at the matrix evaluated from ``p``.

    P holds the leading left singular vectors with a deterministic sign
    (largest-magnitude entry nonnegative); L absorbs the singular
    values.
    """
    m, n = spec.shape
    if not (1 <= r < min(m, n)):
        raise ValueError(f"rank bound r={r} must satisfy 1 <= r < min(m, n)={min(m, n)}")
    D = evaluate(spec, p)
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    U, s, Vt = U[:, :r], s[:r], Vt[:r]
    for c in range(r):
        lead = np.argmax(np.abs(U[:, c]))
        if U[lead, c] < 0:
            U[:, c] = -U[:, c]
            Vt[c] = -Vt[c]
    return Factors(U, s[:, None] * Vt)


def solve_fixed_lambda(spec: StructureSpec, weights: WeightSpec, p: np.ndarray,
                       factors: Factors, lam: float, tol: float,
                       max_sweeps: int) -> tuple[Factors, int]:
    """Alternate the two factor updates at a fixed penalty weight.

    Stops when the relative objective decrease over a sweep falls below
    ``tol`` or ``max_sweeps`` is reached.  The objective never increases
    because each half-step is an exact least squares minimizer.
    """
    _check_problem(spec, weights, p)
    factors, sweeps, _ = _alternate(_make_plan(spec), weights,
                                    np.asarray(p, dtype=float), factors, lam,
                                    tol, max_sweeps)
    return factors, sweeps


def _alternate(plan: _Plan, weights: WeightSpec, p: np.ndarray, factors: Factors,
               lam: float, tol: float, max_sweeps: int) -> tuple[Factors, int, float]:
    P, L = factors.P, factors.L
    f_prev = _objective_planned(plan, weights, p, P @ L, lam)
    sweeps = 0
    f_new = f_prev
    for _ in range(max_sweeps):
        L = _update_L_planned(plan, weights, p, P, lam)
        P = _update_P_planned(plan, weights, p, L, lam)
        sweeps += 1
        f_new = _objective_planned(plan, weights, p, P @ L, lam)
        if (f_prev - f_new) < tol * max(f_prev, 1e-300):
            break
        f_prev = f_new
    return Factors(P, L), sweeps, f_new


def solve(spec: StructureSpec, weights: WeightSpec, p: np.ndarray, r: int,
          config: PenaltyConfig | None = None,
          P0: np.ndarray | None = None) -> tuple[Factors, SolveReport]:
    """Full continuation solve of the penalized approximation problem.

    Starts from the truncated SVD of the evaluated data matrix (or the
    supplied ``P0``), alternates factor updates at each penalty weight,
    and grows the weight until it exceeds ``lambda_max``.  The report
    records the continuation trace, the estimated parameters and the
    multiplier estimate (minus the final penalty weight times the
    off-structure residual).
    """
    config = config or PenaltyConfig()
    _check_problem(spec, weights, p)
    p = np.asarray(p, dtype=float)
    m, n = spec.shape
    if not (1 <= r < min(m, n)):
        raise ValueError(f"rank bound r={r} must satisfy 1 <= r < min(m, n)={min(m, n)}")
    if P0 is None:
        factors = init_svd(spec, p, r)
    else:
        P0 = np.asarray(P0, dtype=float)
        if P0.shape != (m, r):
            raise ValueError(f"P0 has shape {P0.shape}, expected {(m, r)}")
        D = evaluate(spec, p)
        L0, _, _, _ = np.linalg.lstsq(P0, D, rcond=None)
        factors = Factors(P0, L0)

    plan = _make_plan(spec)
    lam = config.lambda_init
    tol = config.inner_tol_init
    trace: list[LambdaStep] = []
    total = 0
    nu_prev: np.ndarray | None = None
    nu_last: np.ndarray | None = None
    while lam <= config.lambda_max:
        factors, sweeps, f_val = _alternate(
            plan, weights, p, factors, lam, tol, config.max_inner_sweeps
        )
        trace.append(LambdaStep(lam, sweeps, f_val))
        total += sweeps
        nu_prev = nu_last
        nu_last = -lam * off_structure(spec, factors.product())
        growth = (
            config.growth_ambitious
            if sweeps <= config.cheap_sweep_threshold
            else config.growth_modest
        )
        lam *= growth
        tol = max(config.inner_tol_decay * tol, config.inner_tol_floor)
    assert nu_last is not None  # lambda_init <= lambda_max guarantees one step

    report = _build_report(spec, weights, p, factors, trace, total,
                           config.eps_structure, nu_last, nu_prev)
    return factors, report


def completion_solve(spec: StructureSpec, r: int,
                     config: PenaltyConfig | None = None,
                     p0: np.ndarray | None = None) -> tuple[Factors, SolveReport]:
    """Structured completion: fixed cells carry the data, weights are zero.

    With no parameter misfit term, only the off-structure penalty
    remains and no continuation is needed; the factor updates alternate
    on the penalty term alone until the product is structured to
    working precision.
    """
    config = config or PenaltyConfig()
    m, n = spec.shape
    if not (1 <= r < min(m, n)):
        raise ValueError(f"rank bound r={r} must satisfy 1 <= r < min(m, n)={min(m, n)}")
    if p0 is None:
        p0 = np.zeros(spec.num_params)
    weights = diagonal_weights(np.zeros(spec.num_params))
    factors = init_svd(spec, p0, r)
    plan = _make_plan(spec)

    def off_sq(fac: Factors) -> float:
        off = off_structure(spec, fac.product())
        return float(off @ off)

    # feasibility problem: keep sweeping until progress stalls, not merely
    # until the deviation threshold is crossed (sweeps are cheap and each
    # one tightens the recovered entries)
    sweeps = 0
    f_prev = off_sq(factors)
    if structure_deviation(spec, factors.P, factors.L) >= config.eps_structure:
        while sweeps < config.max_inner_sweeps:
            L = _update_L_planned(plan, weights, p0, factors.P, 1.0)
            P = _update_P_planned(plan, weights, p0, L, 1.0)
            factors = Factors(P, L)
            sweeps += 1
            f_new = off_sq(factors)
            if (f_prev - f_new) < config.inner_tol_floor * max(f_prev, 1e-300):
                break
            f_prev = f_new

    f_final = off_sq(factors)
    trace = [LambdaStep(1.0, sweeps, f_final)]
    report = _build_report(spec, weights, p0, factors, trace, sweeps,
                           config.eps_structure,
                           -off_structure(spec, factors.product()), None)
    return factors, report


def _build_report(spec: StructureSpec, weights: WeightSpec, p: np.ndarray,
                  factors: Factors, trace: list[LambdaStep], total: int,
                  eps_structure: float, nu_last: np.ndarray,
                  nu_prev: np.ndarray | None) -> SolveReport:
    PL = factors.product()
    p_hat = extract_params(spec, PL)
    deviation = structure_deviation(spec, factors.P, factors.L)
    change = None
    if nu_prev is not None:
        change = float(np.linalg.norm(nu_last - nu_prev) / max(np.linalg.norm(nu_last), 1e-300))
    return SolveReport(
        p_hat=p_hat,
        weighted_error=weighted_norm_sq(weights, np.asarray(p, dtype=float) - p_hat),
        structure_deviation=deviation,
        lambda_trace=trace,
        total_sweeps=total,
        converged=bool(deviation < eps_structure),
        multiplier_estimate=nu_last,
        multiplier_change=change,
        rank_deficient_P=_rank_deficient(factors.P),
        rank_deficient_L=_rank_deficient(factors.L),
    )


def _rank_deficient(M: np.ndarray) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return True
    return bool(s[-1] / s[0] < _RANK_DEFICIENCY_TOL)


def _check_problem(spec: StructureSpec, weights: WeightSpec, p: np.ndarray) -> None:
    p = np.asarray(p)
    if p.shape != (spec.num_params,):
        raise ValueError(
            f"parameter vector has length {p.size}, expected {spec.num_params}"
        )
    if weights.num_params != spec.num_params:
        raise ValueError(
            f"weights cover {weights.num_params} parameters, expected {spec.num_params}"
        )


def read_params_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a one-value-per-line parameter file.

    The token ``?`` (or NaN) marks a missing entry.  Returns the values
    (NaN where missing) and the boolean missing mask; callers decide how
    to fill the holes.
    """
    values: list[float] = []
    missing: list[bool] = []
    with open(path, "r", encoding="utf-8") as fh:
        for pos, line in enumerate(fh):
            token = line.strip()
            if not token:
                continue
            if token == "?":
                values.append(np.nan)
                missing.append(True)
                continue
            try:
                x = float(token)
            except ValueError as exc:
                raise ValueError(f"line {pos + 1} of {path!s}: bad number {token!r}") from exc
            values.append(x)
            missing.append(bool(np.isnan(x)))
    if not values:
        raise ValueError(f"{path!s}: empty parameter file")
    return np.asarray(values), np.asarray(missing, dtype=bool)
