"""Application drivers: autonomous system identification and approximate
common divisors of polynomials.

Both reduce to structured low-rank fitting: a scalar linear recurrence
of order ell makes the Hankel matrix of its trajectory rank deficient,
and a nontrivial common divisor of a polynomial set makes the
generalized Sylvester matrix of the coefficients rank deficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import Factors, PenaltyConfig, SolveReport, solve
from .structure import build_generalized_sylvester, build_hankel, evaluate
from .weighting import frobenius_weights, identity_weights, with_missing

__all__ = [
    "LtiExperiment",
    "PolySet",
    "GcdResult",
    "simulate_sysid",
    "missing_stride_mask",
    "fill_missing_neighbors",
    "identify",
    "gcd_approximate",
    "read_trajectory_csv",
    "write_trajectories_csv",
    "read_polynomials_csv",
]


@dataclass(frozen=True)
class LtiExperiment:
    """One simulated identification run: true and noisy trajectories."""

    T: int
    order: int
    window: int
    y0: np.ndarray
    y: np.ndarray
    noise_level: float
    missing_stride: int | None
    seed: int

    def missing_mask(self) -> np.ndarray:
        if self.missing_stride is None:
            return np.zeros(self.T, dtype=bool)
        return missing_stride_mask(self.T, self.missing_stride)


@dataclass(frozen=True)
class PolySet:
    """Polynomials as ascending coefficient vectors plus the target divisor degree."""

    coefficients: list[np.ndarray]
    divisor_degree: int = 1

    def __post_init__(self) -> None:
        coeffs = [np.asarray(c, dtype=float) for c in self.coefficients]
        if len(coeffs) < 2:
            raise ValueError("need at least two polynomials")
        if any(c.ndim != 1 or c.size < 2 or not np.any(c) for c in coeffs):
            raise ValueError("each polynomial needs a nonzero coefficient vector of length >= 2")
        if self.divisor_degree < 1:
            raise ValueError("divisor degree must be at least 1")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degrees(self) -> list[int]:
        return [c.size - 1 for c in self.coefficients]


@dataclass(frozen=True)
class GcdResult:
    """Estimated coefficients and common roots of an approximate divisor run."""

    p_hat: np.ndarray
    coefficients: list[np.ndarray]
    common_roots: list[complex]
    factored: list[str]
    divisor_found: bool
    coefficient_error: float
    report: SolveReport
    factors: Factors


def simulate_sysid(seed: int, T: int = 50, order: int = 4, window: int = 5,
                   noise_level: float = 0.2,
                   missing_stride: int | None = None) -> LtiExperiment:
    """Two exponentially modulated cosines plus scaled Gaussian noise.

    The noise vector is normalized and rescaled so that the relative
    perturbation of the whole trajectory equals ``noise_level`` exactly.
    """
    t = np.arange(1, T + 1, dtype=float)
    y0 = 0.9**t * np.cos(np.pi * t / 5) + 0.2 * 1.05**t * np.cos(np.pi * t / 12 + np.pi / 4)
    e = np.random.default_rng(seed).standard_normal(T)
    y = y0 + noise_level * (e / np.linalg.norm(e)) * np.linalg.norm(y0)
    return LtiExperiment(T, order, window, y0, y, noise_level, missing_stride, seed)


def missing_stride_mask(T: int, stride: int) -> np.ndarray:
    """Mask removing every ``stride``-th sample (1-based positions stride, 2*stride, ...)."""
    if stride < 2:
        raise ValueError("stride must be at least 2")
    mask = np.zeros(T, dtype=bool)
    mask[stride - 1 :: stride] = True
    return mask


def fill_missing_neighbors(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill masked entries with the mean of the nearest present neighbors.

    Interior holes average the closest present sample on each side;
    holes at the boundary copy the single available side.
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise ValueError("mask length does not match the data")
    if mask.all():
        raise ValueError("all samples are missing")
    present = np.nonzero(~mask)[0]
    out = values.copy()
    for idx in np.nonzero(mask)[0]:
        left = present[present < idx]
        right = present[present > idx]
        neighbors = []
        if left.size:
            neighbors.append(values[left[-1]])
        if right.size:
            neighbors.append(values[right[0]])
        out[idx] = np.mean(neighbors)
    return out


def identify(y: np.ndarray, order: int, window: int, weights_mode: str = "l2",
             missing: np.ndarray | None = None,
             config: PenaltyConfig | None = None) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    """Estimate recurrence coefficients and a denoised trajectory.

    Fits a rank-``order`` structured approximation of the Hankel matrix
    of ``y`` with ``window`` rows.  ``weights_mode`` selects the misfit
    norm: "l2" weighs every sample once, "frobenius" weighs each sample
    by its Hankel occurrence count.  Missing samples (boolean mask) get
    zero weight and a neighbor-average initial fill.

    Returns the unit-norm coefficient vector, the estimated trajectory
    and the solve report.
    """
    y = np.asarray(y, dtype=float)
    T = y.size
    if not (1 <= order < window <= T - window + 1):
        raise ValueError(
            f"need 1 <= order < window <= T - window + 1, got order={order}, "
            f"window={window}, T={T}"
        )
    spec = build_hankel(window, T)
    if weights_mode == "l2":
        weights = identity_weights(T)
    elif weights_mode == "frobenius":
        weights = frobenius_weights(spec)
    else:
        raise ValueError("weights_mode must be 'l2' or 'frobenius'")

    if missing is not None and np.any(missing):
        missing = np.asarray(missing, dtype=bool)
        weights = with_missing(weights, missing)
        p0 = fill_missing_neighbors(y, missing)
    else:
        p0 = y

    factors, report = solve(spec, weights, p0, order, config)
    y_hat = report.p_hat
    kernel_spec = build_hankel(order + 1, T)
    U, _, _ = np.linalg.svd(evaluate(kernel_spec, y_hat), full_matrices=False)
    theta = U[:, -1]
    lead = np.argmax(np.abs(theta))
    if theta[lead] < 0:
        theta = -theta
    return theta, y_hat, report


def _root_clusters(all_roots: list[np.ndarray], count: int,
                   tol: float) -> list[complex]:
    """Up to ``count`` root clusters containing one root of every polynomial."""
    found: list[tuple[float, complex]] = []
    for seed_root in all_roots[0]:
        members = [seed_root]
        center = seed_root
        for other in all_roots[1:]:
            if other.size == 0:
                return []
            pick = other[np.argmin(np.abs(other - center))]
            members.append(pick)
            center = np.mean(members)
        radius = max(abs(mem - center) for mem in members)
        if radius <= tol:
            found.append((float(radius), complex(center)))
    found.sort(key=lambda item: item[0])
    kept: list[complex] = []
    for _, center in found:
        if all(abs(center - other) > tol for other in kept):
            kept.append(center)
        if len(kept) == count:
            break
    return kept


def _format_root(root: complex) -> str:
    if abs(root.imag) <= 1e-9 * (1.0 + abs(root)):
        return f"{root.real:.5g}"
    return f"{root.real:.5g}{root.imag:+.5g}i"


def _factored_display(coeffs: np.ndarray) -> str:
    n = coeffs.size - 1
    roots = np.roots(coeffs[::-1])
    lead = coeffs[-1] * (-1.0) ** n
    parts = "".join(f"({_format_root(r)} - z)" for r in sorted(roots, key=lambda z: z.real))
    return f"{lead:.5g} {parts}"


def gcd_approximate(polys: PolySet, variant: str = "stacked",
                    config: PenaltyConfig | None = None,
                    cluster_tol: float = 1e-3) -> GcdResult:
    """Approximate common divisor via generalized Sylvester rank reduction.

    All polynomials must share one degree n.  The rank target encodes
    the divisor degree d: 2n - d for the stacked arrangement and
    q*n - d for the extended one (q polynomials).  Common roots are
    recovered by clustering the estimated polynomials' roots; a missing
    cluster is reported as an unsuccessful divisor search, not an error.
    """
    degrees = polys.degrees
    n = degrees[0]
    if any(d != n for d in degrees):
        raise ValueError("polynomials must share one degree")
    d = polys.divisor_degree
    if d > n:
        raise ValueError("divisor degree cannot exceed the polynomial degree")
    q = len(polys.coefficients)
    spec = build_generalized_sylvester(degrees, variant)
    if variant == "stacked":
        r = 2 * n - d
    else:
        r = q * n - d
    p = np.concatenate(polys.coefficients)
    factors, report = solve(spec, identity_weights(spec.num_params), p, r, config)

    split = np.cumsum([c.size for c in polys.coefficients])[:-1]
    coeff_hat = [np.asarray(c) for c in np.split(report.p_hat, split)]
    all_roots = [np.roots(c[::-1]) for c in coeff_hat]
    roots = _root_clusters(all_roots, d, cluster_tol)
    diff = p - report.p_hat
    return GcdResult(
        p_hat=report.p_hat,
        coefficients=coeff_hat,
        common_roots=roots,
        factored=[_factored_display(c) for c in coeff_hat],
        divisor_found=len(roots) == d,
        coefficient_error=float(diff @ diff),
        report=report,
        factors=factors,
    )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """One sample per line; ``?`` marks a missing sample.

    Returns the values (NaN at missing positions) and the missing mask.
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
            else:
                try:
                    values.append(float(token))
                except ValueError as exc:
                    raise ValueError(f"line {pos + 1} of {path!s}: bad number {token!r}") from exc
                missing.append(False)
    if not values:
        raise ValueError(f"{path!s}: empty trajectory file")
    return np.asarray(values), np.asarray(missing, dtype=bool)


def write_trajectories_csv(path, y: np.ndarray, y_hat: np.ndarray,
                           y0: np.ndarray | None = None,
                           missing: np.ndarray | None = None) -> None:
    """Table of time index, data, optional truth and estimate."""
    T = len(y_hat)
    with open(path, "w", encoding="utf-8") as fh:
        header = "t,y" + (",y0" if y0 is not None else "") + ",y_hat\n"
        fh.write(header)
        for t in range(T):
            if missing is not None and missing[t]:
                data = "?"
            else:
                data = format(float(y[t]), ".17g")
            row = [str(t + 1), data]
            if y0 is not None:
                row.append(format(float(y0[t]), ".17g"))
            row.append(format(float(y_hat[t]), ".17g"))
            fh.write(",".join(row) + "\n")


def read_polynomials_csv(path) -> list[np.ndarray]:
    """One polynomial per line, ascending coefficients, comma separated."""
    polys: list[np.ndarray] = []
    with open(path, "r", encoding="utf-8") as fh:
        for pos, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                polys.append(np.asarray([float(tok) for tok in line.split(",")]))
            except ValueError as exc:
                raise ValueError(f"line {pos + 1} of {path!s}: bad coefficient") from exc
    if not polys:
        raise ValueError(f"{path!s}: empty polynomial file")
    return polys
