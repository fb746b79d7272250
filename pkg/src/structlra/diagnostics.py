"""Constraint and first-order optimality diagnostics for factor pairs.

The structure requirement on a product P L is a set of m*n linear-in-
each-factor constraints (the off-structure residual must vanish).  This
module exposes that residual in both its full and reduced forms, the
constraint Jacobians with their numerical ranks, the arithmetic
necessary condition for independent constraint gradients, and a
stationarity classification of an iterate.

Dense Jacobians are analysis tools, not solver machinery; their
assembly is guarded to small problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import Factors
from .structure import (
    StructureSpec,
    complement_basis,
    complement_matrix,
    extract_params,
    off_structure,
)
from .weighting import WeightSpec

__all__ = [
    "ConstraintDiagnostics",
    "RegularityReport",
    "StationarityReport",
    "constraint_vector",
    "constraint_jacobians",
    "constraint_diagnostics",
    "regularity_check",
    "stationarity_report",
]

_DENSE_CELL_LIMIT = 10_000
_FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class ConstraintDiagnostics:
    """Residuals, Jacobian ranks and multiplier estimate at one iterate."""

    c: np.ndarray
    c_tilde: np.ndarray
    jac_rank: int
    jac_tilde_rank: int
    regularity_necessary: bool
    rank_P: int
    rank_L: int
    nu_estimate: np.ndarray


@dataclass(frozen=True)
class RegularityReport:
    """Arithmetic check of the independent-constraint-gradients condition.

    ``lhs`` is the number of reduced constraints (m*n - num_params),
    ``rhs`` the maximal Jacobian rank the factor pair allows
    (m*r + n*r - r**2); independence requires ``lhs <= rhs``.
    """

    lhs: int
    rhs: int
    holds: bool
    jac_tilde_rank: int | None = None
    full_gradient_rank_regime: bool | None = None


@dataclass(frozen=True)
class StationarityReport:
    """First-order classification of an iterate."""

    c_norm: float
    gradient_norm: float
    nu_estimate: np.ndarray
    classification: str


def constraint_vector(spec: StructureSpec, factors: Factors) -> tuple[np.ndarray, np.ndarray]:
    """Full and reduced structure residuals of the product P L.

    Both carry the same 2-norm; the reduced form has
    m*n - num_params entries (coordinates in the orthonormal complement
    basis of the structure span).
    """
    PL = factors.product()
    c = off_structure(spec, PL)
    basis = complement_basis(spec)
    c_tilde = basis.apply(PL) - basis.shift
    return c, c_tilde


def constraint_jacobians(
    spec: StructureSpec, factors: Factors
) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    """Dense constraint Jacobians and their numerical ranks.

    Column order: the m*r entries of P (column-major), then the n*r
    entries of L (column-major).
    """
    m, n = spec.shape
    if m * n > _DENSE_CELL_LIMIT:
        raise ValueError(
            f"dense Jacobians are limited to {_DENSE_CELL_LIMIT} cells, got {m * n}"
        )
    P, L = factors.P, factors.L
    G = np.hstack([np.kron(L.T, np.eye(m)), np.kron(np.eye(n), P)])
    jac_full = G - _span_projection_columns(spec, G)
    jac_tilde = complement_matrix(spec) @ G
    return jac_full, jac_tilde, (_numerical_rank(jac_full), _numerical_rank(jac_tilde))


def _span_projection_columns(spec: StructureSpec, G: np.ndarray) -> np.ndarray:
    """Projection onto the structure span applied to each column of G."""
    m, n = spec.shape
    out = np.empty_like(G)
    for col in range(G.shape[1]):
        X = G[:, col].reshape((m, n), order="F")
        means = extract_params(spec, X)
        proj = np.zeros((m, n))
        mask = spec.param_index >= 0
        proj[mask] = means[spec.param_index[mask]]
        out[:, col] = proj.ravel(order="F")
    return out


def _numerical_rank(A: np.ndarray) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > max(A.shape) * s[0] * 1e-12))


def constraint_diagnostics(spec: StructureSpec, factors: Factors,
                           lam: float) -> ConstraintDiagnostics:
    """Assemble the full diagnostics bundle at one iterate."""
    c, c_tilde = constraint_vector(spec, factors)
    _, _, (jac_rank, jac_tilde_rank) = constraint_jacobians(spec, factors)
    m, n = spec.shape
    r = factors.rank_bound
    return ConstraintDiagnostics(
        c=c,
        c_tilde=c_tilde,
        jac_rank=jac_rank,
        jac_tilde_rank=jac_tilde_rank,
        regularity_necessary=m * n - spec.num_params <= m * r + n * r - r * r,
        rank_P=_numerical_rank(factors.P),
        rank_L=_numerical_rank(factors.L),
        nu_estimate=-lam * c,
    )


def regularity_check(spec: StructureSpec, r: int,
                     diagnostics: ConstraintDiagnostics | None = None) -> RegularityReport:
    """Necessary condition for linearly independent constraint gradients.

    Reports both sides of ``m*n - num_params <= m*r + n*r - r**2`` in
    exact integer arithmetic.  When diagnostics are supplied, also flags
    whether the reduced Jacobian attained the maximal rank the factors
    allow.
    """
    m, n = spec.shape
    lhs = m * n - spec.num_params
    rhs = m * r + n * r - r * r
    jac_tilde_rank = None
    regime = None
    if diagnostics is not None:
        jac_tilde_rank = diagnostics.jac_tilde_rank
        regime = bool(jac_tilde_rank == rhs)
    return RegularityReport(lhs, rhs, lhs <= rhs, jac_tilde_rank, regime)


def stationarity_report(spec: StructureSpec, weights: WeightSpec, p: np.ndarray,
                        factors: Factors, lam: float) -> StationarityReport:
    """Classify an iterate as feasible, infeasible-stationary or neither.

    The gradient is that of the squared residual norm with respect to
    both factors; it has the closed form (2 C L', 2 P' C) with C the
    residual reshaped to matrix form, so no dense Jacobian is needed.
    """
    P, L = factors.P, factors.L
    m, n = spec.shape
    c = off_structure(spec, factors.product())
    C = c.reshape((m, n), order="F")
    grad_P = 2.0 * C @ L.T
    grad_L = 2.0 * P.T @ C
    grad_norm = float(np.sqrt(np.sum(grad_P**2) + np.sum(grad_L**2)))
    c_norm = float(np.linalg.norm(c))

    pl_norm = float(np.linalg.norm(factors.product()))
    factor_scale = max(np.linalg.norm(P), np.linalg.norm(L), 1.0)
    if c_norm <= _FEASIBILITY_TOL * max(pl_norm, 1.0):
        label = "feasible"
    elif grad_norm <= _FEASIBILITY_TOL * max(1.0, c_norm * factor_scale):
        label = "infeasible-stationary"
    else:
        label = "neither"
    return StationarityReport(c_norm, grad_norm, -lam * c, label)
