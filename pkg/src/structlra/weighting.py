"""Parameter-space weights for the approximation objective.

Weights act on the parameter vector, not on the matrix: the quadratic
form ``x -> x' W x`` measures the misfit between observed and estimated
parameters.  Diagonal weights cover the common cases (plain 2-norm,
Frobenius matching via occurrence counts, missing data via zeros); a
full symmetric positive semidefinite matrix is also accepted.

Objects are immutable and the square-root factor is computed once at
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .structure import StructureSpec, occurrence_counts

__all__ = [
    "WeightSpec",
    "diagonal_weights",
    "identity_weights",
    "frobenius_weights",
    "full_weights",
    "with_missing",
    "factor",
    "weighted_norm_sq",
]

_PSD_TOL = 1e-10


@dataclass(frozen=True)
class WeightSpec:
    """Weight matrix on parameter space with its cached square-root factor.

    ``kind`` is "diagonal" (``data`` is the nonnegative diagonal) or
    "full" (``data`` is symmetric positive semidefinite).
    ``factor_matrix`` satisfies factor' factor == data (as a matrix);
    ``missing_mask`` marks parameters whose weight is structurally zero.
    """

    kind: str
    data: np.ndarray
    factor_matrix: np.ndarray
    missing_mask: np.ndarray

    @property
    def num_params(self) -> int:
        return self.data.shape[0]

    def apply_factor(self, x: np.ndarray) -> np.ndarray:
        """Square-root factor times a vector or matrix of stacked rows."""
        if self.kind == "diagonal":
            if x.ndim == 1:
                return self.factor_matrix * x
            return self.factor_matrix[:, None] * x
        return self.factor_matrix @ x


def diagonal_weights(d: np.ndarray, missing_mask: np.ndarray | None = None) -> WeightSpec:
    """Diagonal weights from a nonnegative vector."""
    d = np.asarray(d, dtype=float).copy()
    if d.ndim != 1:
        raise ValueError("diagonal weights must form a 1-d vector")
    if np.any(d < 0):
        raise ValueError("diagonal weights must be nonnegative")
    if missing_mask is None:
        missing_mask = np.zeros(d.size, dtype=bool)
    else:
        missing_mask = np.asarray(missing_mask, dtype=bool).copy()
        if missing_mask.shape != d.shape:
            raise ValueError("missing mask length does not match the weight vector")
        d[missing_mask] = 0.0
    d.setflags(write=False)
    missing_mask.setflags(write=False)
    fac = np.sqrt(d)
    fac.setflags(write=False)
    return WeightSpec("diagonal", d, fac, missing_mask)


def identity_weights(num_params: int) -> WeightSpec:
    """Plain 2-norm weights."""
    return diagonal_weights(np.ones(num_params))


def frobenius_weights(spec: StructureSpec) -> WeightSpec:
    """Diagonal weights equal to each parameter's occurrence count.

    With these weights the parameter misfit equals the squared Frobenius
    distance between the corresponding structured matrices.
    """
    return diagonal_weights(occurrence_counts(spec).astype(float))


def full_weights(W: np.ndarray) -> WeightSpec:
    """Full symmetric positive semidefinite weights.

    The factor is the symmetric square root; eigenvalues below the
    relative tolerance are clamped to zero, genuinely negative ones
    raise.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("full weights must form a square matrix")
    if not np.allclose(W, W.T, atol=_PSD_TOL * (1.0 + np.linalg.norm(W))):
        raise ValueError("full weights must be symmetric")
    W = 0.5 * (W + W.T)
    vals, vecs = np.linalg.eigh(W)
    scale = max(np.abs(vals).max(), 1.0) if vals.size else 1.0
    if vals.min() < -_PSD_TOL * scale:
        raise ValueError("full weights must be positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    fac = (vecs * np.sqrt(vals)) @ vecs.T
    W.setflags(write=False)
    fac.setflags(write=False)
    mask = np.zeros(W.shape[0], dtype=bool)
    mask.setflags(write=False)
    return WeightSpec("full", W, fac, mask)


def with_missing(weights: WeightSpec, mask: np.ndarray) -> WeightSpec:
    """Diagonal weights with the masked entries zeroed out."""
    if weights.kind != "diagonal":
        raise ValueError("missing-data masks are only supported with diagonal weights")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (weights.num_params,):
        raise ValueError(
            f"missing mask has length {mask.size}, expected {weights.num_params}"
        )
    return diagonal_weights(weights.data, missing_mask=mask)


def factor(weights: WeightSpec) -> np.ndarray:
    """Square-root factor of the weight matrix.

    1-d (the diagonal of the factor) for diagonal weights, 2-d for full
    weights.
    """
    return weights.factor_matrix


def weighted_norm_sq(weights: WeightSpec, x: np.ndarray) -> float:
    """Quadratic form x' W x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (weights.num_params,):
        raise ValueError(f"vector has length {x.size}, expected {weights.num_params}")
    fx = weights.apply_factor(x)
    return float(fx @ fx)
