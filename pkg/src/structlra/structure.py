"""Affine matrix structures built from disjoint cell patterns.

A structure describes a family of m-by-n matrices in which every cell
either copies one entry of a parameter vector or holds a fixed constant
(Hankel, Toeplitz, Sylvester-type, banded, or fully unstructured
patterns all fit this description).  Because the cells owned by
different parameters are disjoint, orthogonal projection onto the
family reduces to per-parameter averaging, which keeps every operation
in this module O(m*n).

All objects are immutable after construction and all operations are
pure functions, so they are safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StructureSpec",
    "build_hankel",
    "build_generalized_sylvester",
    "build_unstructured",
    "load_structure",
    "save_structure",
    "validate",
    "evaluate",
    "extract_params",
    "project",
    "off_structure",
    "occurrence_counts",
    "ComplementBasis",
    "complement_basis",
    "complement_matrix",
]


@dataclass(frozen=True, eq=False)
class StructureSpec:
    """Cell pattern of an affine family of m-by-n matrices.

    ``param_index[i, j] == k`` (``k >= 0``) marks the cell as a copy of
    parameter ``k``; ``param_index[i, j] == -1`` marks it as the fixed
    constant ``fixed_values[i, j]``.  A cell is never both.
    """

    param_index: np.ndarray
    fixed_values: np.ndarray
    num_params: int

    def __post_init__(self) -> None:
        pi = np.array(self.param_index, dtype=int)
        fv = np.array(self.fixed_values, dtype=float)
        if pi.ndim != 2:
            raise ValueError("param_index must be a 2-d array")
        if fv.shape != pi.shape:
            raise ValueError(
                f"fixed_values shape {fv.shape} does not match param_index shape {pi.shape}"
            )
        m, n = pi.shape
        if self.num_params < 1:
            raise ValueError("num_params must be at least 1")
        if self.num_params > m * n:
            raise ValueError(
                f"num_params={self.num_params} exceeds the cell count {m * n}"
            )
        if pi.min() < -1 or pi.max() >= self.num_params:
            raise ValueError("param_index entries must lie in {-1, 0, ..., num_params-1}")
        # a parameter cell carries no constant offset
        fv[pi >= 0] = 0.0
        pi.setflags(write=False)
        fv.setflags(write=False)
        object.__setattr__(self, "param_index", pi)
        object.__setattr__(self, "fixed_values", fv)

    @property
    def shape(self) -> tuple[int, int]:
        return self.param_index.shape

    @property
    def rows(self) -> int:
        return self.param_index.shape[0]

    @property
    def cols(self) -> int:
        return self.param_index.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StructureSpec):
            return NotImplemented
        return (
            self.num_params == other.num_params
            and np.array_equal(self.param_index, other.param_index)
            and np.array_equal(self.fixed_values, other.fixed_values)
        )


def build_hankel(m: int, total: int) -> StructureSpec:
    """Hankel pattern with ``m`` rows over a length-``total`` sequence.

    The result is an m-by-(total-m+1) structure whose anti-diagonals all
    copy the same parameter, so ``num_params == total``.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if m > total:
        raise ValueError(f"window m={m} exceeds the sequence length {total}")
    n = total - m + 1
    idx = np.arange(m)[:, None] + np.arange(n)[None, :]
    return StructureSpec(idx, np.zeros((m, n)), total)


def build_unstructured(m: int, n: int) -> StructureSpec:
    """Pattern in which every cell is its own parameter (column-major order)."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    idx = np.arange(m * n).reshape((m, n), order="F")
    return StructureSpec(idx, np.zeros((m, n)), m * n)


def _place_band(pi: np.ndarray, row0: int, col0: int, shifts: int,
                degree: int, offset: int) -> None:
    # banded multiplication block: shift row u carries coefficients at columns u..u+degree
    for u in range(shifts):
        for j in range(degree + 1):
            pi[row0 + u, col0 + u + j] = offset + j


def build_generalized_sylvester(coeff_degrees: list[int], variant: str) -> StructureSpec:
    """Generalized Sylvester pattern for a set of polynomials.

    ``coeff_degrees`` lists the degree of each polynomial; the parameters
    are the ascending coefficients of the polynomials, concatenated.

    ``variant="stacked"`` stacks one banded multiplication block per
    polynomial on top of each other; for q polynomials of equal degree n
    the result is (q*n)-by-(2n).  ``variant="extended"`` places the
    blocks of polynomials 2..q side by side in the first block row, with
    the first polynomial's block repeated on the diagonal below; for
    three polynomials of equal degree n the result is (3n)-by-(4n).
    Cells outside the bands are fixed zeros.
    """
    degrees = [int(d) for d in coeff_degrees]
    if len(degrees) < 2:
        raise ValueError("need at least two polynomials")
    if any(d < 1 for d in degrees):
        raise ValueError("polynomial degrees must be at least 1")
    offsets = np.concatenate(([0], np.cumsum([d + 1 for d in degrees])))
    num_params = int(offsets[-1])

    if variant == "stacked":
        width = max(degrees) + min(degrees)
        shifts = [width - d for d in degrees]
        rows = sum(shifts)
        pi = -np.ones((rows, width), dtype=int)
        row0 = 0
        for q, d in enumerate(degrees):
            _place_band(pi, row0, 0, shifts[q], d, int(offsets[q]))
            row0 += shifts[q]
    elif variant == "extended":
        d0 = degrees[0]
        widths = [d0 + d for d in degrees[1:]]
        rows = d0 + sum(degrees[1:])
        pi = -np.ones((rows, sum(widths)), dtype=int)
        col0 = 0
        row0 = d0
        for q, d in enumerate(degrees[1:], start=1):
            _place_band(pi, 0, col0, d0, d, int(offsets[q]))
            _place_band(pi, row0, col0, d, d0, int(offsets[0]))
            col0 += widths[q - 1]
            row0 += d
    else:
        raise ValueError("variant must be 'stacked' or 'extended'")
    return StructureSpec(pi, np.zeros(pi.shape), num_params)


def load_structure(document: dict) -> StructureSpec:
    """Build a structure from its JSON-style document form.

    Cells absent from ``entries`` default to fixed zeros.  Raises
    ``ValueError`` on malformed documents, out-of-range indices and
    duplicate cell assignments.
    """
    if not isinstance(document, dict):
        raise ValueError("structure document must be a JSON object")
    try:
        m = int(document["m"])
        n = int(document["n"])
        num_params = int(document["num_params"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError("structure document needs integer fields m, n, num_params") from exc
    if m < 1 or n < 1:
        raise ValueError("fields m and n must be positive")
    entries = document.get("entries", [])
    if not isinstance(entries, list):
        raise ValueError("field entries must be a list")

    pi = -np.ones((m, n), dtype=int)
    fv = np.zeros((m, n))
    seen: set[tuple[int, int]] = set()
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ValueError(f"entries[{pos}] must be an object")
        try:
            row = int(entry["row"])
            col = int(entry["col"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"entries[{pos}] needs integer fields row, col") from exc
        if not (0 <= row < m and 0 <= col < n):
            raise ValueError(f"entries[{pos}] cell ({row}, {col}) is out of range")
        if (row, col) in seen:
            raise ValueError(f"duplicate entry for cell ({row}, {col})")
        seen.add((row, col))
        has_param = "param" in entry
        has_fixed = "fixed" in entry
        if has_param == has_fixed:
            raise ValueError(f"entries[{pos}] needs exactly one of 'param' or 'fixed'")
        if has_param:
            k = int(entry["param"])
            if not (0 <= k < num_params):
                raise ValueError(
                    f"entries[{pos}].param={k} is out of range for num_params={num_params}"
                )
            pi[row, col] = k
        else:
            fv[row, col] = float(entry["fixed"])
    return StructureSpec(pi, fv, num_params)


def save_structure(spec: StructureSpec) -> dict:
    """Document form of a structure; inverse of :func:`load_structure`.

    Fixed zero cells are left implicit.
    """
    entries = []
    m, n = spec.shape
    for i in range(m):
        for j in range(n):
            k = int(spec.param_index[i, j])
            if k >= 0:
                entries.append({"row": i, "col": j, "param": k})
            elif spec.fixed_values[i, j] != 0.0:
                entries.append({"row": i, "col": j, "fixed": float(spec.fixed_values[i, j])})
    return {"m": m, "n": n, "num_params": spec.num_params, "entries": entries}


def validate(spec: StructureSpec) -> list[str]:
    """Diagnostic check; returns a list of violations (empty means ok).

    The only violation representable after construction is a parameter
    index that no cell uses, which makes the parameterization
    non-minimal.
    """
    counts = occurrence_counts(spec)
    return [f"parameter {k} unused" for k in np.nonzero(counts == 0)[0]]


def evaluate(spec: StructureSpec, p: np.ndarray) -> np.ndarray:
    """Matrix of the family at parameter vector ``p``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (spec.num_params,):
        raise ValueError(
            f"parameter vector has length {p.size}, expected {spec.num_params}"
        )
    out = spec.fixed_values.copy()
    mask = spec.param_index >= 0
    out[mask] = p[spec.param_index[mask]]
    return out


def occurrence_counts(spec: StructureSpec) -> np.ndarray:
    """Number of cells owned by each parameter."""
    mask = spec.param_index >= 0
    return np.bincount(spec.param_index[mask], minlength=spec.num_params)


def extract_params(spec: StructureSpec, X: np.ndarray) -> np.ndarray:
    """Parameter vector of the member closest to ``X``.

    Averages ``X`` over the cells owned by each parameter; fixed cells
    are ignored.  A parameter with no cells maps to 0.
    """
    X = _check_matrix(spec, X)
    mask = spec.param_index >= 0
    sums = np.bincount(
        spec.param_index[mask], weights=X[mask], minlength=spec.num_params
    )
    counts = occurrence_counts(spec)
    out = np.zeros(spec.num_params)
    np.divide(sums, counts, out=out, where=counts > 0)
    return out


def project(spec: StructureSpec, X: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``X`` onto the structured family."""
    return evaluate(spec, extract_params(spec, X))


def off_structure(spec: StructureSpec, X: np.ndarray) -> np.ndarray:
    """Component of ``X`` orthogonal to the structured family.

    Returned as a length m*n vector in column-major order.
    """
    X = _check_matrix(spec, X)
    return np.ravel(X - project(spec, X), order="F")


def _check_matrix(spec: StructureSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != spec.shape:
        raise ValueError(f"matrix has shape {X.shape}, expected {spec.shape}")
    return X


@dataclass(frozen=True)
class ComplementBasis:
    """Sparse rows of an orthonormal basis for the complement of the span.

    The basis has ``num_rows == m*n - num_params`` rows (for a structure
    with every parameter used): per parameter group of size t it carries
    t-1 Helmert-style mean-zero rows supported on the group's cells, and
    per fixed cell a single indicator row.  ``shift`` is the basis
    applied to the matrix of fixed values.

    Entry layout: contribution ``e`` adds ``weight[e]`` times cell
    ``(cell_row[e], cell_col[e])`` into basis row ``row[e]``.
    """

    num_rows: int
    row: np.ndarray
    cell_row: np.ndarray
    cell_col: np.ndarray
    weight: np.ndarray
    shift: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Basis applied to ``X`` (without subtracting ``shift``)."""
        out = np.zeros(self.num_rows)
        np.add.at(out, self.row, self.weight * X[self.cell_row, self.cell_col])
        return out


def complement_basis(spec: StructureSpec) -> ComplementBasis:
    """Orthonormal complement rows for a structure (column-major cell order)."""
    n_p = spec.num_params
    groups: list[list[tuple[int, int]]] = [[] for _ in range(n_p)]
    fixed_cells: list[tuple[int, int]] = []
    m, n = spec.shape
    for j in range(n):
        for i in range(m):
            k = spec.param_index[i, j]
            if k >= 0:
                groups[k].append((i, j))
            else:
                fixed_cells.append((i, j))

    rows: list[int] = []
    ci: list[int] = []
    cj: list[int] = []
    ww: list[float] = []
    shift: list[float] = []
    r = 0
    for cells in groups:
        for u in range(1, len(cells)):
            denom = np.sqrt(u * (u + 1.0))
            for a in range(u):
                rows.append(r)
                ci.append(cells[a][0])
                cj.append(cells[a][1])
                ww.append(1.0 / denom)
            rows.append(r)
            ci.append(cells[u][0])
            cj.append(cells[u][1])
            ww.append(-u / denom)
            shift.append(0.0)
            r += 1
    for i, j in fixed_cells:
        rows.append(r)
        ci.append(i)
        cj.append(j)
        ww.append(1.0)
        shift.append(float(spec.fixed_values[i, j]))
        r += 1

    return ComplementBasis(
        num_rows=r,
        row=np.asarray(rows, dtype=int),
        cell_row=np.asarray(ci, dtype=int),
        cell_col=np.asarray(cj, dtype=int),
        weight=np.asarray(ww, dtype=float),
        shift=np.asarray(shift, dtype=float),
    )


def complement_matrix(spec: StructureSpec) -> np.ndarray:
    """Dense complement basis, shape (m*n - num_params, m*n), vec column-major."""
    basis = complement_basis(spec)
    m, _ = spec.shape
    out = np.zeros((basis.num_rows, spec.rows * spec.cols))
    out[basis.row, basis.cell_col * m + basis.cell_row] = basis.weight
    return out
