"""Numeric ILU(k) over a fixed fill pattern, and substitution solves.

The arithmetic order is fixed: row ``j`` is reduced by its pivot rows in
ascending order, and the multiplier ``f_ji / u_ii`` is formed at the moment
pivot ``i`` is applied.  Every execution path (sequential or banded, any
worker count) goes through :func:`numeric_band`, so the floating-point
result is a function of ``(A, pattern)`` alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .sparse import CSRMatrix
from .symbolic import FillPattern

__all__ = [
    "FilledMatrix",
    "FpaCounter",
    "ZeroPivotError",
    "PivotPolicy",
    "numeric_factor",
    "triangular_solve",
]


class ZeroPivotError(ArithmeticError):
    """A pivot ``u_ii`` vanished during numeric factorization."""

    def __init__(self, row: int, value: float = 0.0):
        self.row = row
        self.value = value
        super().__init__(
            f"zero pivot at row {row} (|u_ii| = {abs(value):.3g}); "
            "retry with a larger level limit k or enable pivot perturbation"
        )


@dataclass(frozen=True)
class PivotPolicy:
    """``|u_ii| < tol`` is a breakdown unless ``perturb`` is set, in which
    case the pivot is replaced by ``eps * max|a_i*|`` (sign preserved)."""

    tol: float = 1e-300
    perturb: bool = False
    eps: float = 1e-8


@dataclass
class FpaCounter:
    """Multiplies and divides spent on preconditioning, split by phase.

    ``factor_div`` is the share of ``factor`` that are divides (one per
    multiplier); the rest are multiplies, each paired with a subtraction.
    ``factor_flops`` counts those subtractions too.
    """

    factor: int = 0
    linv: int = 0
    uinv: int = 0
    factor_div: int = 0

    @property
    def total(self) -> int:
        return self.factor + self.linv + self.uinv

    @property
    def factor_flops(self) -> int:
        return 2 * self.factor - self.factor_div


@dataclass(frozen=True, eq=False)
class FilledMatrix:
    """L and U stored together on the fill pattern.

    Strictly-lower entries are L (whose unit diagonal is implicit); the
    diagonal and upper entries are U.
    """

    n: int
    k: int
    indptr: np.ndarray
    indices: np.ndarray
    levels: np.ndarray
    values: np.ndarray
    diag: np.ndarray = field(repr=False)

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def pattern(self) -> FillPattern:
        return FillPattern(self.n, self.k, self.indptr, self.indices, self.levels)

    def lu_dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(L, U)``; for tests and small problems."""
        full = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        full[rows, self.indices] = self.values
        lower = np.tril(full, -1) + np.eye(self.n)
        return lower, np.triu(full)

    def __eq__(self, other):
        if not isinstance(other, FilledMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.levels, other.levels)
            and np.array_equal(self.values.view(np.int64), other.values.view(np.int64))
        )

    __hash__ = None


# --------------------------------------------------------------------------
# kernels


@njit(nogil=True, cache=True)
def scatter_values(a_ptr, a_idx, a_val, ptr, idx, r0, r1, out):
    """Copy A's values into the pattern slots of rows ``[r0, r1)``."""
    for j in range(r0, r1):
        q = ptr[j]
        for p in range(a_ptr[j], a_ptr[j + 1]):
            c = a_idx[p]
            while idx[q] < c:
                out[q] = 0.0
                q += 1
            out[q] = a_val[p]
            q += 1
        while q < ptr[j + 1]:
            out[q] = 0.0
            q += 1


@njit(nogil=True, cache=True)
def row_scale(a_ptr, a_val):
    n = len(a_ptr) - 1
    out = np.empty(n)
    for j in range(n):
        m = 0.0
        for p in range(a_ptr[j], a_ptr[j + 1]):
            v = abs(a_val[p])
            if v > m:
                m = v
        out[j] = m if m > 0.0 else 1.0
    return out


@njit(nogil=True, cache=True)
def _fix_pivot(val, dp, j, tol, perturb, eps, scale):
    u = val[dp]
    if abs(u) < tol or not np.isfinite(u):
        if not perturb or not np.isfinite(u):
            return False
        s = eps * scale[j]
        val[dp] = -s if u < 0.0 else s
    return True


@njit(nogil=True, cache=True)
def numeric_band(ptr, idx, val, diag, r0, r1, lo, hi, complete,
                 tol, perturb, eps, scale, where):
    """Reduce rows ``[r0, r1)`` in place.

    Partial mode applies pivots ``lo <= i < hi``; complete mode applies
    ``lo <= i < j`` to each row in turn and validates its pivot.  ``where``
    is caller-owned scratch (length n, all -1).  Returns ``(fpa, bad_row)``
    with ``bad_row = -1`` on success.
    """
    fpa = 0
    for j in range(r0, r1):
        for p in range(ptr[j], ptr[j + 1]):
            where[idx[p]] = p
        ub = j if complete else hi
        p = ptr[j]
        while idx[p] < lo:
            p += 1
        while idx[p] < ub:
            i = idx[p]
            l = val[p] / val[diag[i]]
            val[p] = l
            fpa += 1
            for q in range(diag[i] + 1, ptr[i + 1]):
                s = where[idx[q]]
                if s >= 0:
                    val[s] -= l * val[q]
                    fpa += 1
            p += 1
        for p in range(ptr[j], ptr[j + 1]):
            where[idx[p]] = -1
        if complete and not _fix_pivot(val, diag[j], j, tol, perturb, eps, scale):
            return fpa, j
    return fpa, -1


@njit(nogil=True, cache=True)
def _lu_solve(ptr, idx, val, diag, b):
    n = len(b)
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for p in range(ptr[i], diag[i]):
            s -= val[p] * y[idx[p]]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        for p in range(diag[i] + 1, ptr[i + 1]):
            s -= val[p] * y[idx[p]]
        y[i] = s / val[diag[i]]
    return y


# --------------------------------------------------------------------------


def count_lower(pattern: FillPattern) -> int:
    """Strictly-lower entries, i.e. the multipliers formed by a factorization."""
    return int((pattern.diag - pattern.indptr[:-1]).sum())


def prepare_values(a: CSRMatrix, pattern: FillPattern) -> np.ndarray:
    vals = np.empty(pattern.nnz)
    scatter_values(a.indptr, a.indices, a.data, pattern.indptr, pattern.indices, 0, a.n, vals)
    return vals


def numeric_factor(a: CSRMatrix, pattern: FillPattern,
                   pivot: PivotPolicy = PivotPolicy()) -> tuple[FilledMatrix, FpaCounter]:
    """Compute L and U values on ``pattern``; raises :class:`ZeroPivotError`."""
    if pattern.n != a.n:
        raise ValueError("pattern does not match matrix dimension")
    vals = prepare_values(a, pattern)
    diag = pattern.diag
    scale = row_scale(a.indptr, a.data)
    where = np.full(a.n, -1, np.int64)
    fpa, bad = numeric_band(pattern.indptr, pattern.indices, vals, diag, 0, a.n, 0, 0, True,
                            pivot.tol, pivot.perturb, pivot.eps, scale, where)
    if bad >= 0:
        raise ZeroPivotError(int(bad), float(vals[diag[bad]]))
    f = FilledMatrix(a.n, pattern.k, pattern.indptr, pattern.indices, pattern.levels, vals, diag)
    return f, FpaCounter(factor=int(fpa), factor_div=count_lower(pattern))


def triangular_solve(f: FilledMatrix, b) -> np.ndarray:
    """Solve ``L U y = b`` by forward then backward substitution."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (f.n,):
        raise ValueError("dimension mismatch")
    return _lu_solve(f.indptr, f.indices, f.values, f.diag, b)
