"""Incomplete inverses of the ILU factors.

While row ``i`` is reduced by pivot ``h`` with multiplier ``l_ih``, the
already-reduced lower part of row ``h`` is folded into row ``i`` as well::

    beta_it -= l_ih * beta_ht        (t < h, position (i, t) in the pattern)

so that once row ``i`` is complete ``beta_it = l_it - sum_{t<h<i} l_ih beta_ht``
and the unit-lower inverse is ``I - beta``.  The upper factor is handled by
the mirrored recurrence, rows bottom-up and pivots right to left, on the
row-scaled factor ``D^-1 U``::

    gamma_it -= (u_ih / u_ii) * gamma_ht      (t > h)

giving ``U^-1 = (I - gamma) D^-1``.  Both recurrences only touch positions
already in the fill pattern, which is what truncates the inverses.  At full
level they reproduce the exact triangular inverses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .numeric import FilledMatrix, FpaCounter, PivotPolicy, _fix_pivot
from .sparse import CSRMatrix, spmv
from .symbolic import FillPattern

__all__ = ["IncompleteInversePair", "factor_with_inverse", "apply_iilu"]


@dataclass(frozen=True, eq=False)
class IncompleteInversePair:
    """Truncated ``L^-1`` (unit diagonal stored) and ``U^-1`` as CSR."""

    linv: CSRMatrix
    uinv: CSRMatrix

    @property
    def n(self) -> int:
        return self.linv.n

    def __eq__(self, other):
        if not isinstance(other, IncompleteInversePair):
            return NotImplemented
        return self.linv == other.linv and self.uinv == other.uinv

    __hash__ = None

    @classmethod
    def identity(cls, n: int) -> "IncompleteInversePair":
        return cls(CSRMatrix.identity(n), CSRMatrix.identity(n))


@njit(nogil=True, cache=True)
def numeric_inv_band(ptr, idx, val, beta, diag, r0, r1, lo, hi, complete,
                     tol, perturb, eps, scale, where):
    """:func:`numeric_band` plus the lower-inverse side effect.

    ``val`` receives exactly the same arithmetic as the plain kernel; the
    inverse accumulates in ``beta`` (lower positions only).  Returns
    ``(fpa_factor, fpa_linv, bad_row)``.
    """
    fpa = 0
    fpa_inv = 0
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
            # position (j, i) gets no further direct update, only the
            # side effect of later pivots h > i
            beta[p] = l
            for q in range(ptr[i], diag[i]):
                s = where[idx[q]]
                if s >= 0:
                    beta[s] -= l * beta[q]
                    fpa_inv += 1
            p += 1
        for p in range(ptr[j], ptr[j + 1]):
            where[idx[p]] = -1
        if complete and not _fix_pivot(val, diag[j], j, tol, perturb, eps, scale):
            return fpa, fpa_inv, j
    return fpa, fpa_inv, -1


@njit(nogil=True, cache=True)
def uinv_band(ptr, idx, diag, uhat, gamma, r0, r1, lo, hi, complete, where):
    """Upper-inverse recurrence for rows ``[r0, r1)``, processed bottom-up.

    Pivots ``h`` run right to left.  Partial mode applies ``lo <= h < hi``
    (all at or below ``r1``); complete mode applies ``j < h < hi``.
    Returns the multiply count.
    """
    fpa = 0
    for j in range(r1 - 1, r0 - 1, -1):
        d = diag[j]
        e = ptr[j + 1]
        for p in range(d + 1, e):
            where[idx[p]] = p
        lb = j + 1 if complete else lo
        for p in range(e - 1, d, -1):
            h = idx[p]
            if h >= hi:
                continue
            if h < lb:
                break
            m = uhat[p]
            for q in range(diag[h] + 1, ptr[h + 1]):
                s = where[idx[q]]
                if s >= 0:
                    gamma[s] -= m * gamma[q]
                    fpa += 1
        for p in range(d + 1, e):
            where[idx[p]] = -1
    return fpa


def scaled_upper(f: FilledMatrix) -> tuple[np.ndarray, int]:
    """``u_ij / u_ii`` on strictly-upper positions (zero elsewhere)."""
    rows = np.repeat(np.arange(f.n), np.diff(f.indptr))
    upper = f.indices > rows
    uhat = np.zeros(f.nnz)
    uhat[upper] = f.values[upper] / f.values[f.diag[rows[upper]]]
    return uhat, int(upper.sum())


def assemble_pair(f: FilledMatrix, beta: np.ndarray, gamma: np.ndarray) -> tuple[IncompleteInversePair, int]:
    """Build the CSR inverses; returns the pair and the divides spent."""
    n = f.n
    counts = np.diff(f.indptr)
    rows = np.repeat(np.arange(n), counts)
    lower = f.indices <= rows
    upper = f.indices >= rows

    l_vals = np.where(f.indices < rows, -beta, 1.0)[lower]
    l_ptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(rows[lower], minlength=n), out=l_ptr[1:])
    linv = CSRMatrix(n, l_ptr, f.indices[lower], l_vals)

    dvals = f.values[f.diag]
    u_vals = np.empty(f.nnz)
    on_diag = f.indices == rows
    u_vals[on_diag] = 1.0 / dvals
    strict = f.indices > rows
    u_vals[strict] = -gamma[strict] / dvals[f.indices[strict]]
    u_ptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(rows[upper], minlength=n), out=u_ptr[1:])
    uinv = CSRMatrix(n, u_ptr, f.indices[upper], u_vals[upper])
    return IncompleteInversePair(linv, uinv), n + int(strict.sum())


def factor_with_inverse(a: CSRMatrix, pattern: FillPattern, workers: int = 1,
                        band_size: int | None = None,
                        pivot: PivotPolicy = PivotPolicy()) -> tuple[FilledMatrix, IncompleteInversePair, FpaCounter]:
    """Numeric factorization fused with the lower incomplete inverse,
    followed by the upper incomplete inverse, both on the band schedule."""
    from .engine import partition_bands, run_numeric, run_upper_inverse

    part = partition_bands(a.n, band_size or a.n, workers) if a.n else None
    f, counter, beta, _ = run_numeric(a, pattern, part, pivot, with_inverse=True)
    pair, counter.uinv, _ = run_upper_inverse(f, beta, part)
    return f, pair, counter


def apply_iilu(pair: IncompleteInversePair, b, workers: int = 1) -> np.ndarray:
    """``U^-1 (L^-1 b)`` as two sparse matrix-vector products."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (pair.n,):
        raise ValueError("dimension mismatch")
    return spmv(pair.uinv, spmv(pair.linv, b, workers), workers)
