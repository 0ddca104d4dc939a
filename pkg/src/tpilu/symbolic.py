"""Symbolic ILU(k): entry levels and the permitted fill pattern.

Rows are merged top-down.  Row ``j`` is reduced by every pivot row
``i < j`` present in its (growing) pattern, in ascending order; a pivot
``i`` proposes position ``(j, t)`` for each ``t > i`` in row ``i`` with
weight ``level(j,i) + level(i,t) + 1``.  Existing entries keep the minimum
weight, absent positions are inserted only when the weight is at most
``k``.

The band kernels here are shared by the sequential entry points and by the
task-parallel engine, which applies pivots to a band in pieces as the
frontier advances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .sparse import CSRMatrix

__all__ = ["FillPattern", "symbolic_factor", "symbolic_factor_k1", "MAX_LEVEL"]

MAX_LEVEL = 254  # levels are stored as uint8; 255 marks saturation
_ABSENT = 1 << 30
_END = -1


@dataclass(frozen=True, eq=False)
class FillPattern:
    """Per-row ascending column lists with one saturating level byte each."""

    n: int
    k: int
    indptr: np.ndarray
    indices: np.ndarray
    levels: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def diag(self) -> np.ndarray:
        """Position of the diagonal entry of each row."""
        return _diag_positions(self.indptr, self.indices)

    def row(self, i: int):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.levels[lo:hi]

    def positions(self) -> set[tuple[int, int]]:
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return set(zip(rows.tolist(), self.indices.tolist()))

    def level_map(self) -> dict[tuple[int, int], int]:
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return dict(zip(zip(rows.tolist(), self.indices.tolist()), self.levels.tolist()))

    def __eq__(self, other):
        if not isinstance(other, FillPattern):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.levels, other.levels)
        )

    __hash__ = None


def clamp_level(k: int) -> int:
    if k < 0:
        raise ValueError("level limit k must be >= 0")
    return min(int(k), MAX_LEVEL)


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _diag_positions(indptr, indices):
    n = len(indptr) - 1
    out = np.empty(n, np.int64)
    for i in range(n):
        out[i] = -1
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                out[i] = p
                break
    return out


@njit(nogil=True, cache=True)
def _grow(a, need):
    if need <= len(a):
        return a
    cap = max(need, 2 * len(a) + 16)
    b = np.empty(cap, a.dtype)
    b[: len(a)] = a
    return b


@njit(nogil=True, cache=True)
def init_band_rows(a_ptr, a_idx, r0, r1):
    """Level-0 rows of A for ``[r0, r1)`` with the diagonal forced in."""
    m = r1 - r0
    ptr = np.empty(m + 1, np.int64)
    cols = np.empty(a_ptr[r1] - a_ptr[r0] + m, np.int64)
    e = 0
    ptr[0] = 0
    for j in range(r0, r1):
        placed = False
        for p in range(a_ptr[j], a_ptr[j + 1]):
            c = a_idx[p]
            if not placed and c >= j:
                if c != j:
                    cols[e] = j
                    e += 1
                placed = True
            cols[e] = c
            e += 1
        if not placed:
            cols[e] = j
            e += 1
        ptr[j - r0 + 1] = e
    return ptr, cols[:e].copy(), np.zeros(e, np.uint8)


@njit(nogil=True, cache=True)
def symbolic_band(k, r0, r1, lo, hi, complete,
                  bptr, bcols, blevs,
                  p_ptr, p_cols, p_levs, p_diag,
                  nxt, lev):
    """Merge pivot rows into the band rows ``[r0, r1)``.

    Partial mode applies pivots ``lo <= i < hi`` (all below ``r0``).
    Complete mode applies pivots ``lo <= i < j`` to each row ``j`` in
    ascending order, reading earlier rows of the same band from the output.
    Pivot rows below ``r0`` are read from the published prefix
    ``p_ptr/p_cols/p_levs``.  ``nxt`` (length n+1) and ``lev`` (length n,
    filled with _ABSENT) are caller-owned scratch and are left clean.
    """
    n = len(lev)
    head = n
    m = r1 - r0
    optr = np.empty(m + 1, np.int64)
    ocols = np.empty(len(bcols) + 16, np.int64)
    olevs = np.empty(len(bcols) + 16, np.uint8)
    odiag = np.empty(m, np.int64)
    optr[0] = 0
    e = 0
    for jj in range(m):
        j = r0 + jj
        # load row into a linked list ordered by column
        prev = head
        for p in range(bptr[jj], bptr[jj + 1]):
            c = bcols[p]
            nxt[prev] = c
            lev[c] = blevs[p]
            prev = c
        nxt[prev] = _END
        ub = j if complete else hi

        cur = nxt[head]
        while cur != _END and cur < lo:
            cur = nxt[cur]
        while cur != _END and cur < ub:
            i = cur
            lji = lev[i]
            if lji < k:
                if i < r0:
                    q0 = p_diag[i] + 1
                    q1 = p_ptr[i + 1]
                    src_cols = p_cols
                    src_levs = p_levs
                else:
                    q0 = odiag[i - r0] + 1
                    q1 = optr[i - r0 + 1]
                    src_cols = ocols
                    src_levs = olevs
                pos = i
                for q in range(q0, q1):
                    w = lji + src_levs[q] + 1
                    if w > k:
                        continue
                    t = src_cols[q]
                    while nxt[pos] != _END and nxt[pos] < t:
                        pos = nxt[pos]
                    if nxt[pos] == t:
                        if w < lev[t]:
                            lev[t] = w
                    else:
                        nxt[t] = nxt[pos]
                        nxt[pos] = t
                        lev[t] = w
                    pos = t
            cur = nxt[i]

        # write the row out and clear scratch
        cnt = 0
        c = nxt[head]
        while c != _END:
            cnt += 1
            c = nxt[c]
        if e + cnt > len(ocols):
            ocols = _grow(ocols, e + cnt)
            olevs = _grow(olevs, e + cnt)
        c = nxt[head]
        while c != _END:
            if c == j:
                odiag[jj] = e
            ocols[e] = c
            lv = lev[c]
            olevs[e] = lv if lv < 255 else 255
            lev[c] = _ABSENT
            e += 1
            c = nxt[c]
        optr[jj + 1] = e
    return optr, ocols[:e].copy(), olevs[:e].copy()


@njit(nogil=True, cache=True)
def symbolic_k1_rows(a_ptr, a_idx, r0, r1, nxt, mark):
    """Level-1 pattern of rows ``[r0, r1)`` from level-0 entries only.

    Fill caused by a level-1 entry has weight >= 2, so each row depends
    solely on the original rows of A and needs no other row's result.
    ``mark`` (length n, all False) is caller-owned scratch.
    """
    n = len(mark)
    head = n
    m = r1 - r0
    optr = np.empty(m + 1, np.int64)
    cap = 2 * (a_ptr[r1] - a_ptr[r0]) + m + 16
    ocols = np.empty(cap, np.int64)
    olevs = np.empty(cap, np.uint8)
    optr[0] = 0
    e = 0
    for jj in range(m):
        j = r0 + jj
        prev = head
        placed = False
        for p in range(a_ptr[j], a_ptr[j + 1]):
            c = a_idx[p]
            if not placed and c >= j:
                if c != j:
                    nxt[prev] = j
                    mark[j] = True
                    prev = j
                placed = True
            nxt[prev] = c
            mark[c] = True
            prev = c
        if not placed:
            nxt[prev] = j
            mark[j] = True
            prev = j
        nxt[prev] = _END

        # row j's level-0 lower entries, ascending, straight from A
        for p in range(a_ptr[j], a_ptr[j + 1]):
            i = a_idx[p]
            if i >= j:
                break
            pos = i
            for q in range(a_ptr[i], a_ptr[i + 1]):
                t = a_idx[q]
                if t <= i:
                    continue
                while nxt[pos] != _END and nxt[pos] < t:
                    pos = nxt[pos]
                if nxt[pos] != t:
                    nxt[t] = nxt[pos]
                    nxt[pos] = t
                pos = t

        cnt = 0
        c = nxt[head]
        while c != _END:
            cnt += 1
            c = nxt[c]
        if e + cnt > len(ocols):
            ocols = _grow(ocols, e + cnt)
            olevs = _grow(olevs, e + cnt)
        c = nxt[head]
        while c != _END:
            ocols[e] = c
            # anything not seen in A's row (or the forced diagonal) is fill
            olevs[e] = 0 if mark[c] else 1
            e += 1
            c = nxt[c]
        c = nxt[head]
        while c != _END:
            mark[c] = False
            c = nxt[c]
        optr[jj + 1] = e
    return optr, ocols[:e].copy(), olevs[:e].copy()


def new_scratch(n: int):
    """Per-worker scratch for the symbolic kernels."""
    return np.empty(n + 1, np.int64), np.full(n, _ABSENT, np.int64)


# --------------------------------------------------------------------------
# sequential entry points


def symbolic_factor(a: CSRMatrix, k: int) -> FillPattern:
    """Level-of-fill pattern of ILU(k), computed row by row top-down."""
    k = clamp_level(k)
    n = a.n
    if n == 0:
        return FillPattern(0, k, np.zeros(1, np.int64), np.empty(0, np.int64), np.empty(0, np.uint8))
    bptr, bcols, blevs = init_band_rows(a.indptr, a.indices, 0, n)
    nxt, lev = new_scratch(n)
    empty_i = np.zeros(1, np.int64)
    ptr, cols, levs = symbolic_band(
        k, 0, n, 0, 0, True, bptr, bcols, blevs,
        empty_i, empty_i, np.zeros(1, np.uint8), empty_i, nxt, lev,
    )
    return FillPattern(n, k, ptr, cols, levs)


def symbolic_factor_k1(a: CSRMatrix) -> FillPattern:
    """ILU(1) pattern with every row computed independently of the others."""
    n = a.n
    if n == 0:
        return FillPattern(0, 1, np.zeros(1, np.int64), np.empty(0, np.int64), np.empty(0, np.uint8))
    nxt = np.empty(n + 1, np.int64)
    mark = np.zeros(n, np.bool_)
    ptr, cols, levs = symbolic_k1_rows(a.indptr, a.indices, 0, n, nxt, mark)
    return FillPattern(n, 1, ptr, cols, levs)
