"""Compressed sparse row storage, Matrix Market I/O, problem generators and
the elementary kernels (spmv, dot, axpy) shared by the rest of the package.

Indices are 0-based everywhere inside the package; Matrix Market's 1-based
coordinates are converted at the file boundary.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Union

import numpy as np
from numba import njit

__all__ = [
    "CSRMatrix",
    "MatrixMarketError",
    "parse_matrix_market",
    "read_matrix_market",
    "write_matrix_market",
    "gen_stencil_27pt",
    "spmv",
    "dot",
    "axpy",
]


class MatrixMarketError(ValueError):
    """Raised for malformed or unsupported Matrix Market input."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    if a.flags.writeable and a.base is None:
        a.setflags(write=False)
    elif a.flags.writeable:
        a = a.copy()
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CSRMatrix:
    """Square sparse matrix in compressed sparse row form.

    Column indices are strictly ascending within each row.  The arrays are
    made read-only on construction so a matrix can be shared between
    threads without copying.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indptr", _frozen(self.indptr, np.int64))
        object.__setattr__(self, "indices", _frozen(self.indices, np.int64))
        object.__setattr__(self, "data", _frozen(self.data, np.float64))
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("indptr must have length n+1")
        if self.indices.shape != self.data.shape:
            raise ValueError("indices and data must have equal length")

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def check(self) -> None:
        """Validate the structural invariants; raises ``ValueError``."""
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if self.nnz and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise ValueError("column index out of range")
        if not _rows_strictly_sorted(self.indptr, self.indices):
            raise ValueError("column indices must be strictly ascending per row")

    def toarray(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    @classmethod
    def from_dense(cls, a, keep_zeros: bool = False) -> "CSRMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square 2-D array")
        mask = np.ones(a.shape, bool) if keep_zeros else a != 0
        rows, cols = np.nonzero(mask)
        indptr = np.zeros(a.shape[0] + 1, np.int64)
        np.cumsum(np.bincount(rows, minlength=a.shape[0]), out=indptr[1:])
        return cls(a.shape[0], indptr, cols, a[rows, cols])

    @classmethod
    def from_scipy(cls, m) -> "CSRMatrix":
        m = m.tocsr()
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.indptr, m.indices, m.data)

    @classmethod
    def from_coo(cls, n: int, rows, cols, vals) -> "CSRMatrix":
        """Build from coordinates; duplicates are rejected."""
        rows = np.asarray(rows, np.int64)
        cols = np.asarray(cols, np.int64)
        vals = np.asarray(vals, np.float64)
        key = rows * n + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        if len(key) > 1 and np.any(key[1:] == key[:-1]):
            raise ValueError("duplicate coordinate")
        indptr = np.zeros(n + 1, np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(n, indptr, cols[order], vals[order])

    @classmethod
    def identity(cls, n: int) -> "CSRMatrix":
        return cls(n, np.arange(n + 1), np.arange(n), np.ones(n))

    def __eq__(self, other):
        if not isinstance(other, CSRMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data.view(np.int64), other.data.view(np.int64))
        )

    __hash__ = None

    def __matmul__(self, v):
        return spmv(self, v)


@njit(cache=True)
def _rows_strictly_sorted(indptr, indices):
    for i in range(len(indptr) - 1):
        for p in range(indptr[i] + 1, indptr[i + 1]):
            if indices[p] <= indices[p - 1]:
                return False
    return True


# --------------------------------------------------------------------------
# Matrix Market

_SUPPORTED_FIELDS = ("real", "integer", "pattern")
_SUPPORTED_SYMMETRY = ("general", "symmetric")


def parse_matrix_market(text: Union[bytes, str]) -> CSRMatrix:
    """Parse a Matrix Market ``coordinate`` document into a CSR matrix.

    Accepts ``real``/``integer``/``pattern`` fields with ``general`` or
    ``symmetric`` storage.  Symmetric files are expanded to full storage.
    Errors carry the 1-based line number of the offending line.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("empty input", 1)

    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing %%MatrixMarket header", 1)
    obj, fmt, field, symmetry = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object '{obj}'", 1)
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format '{fmt}'", 1)
    if field not in _SUPPORTED_FIELDS:
        raise MatrixMarketError(f"unsupported field '{field}'", 1)
    if symmetry not in _SUPPORTED_SYMMETRY:
        raise MatrixMarketError(f"unsupported symmetry '{symmetry}'", 1)

    li = 1
    while li < len(lines) and (not lines[li].strip() or lines[li].lstrip().startswith("%")):
        li += 1
    if li == len(lines):
        raise MatrixMarketError("missing size line", li + 1)
    size = lines[li].split()
    try:
        nrows, ncols, nnz = (int(s) for s in size)
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", li + 1) from None
    if nrows != ncols:
        raise MatrixMarketError(f"matrix is not square ({nrows}x{ncols})", li + 1)
    if nrows < 0 or nnz < 0:
        raise MatrixMarketError("negative size", li + 1)
    n = nrows
    width = 2 if field == "pattern" else 3

    body = lines[li + 1:]
    first = li + 2  # line number of body[0]
    entries, linenos = _parse_body(body, first, nnz, width)

    rows = entries[:, 0]
    cols = entries[:, 1]
    if not (np.all(rows == np.floor(rows)) and np.all(cols == np.floor(cols))):
        bad = int(np.flatnonzero((rows != np.floor(rows)) | (cols != np.floor(cols)))[0])
        raise MatrixMarketError("non-integer index", _lineno(linenos, first, bad))
    rows = rows.astype(np.int64) - 1
    cols = cols.astype(np.int64) - 1
    out = (rows < 0) | (rows >= n) | (cols < 0) | (cols >= n)
    if np.any(out):
        bad = int(np.flatnonzero(out)[0])
        raise MatrixMarketError("index out of range", _lineno(linenos, first, bad))
    vals = np.ones(nnz) if field == "pattern" else entries[:, 2].copy()
    src = np.arange(nnz)

    if symmetry == "symmetric":
        if np.any(cols > rows):
            bad = int(np.flatnonzero(cols > rows)[0])
            raise MatrixMarketError("symmetric storage expects the lower triangle", _lineno(linenos, first, bad))
        off = rows != cols
        rows, cols, vals, src = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
            np.concatenate([src, src[off]]),
        )

    key = rows * n + cols
    order = np.lexsort((src, key))
    key = key[order]
    dup = np.flatnonzero(key[1:] == key[:-1]) if len(key) > 1 else np.empty(0, np.int64)
    if len(dup):
        bad = int(src[order][dup[0] + 1])
        raise MatrixMarketError("duplicate coordinate", _lineno(linenos, first, bad))

    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return CSRMatrix(n, indptr, cols[order], vals[order])


def _lineno(linenos, first, entry):
    return int(linenos[entry]) if linenos is not None else first + entry


def _parse_body(body, first, nnz, width):
    arr = None
    if nnz > 0:
        try:
            arr = np.loadtxt(io.StringIO("\n".join(body)), comments="%", ndmin=2)
        except ValueError:
            pass
    if arr is not None and arr.shape == (nnz, width):
        data_lines = [off for off, ln in enumerate(body) if ln.strip() and not ln.lstrip().startswith("%")]
        if len(data_lines) == nnz and (nnz == 0 or data_lines[-1] == nnz - 1):
            return arr, None
        return arr, np.asarray(data_lines, np.int64) + first

    # slow path, only reached for malformed input: locate the bad line
    arr = np.empty((nnz, width))
    linenos = np.empty(nnz, np.int64)
    e = 0
    for off, ln in enumerate(body):
        s = ln.strip()
        if not s or s.startswith("%"):
            continue
        lineno = first + off
        if e == nnz:
            raise MatrixMarketError("more entries than declared", lineno)
        parts = s.split()
        if len(parts) != width:
            raise MatrixMarketError(f"expected {width} fields, found {len(parts)}", lineno)
        try:
            arr[e] = [float(p) for p in parts]
        except ValueError:
            raise MatrixMarketError("unparseable number", lineno) from None
        linenos[e] = lineno
        e += 1
    if e != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {e}", first + len(body))
    return arr, linenos


def read_matrix_market(path: Union[str, os.PathLike]) -> CSRMatrix:
    with open(path, "rb") as fh:
        return parse_matrix_market(fh.read())


def write_matrix_market(a: CSRMatrix, dest: Union[str, os.PathLike, IO[str]]) -> None:
    """Write ``a`` as ``coordinate real general`` with round-trip exact values."""
    rows = np.repeat(np.arange(a.n), np.diff(a.indptr)) + 1
    buf = io.StringIO()
    buf.write("%%MatrixMarket matrix coordinate real general\n")
    buf.write(f"{a.n} {a.n} {a.nnz}\n")
    cols = a.indices + 1
    buf.writelines(f"{r} {c} {v!r}\n" for r, c, v in zip(rows.tolist(), cols.tolist(), a.data.tolist()))
    if hasattr(dest, "write"):
        dest.write(buf.getvalue())
    else:
        with open(dest, "w") as fh:
            fh.write(buf.getvalue())


# --------------------------------------------------------------------------
# Generators


def gen_stencil_27pt(g: int) -> CSRMatrix:
    """3-D 27-point Laplacian on a ``g x g x g`` grid.

    Cell ``(x, y, z)`` maps to row ``x + g*y + g*g*z``.  The diagonal is 26
    and every neighbour in the surrounding 3x3x3 cube that lies inside the
    grid gets -1, so interior rows sum to zero.
    """
    if g < 1:
        raise ValueError("grid edge length must be >= 1")
    n = g**3
    idx = np.arange(n)
    x, y, z = idx % g, (idx // g) % g, idx // (g * g)
    rows, cols, vals = [], [], []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ok = (
                    (x + dx >= 0) & (x + dx < g)
                    & (y + dy >= 0) & (y + dy < g)
                    & (z + dz >= 0) & (z + dz < g)
                )
                r = idx[ok]
                rows.append(r)
                cols.append(r + dx + g * dy + g * g * dz)
                centre = dx == 0 and dy == 0 and dz == 0
                vals.append(np.full(len(r), 26.0 if centre else -1.0))
    # offsets were enumerated in ascending column order, so a stable sort by
    # row keeps each row's columns ascending
    rows = np.concatenate(rows)
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return CSRMatrix(n, indptr, np.concatenate(cols)[order], np.concatenate(vals)[order])


# --------------------------------------------------------------------------
# Kernels


@njit(nogil=True, cache=True)
def _spmv_rows(indptr, indices, data, v, out, r0, r1):
    for i in range(r0, r1):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * v[indices[p]]
        out[i] = s


@njit(nogil=True, cache=True)
def _dot(u, v):
    s = 0.0
    for i in range(len(u)):
        s += u[i] * v[i]
    return s


_POOLS: dict[int, ThreadPoolExecutor] = {}


def _pool(workers: int) -> ThreadPoolExecutor:
    pool = _POOLS.get(workers)
    if pool is None:
        pool = _POOLS[workers] = ThreadPoolExecutor(workers, thread_name_prefix="tpilu-rows")
    return pool


def row_chunks(n: int, workers: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into ``workers`` contiguous chunks."""
    bounds = np.linspace(0, n, workers + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def spmv(a: CSRMatrix, v, workers: int = 1) -> np.ndarray:
    """``a @ v``.  Each row is an independent left-to-right sum, so the
    result does not depend on ``workers``."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (a.n,):
        raise ValueError(f"dimension mismatch: matrix is {a.n}, vector is {v.shape}")
    out = np.empty(a.n)
    if workers <= 1 or a.n < 2 * workers:
        _spmv_rows(a.indptr, a.indices, a.data, v, out, 0, a.n)
    else:
        futs = [
            _pool(workers).submit(_spmv_rows, a.indptr, a.indices, a.data, v, out, r0, r1)
            for r0, r1 in row_chunks(a.n, workers)
        ]
        for f in futs:
            f.result()
    return out


def dot(u, v) -> float:
    """Inner product summed strictly left to right."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError("dimension mismatch")
    return float(_dot(u, v))


def axpy(a: float, u, v) -> np.ndarray:
    """Return ``a*u + v``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("dimension mismatch")
    return a * u + v
