"""Task-oriented parallel factorization.

Rows are grouped into contiguous bands and bands are dealt to workers
round-robin.  A task partially reduces one band by every row above the
frontier (the count of completely reduced rows) that it has not applied
yet.  The owner of the first unreduced band reduces it completely and
publishes it, which advances the frontier by the band's size.

Each row has exactly one writer and every row applies its pivots in
ascending order whatever the band split, so the output is bit-identical to
the single-worker run.  Workers are plain threads; the kernels release the
GIL.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .inverse import IncompleteInversePair, assemble_pair, numeric_inv_band, scaled_upper, uinv_band
from .numeric import (
    FilledMatrix,
    FpaCounter,
    PivotPolicy,
    ZeroPivotError,
    count_lower,
    numeric_band,
    row_scale,
    scatter_values,
)
from .sparse import CSRMatrix
from .symbolic import FillPattern, clamp_level, init_band_rows, new_scratch, symbolic_band, symbolic_k1_rows

__all__ = [
    "BandPartition",
    "FrontierState",
    "ScheduleLog",
    "FactorResult",
    "PipelineTrace",
    "Message",
    "partition_bands",
    "parallel_factor",
    "pipeline_simulate",
]


@dataclass(frozen=True)
class BandPartition:
    n: int
    band_size: int
    workers: int
    starts: np.ndarray  # band b covers rows starts[b]:starts[b+1]

    @property
    def nbands(self) -> int:
        return len(self.starts) - 1

    def rows_of_band(self, b: int) -> range:
        return range(int(self.starts[b]), int(self.starts[b + 1]))

    def size_of_band(self, b: int) -> int:
        return int(self.starts[b + 1] - self.starts[b])

    @property
    def band_of_row(self) -> np.ndarray:
        return np.repeat(np.arange(self.nbands), np.diff(self.starts))

    def worker_of_band(self, b: int) -> int:
        return b % self.workers

    def bands_of_worker(self, w: int) -> list[int]:
        return list(range(w, self.nbands, self.workers))


def partition_bands(n: int, band_size: int, workers: int) -> BandPartition:
    """Contiguous bands of nominal ``band_size`` rows.

    ``n // band_size`` bands are formed and the ``n mod nbands`` leading
    bands absorb one extra row each, so band sizes differ by at most one.
    """
    if n < 1 or band_size < 1 or workers < 1:
        raise ValueError("n, band_size and workers must all be >= 1")
    nb = max(1, n // band_size)
    base, extra = divmod(n, nb)
    sizes = np.full(nb, base, np.int64)
    sizes[:extra] += 1
    starts = np.zeros(nb + 1, np.int64)
    np.cumsum(sizes, out=starts[1:])
    return BandPartition(n, min(band_size, n), workers, starts)


# --------------------------------------------------------------------------
# scheduler


@dataclass
class FrontierState:
    """Shared progress of one factorization phase.

    ``frontier`` counts completely reduced rows (in schedule order) and
    ``positions[s]`` how many of them band ``s`` has already applied.
    """

    nbands: int
    frontier: int = 0
    first_unreduced_band: int = 0
    positions: list = None
    cond: threading.Condition = field(default_factory=threading.Condition, repr=False)
    error: BaseException | None = None

    def __post_init__(self):
        if self.positions is None:
            self.positions = [0] * self.nbands


@dataclass
class ScheduleLog:
    frontier_history: list[int]
    publish_order: list[int]
    tasks: int


Task = Callable[[int, int, int, bool, object], None]


def run_schedule(sizes: list[int], workers: int, task: Task, make_arena: Callable[[], object]) -> ScheduleLog:
    """Drive ``task(s, lo, hi, complete, arena)`` over bands in schedule order.

    Band ``s`` (schedule position) is owned by worker ``s mod workers``.  A
    partial task applies frontier rows ``[lo, hi)``; a complete task
    (``s`` is the first unreduced band) applies ``lo`` onward and finishes
    the band.  A task raising aborts every worker and is re-raised here.
    """
    nb = len(sizes)
    state = FrontierState(nb)
    history = [0]
    order: list[int] = []
    ntasks = [0] * workers

    def work(wid: int):
        arena = make_arena()
        mine = list(range(wid, nb, workers))
        head = 0
        try:
            while head < len(mine):
                with state.cond:
                    if state.error is not None:
                        return
                    fr, first = state.frontier, state.first_unreduced_band
                s0 = mine[head]
                if s0 == first:
                    task(s0, state.positions[s0], fr, True, arena)
                    ntasks[wid] += 1
                    with state.cond:
                        state.positions[s0] = fr
                        state.frontier = fr + sizes[s0]
                        state.first_unreduced_band += 1
                        history.append(state.frontier)
                        order.append(s0)
                        state.cond.notify_all()
                    head += 1
                    continue
                for s in mine[head:]:
                    if state.positions[s] < fr:
                        task(s, state.positions[s], fr, False, arena)
                        ntasks[wid] += 1
                        state.positions[s] = fr
                        break
                else:
                    with state.cond:
                        while state.frontier == fr and state.error is None:
                            state.cond.wait()
        except BaseException as exc:  # propagate to the caller
            with state.cond:
                if state.error is None:
                    state.error = exc
                state.cond.notify_all()

    if workers == 1:
        work(0)
    else:
        threads = [threading.Thread(target=work, args=(w,), name=f"tpilu-worker-{w}") for w in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if state.error is not None:
        raise state.error
    return ScheduleLog(history, order, sum(ntasks))


# --------------------------------------------------------------------------
# phases


class _Prefix:
    """Published rows of the fill pattern, grown as bands complete."""

    def __init__(self, n: int, cap: int):
        self.ptr = np.zeros(n + 1, np.int64)
        self.diag = np.zeros(n, np.int64)
        self.cols = np.empty(cap, np.int64)
        self.levs = np.empty(cap, np.uint8)

    def append(self, r0: int, ptr, cols, levs):
        base = self.ptr[r0]
        end = base + len(cols)
        if end > len(self.cols):
            cap = max(end, 2 * len(self.cols))
            c = np.empty(cap, np.int64)
            lv = np.empty(cap, np.uint8)
            c[:base] = self.cols[:base]
            lv[:base] = self.levs[:base]
            # readers may still hold the old arrays; both contain the prefix
            self.cols, self.levs = c, lv
        self.cols[base:end] = cols
        self.levs[base:end] = levs
        r1 = r0 + len(ptr) - 1
        rows_ptr = base + ptr
        row_ids = np.repeat(np.arange(r0, r1), np.diff(ptr))
        hit = cols == row_ids
        self.diag[r0:r1] = base + np.flatnonzero(hit)
        self.ptr[r0 + 1:r1 + 1] = rows_ptr[1:]


def run_symbolic(a: CSRMatrix, k: int, part: BandPartition) -> tuple[FillPattern, ScheduleLog | None]:
    k = clamp_level(k)
    n = a.n
    w = part.workers
    if k == 1:
        return _run_symbolic_k1(a, part), None

    prefix = _Prefix(n, 2 * a.nnz + n)
    states: dict[int, tuple] = {}

    def task(b, lo, hi, complete, arena):
        nxt, lev = arena
        r0, r1 = int(part.starts[b]), int(part.starts[b + 1])
        st = states.get(b)
        if st is None:
            st = init_band_rows(a.indptr, a.indices, r0, r1)
        ptr, cols, levs = symbolic_band(
            k, r0, r1, lo, hi, complete, st[0], st[1], st[2],
            prefix.ptr, prefix.cols, prefix.levs, prefix.diag, nxt, lev,
        )
        if complete:
            prefix.append(r0, ptr, cols, levs)
            states.pop(b, None)
        else:
            states[b] = (ptr, cols, levs)

    log = run_schedule([part.size_of_band(b) for b in range(part.nbands)], w, task, lambda: new_scratch(n))
    nnz = int(prefix.ptr[n])
    pattern = FillPattern(n, k, prefix.ptr, prefix.cols[:nnz].copy(), prefix.levs[:nnz].copy())
    return pattern, log


def _run_symbolic_k1(a: CSRMatrix, part: BandPartition) -> FillPattern:
    n = a.n
    rows: dict[int, tuple] = {}

    def work(wid):
        nxt = np.empty(n + 1, np.int64)
        mark = np.zeros(n, np.bool_)
        for b in part.bands_of_worker(wid):
            rows[b] = symbolic_k1_rows(a.indptr, a.indices, int(part.starts[b]), int(part.starts[b + 1]), nxt, mark)

    _run_workers(part.workers, work)
    ptrs, cols, levs = [], [], []
    base = 0
    for b in range(part.nbands):
        p, c, lv = rows[b]
        ptrs.append(p[1:] + base)
        cols.append(c)
        levs.append(lv)
        base += len(c)
    indptr = np.concatenate([np.zeros(1, np.int64)] + ptrs)
    return FillPattern(n, 1, indptr, np.concatenate(cols), np.concatenate(levs))


def _run_workers(workers: int, fn):
    if workers == 1:
        fn(0)
        return
    errors = []

    def guard(w):
        try:
            fn(w)
        except BaseException as exc:
            errors.append(exc)

    threads = [threading.Thread(target=guard, args=(w,)) for w in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]


def run_numeric(a: CSRMatrix, pattern: FillPattern, part: BandPartition, pivot: PivotPolicy,
                with_inverse: bool = False):
    """Numeric phase on the band schedule.

    Returns ``(filled, counter, beta, log)``; ``beta`` holds the lower
    inverse accumulator when ``with_inverse`` is set, else ``None``.
    """
    n = a.n
    if pattern.n != n:
        raise ValueError("pattern does not match matrix dimension")
    ptr, idx = pattern.indptr, pattern.indices
    vals = np.empty(pattern.nnz)
    scatter_values(a.indptr, a.indices, a.data, ptr, idx, 0, n, vals)
    diag = pattern.diag
    if np.any(diag < 0):
        raise ValueError("pattern lacks a diagonal entry")
    scale = row_scale(a.indptr, a.data)
    beta = np.zeros(pattern.nnz) if with_inverse else None
    fpa = [0] * part.nbands
    fpa_inv = [0] * part.nbands

    def task(b, lo, hi, complete, where):
        r0, r1 = int(part.starts[b]), int(part.starts[b + 1])
        if with_inverse:
            c, ci, bad = numeric_inv_band(ptr, idx, vals, beta, diag, r0, r1, lo, hi, complete,
                                          pivot.tol, pivot.perturb, pivot.eps, scale, where)
            fpa_inv[b] += ci
        else:
            c, bad = numeric_band(ptr, idx, vals, diag, r0, r1, lo, hi, complete,
                                  pivot.tol, pivot.perturb, pivot.eps, scale, where)
        fpa[b] += c
        if bad >= 0:
            raise ZeroPivotError(int(bad), float(vals[diag[bad]]))

    log = run_schedule([part.size_of_band(b) for b in range(part.nbands)], part.workers, task,
                       lambda: np.full(n, -1, np.int64))
    filled = FilledMatrix(n, pattern.k, ptr, idx, pattern.levels, vals, diag)
    return filled, FpaCounter(factor=sum(fpa), linv=sum(fpa_inv), factor_div=count_lower(pattern)), beta, log


def run_upper_inverse(f: FilledMatrix, beta: np.ndarray, part: BandPartition):
    """Upper incomplete inverse on the mirrored schedule (bottom band first).

    Returns ``(pair, fpa, log)``.
    """
    n = f.n
    uhat, nscale = scaled_upper(f)
    gamma = uhat.copy()
    nb = part.nbands
    fpa = [0] * nb

    def task(s, lo, hi, complete, where):
        b = nb - 1 - s
        r0, r1 = int(part.starts[b]), int(part.starts[b + 1])
        # frontier rows counted from the bottom
        fpa[s] += uinv_band(f.indptr, f.indices, f.diag, uhat, gamma, r0, r1, n - hi, n - lo, complete, where)

    log = run_schedule([part.size_of_band(nb - 1 - s) for s in range(nb)], part.workers, task,
                       lambda: np.full(n, -1, np.int64))
    pair, ndiv = assemble_pair(f, beta, gamma)
    return pair, nscale + sum(fpa) + ndiv, log


# --------------------------------------------------------------------------


@dataclass
class FactorResult:
    pattern: FillPattern
    filled: FilledMatrix
    fpa: FpaCounter
    partition: BandPartition
    inverse: IncompleteInversePair | None = None
    timings: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)


def default_band_size(n: int, workers: int) -> int:
    return max(16, int(round(n / (8 * workers))))


def parallel_factor(a: CSRMatrix, k: int, workers: int = 1, band_size: int | None = None,
                    pivot: PivotPolicy = PivotPolicy(), with_inverse: bool = False) -> FactorResult:
    """Symbolic then numeric ILU(k) on ``workers`` threads.

    The same band partition drives both phases.  For ``k == 1`` the
    symbolic phase computes every row independently and needs no frontier.
    With ``with_inverse`` the lower incomplete inverse is fused into the
    numeric phase and the upper one follows on the mirrored schedule.
    """
    if a.n == 0:
        raise ValueError("empty matrix")
    if band_size is None:
        band_size = default_band_size(a.n, workers)
    part = partition_bands(a.n, band_size, workers)
    timings = {}
    logs = {}

    t0 = time.perf_counter()
    pattern, logs["symbolic"] = run_symbolic(a, k, part)
    t1 = time.perf_counter()
    filled, counter, beta, logs["numeric"] = run_numeric(a, pattern, part, pivot, with_inverse)
    t2 = time.perf_counter()
    timings["symbolic"] = t1 - t0
    timings["numeric"] = t2 - t1
    pair = None
    if with_inverse:
        pair, counter.uinv, logs["uinv"] = run_upper_inverse(filled, beta, part)
        timings["inverse"] = time.perf_counter() - t2
    return FactorResult(pattern, filled, counter, part, pair, timings, logs)


# --------------------------------------------------------------------------
# distributed pipeline, simulated


class Message(NamedTuple):
    timestep: int
    sender: int
    receiver: int
    band: int


@dataclass
class PipelineTrace:
    nodes: int
    bands: int
    messages: list[Message]
    completed_at: list[int]

    def __len__(self):
        return len(self.messages)


def pipeline_simulate(bands: int, nodes: int) -> PipelineTrace:
    """Discrete-time simulation of the ring broadcast of completed bands.

    Band ``b`` is owned by node ``b mod nodes`` and can be completed one
    step after its owner holds band ``b-1``, provided the owner has no own
    band still waiting to be sent.  Every node sends at most one message
    per step, always to its successor, and forwards each band until all
    nodes hold a copy.
    """
    if bands < 1 or nodes < 1:
        raise ValueError("bands and nodes must be >= 1")
    outbox = [deque() for _ in range(nodes)]
    avail = [dict() for _ in range(nodes)]  # band -> first step it can be used
    completed = []
    messages = []
    t = 0
    while len(completed) < bands or any(outbox):
        b = len(completed)
        if b < bands:
            o = b % nodes
            ready = b == 0 or avail[o].get(b - 1, t + 1) <= t
            own_pending = any(x % nodes == o for x in outbox[o])
            if ready and not own_pending:
                completed.append(t)
                avail[o][b] = t + 1
                if nodes > 1:
                    outbox[o].append(b)
        sends = [(x, outbox[x].popleft()) for x in range(nodes) if outbox[x]]
        for x, band in sends:
            y = (x + 1) % nodes
            messages.append(Message(t, x, y, band))
            avail[y][band] = t + 1
            if (y + 1) % nodes != band % nodes:
                outbox[y].append(band)
        t += 1
    return PipelineTrace(nodes, bands, messages, completed)
