import numpy as np
import pytest

from oracles import random_sparse
from tpilu import (
    CSRMatrix,
    ZeroPivotError,
    numeric_factor,
    parallel_factor,
    partition_bands,
    pipeline_simulate,
    symbolic_factor,
)
from tpilu.engine import default_band_size, run_schedule


def sizes(part):
    return [part.size_of_band(b) for b in range(part.nbands)]


def test_partition_even():
    p = partition_bands(12, 3, 2)
    assert sizes(p) == [3, 3, 3, 3]
    assert [p.worker_of_band(b) for b in range(4)] == [0, 1, 0, 1]
    assert p.bands_of_worker(1) == [1, 3]


def test_partition_padded():
    assert sizes(partition_bands(10, 3, 1)) == [4, 3, 3]


def test_partition_clamped():
    p = partition_bands(5, 9, 4)
    assert sizes(p) == [5]


@pytest.mark.parametrize("n", [1, 2, 7, 10, 33, 100])
@pytest.mark.parametrize("bs", [1, 3, 7, 32, 200])
def test_partition_invariants(n, bs):
    p = partition_bands(n, bs, 3)
    s = sizes(p)
    assert sum(s) == n and max(s) - min(s) <= 1
    assert s == sorted(s, reverse=True)
    assert p.band_of_row.tolist() == [b for b in range(p.nbands) for _ in p.rows_of_band(b)]


def test_partition_rejects_bad_args():
    for args in [(0, 1, 1), (3, 0, 1), (3, 1, 0)]:
        with pytest.raises(ValueError):
            partition_bands(*args)


def test_default_band_size():
    assert default_band_size(100, 4) == 16
    assert default_band_size(64000, 4) == 2000


def test_degenerate_schedule_matches_sequential(m200):
    for k in range(4):
        fr = parallel_factor(m200, k, 1, m200.n)
        p = symbolic_factor(m200, k)
        f, c = numeric_factor(m200, p)
        assert fr.pattern == p and fr.filled == f and fr.fpa == c


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_bit_identical_across_schedules(m200, k):
    ref = parallel_factor(m200, k, 1, m200.n, with_inverse=True)
    for w in (1, 2, 4, 8):
        for bs in (1, 7, 32):
            fr = parallel_factor(m200, k, w, bs, with_inverse=True)
            assert fr.pattern == ref.pattern
            assert fr.filled == ref.filled
            assert fr.fpa == ref.fpa
            assert fr.inverse == ref.inverse


@pytest.mark.parametrize("w", [1, 3, 8])
def test_frontier_and_publication(m200, w):
    fr = parallel_factor(m200, 2, w, 7, with_inverse=True)
    nb = fr.partition.nbands
    for name in ("symbolic", "numeric", "uinv"):
        log = fr.logs[name]
        h = log.frontier_history
        assert all(x < y for x, y in zip(h, h[1:]))
        assert h[0] == 0 and h[-1] == m200.n
        assert log.publish_order == list(range(nb))


def test_k1_symbolic_needs_no_frontier(m200):
    fr = parallel_factor(m200, 1, 4, 16)
    assert fr.logs["symbolic"] is None
    assert fr.pattern == symbolic_factor(m200, 1)


def test_schedule_positions_never_pass_frontier():
    part = partition_bands(40, 5, 3)
    seen = []

    def task(s, lo, hi, complete, arena):
        seen.append((s, lo, hi, complete))

    log = run_schedule(sizes(part), 3, task, lambda: None)
    starts = part.starts
    for s, lo, hi, complete in seen:
        assert lo <= hi <= starts[s]
        if complete:
            assert hi == starts[s]
    assert log.tasks == len(seen)
    # each band completed exactly once
    assert sorted(s for s, *_, c in seen if c) == list(range(part.nbands))


@pytest.mark.parametrize("w", [1, 2, 4])
def test_breakdown_propagates(w):
    a = np.eye(30) * 2.0
    a[10, 11] = a[11, 10] = 2.0
    a[11, 11] = 2.0
    with pytest.raises(ZeroPivotError) as info:
        parallel_factor(CSRMatrix.from_dense(a), 0, w, 4)
    assert info.value.row == 11


def test_task_error_reraised():
    def task(s, lo, hi, complete, arena):
        if s == 2:
            raise RuntimeError("boom")

    with pytest.raises(RuntimeError, match="boom"):
        run_schedule([3] * 6, 3, task, lambda: None)


def test_stencil_schedules_agree():
    from tpilu import gen_stencil_27pt

    a = gen_stencil_27pt(8)
    ref = parallel_factor(a, 2, 1, a.n)
    for w, bs in [(2, 16), (4, 37), (3, 1)]:
        fr = parallel_factor(a, 2, w, bs)
        assert fr.filled == ref.filled and fr.fpa == ref.fpa


def test_pipeline_single_node_is_silent():
    tr = pipeline_simulate(5, 1)
    assert tr.messages == [] and len(tr.completed_at) == 5


def test_pipeline_one_band_four_nodes():
    tr = pipeline_simulate(1, 4)
    assert [(m.timestep, m.sender, m.receiver) for m in tr.messages] == [(0, 0, 1), (1, 1, 2), (2, 2, 3)]


def test_pipeline_staircase():
    tr = pipeline_simulate(4, 4)
    assert len(tr) == 12
    per_step = {}
    for m in tr.messages:
        per_step.setdefault(m.timestep, set()).add(m.sender)
    # the ring carries several bands at once
    assert max(len(s) for s in per_step.values()) >= 2


@pytest.mark.parametrize("bands", range(1, 7))
@pytest.mark.parametrize("nodes", range(1, 7))
def test_pipeline_invariants(bands, nodes):
    tr = pipeline_simulate(bands, nodes)
    assert len(tr) == bands * (nodes - 1)
    sent = set()
    for m in tr.messages:
        assert m.receiver == (m.sender + 1) % nodes
        assert (m.timestep, m.sender) not in sent
        sent.add((m.timestep, m.sender))
    for b in range(bands):
        got = {m.receiver for m in tr.messages if m.band == b}
        assert got == set(range(nodes)) - {b % nodes}
    # a band is completed only after its predecessor reached the owner
    for b in range(1, bands):
        o = b % nodes
        if (b - 1) % nodes != o:
            arrival = min(m.timestep for m in tr.messages if m.band == b - 1 and m.receiver == o)
            assert tr.completed_at[b] > arrival
    assert tr.completed_at == sorted(tr.completed_at)
