import numpy as np
import pytest

from oracles import random_sparse
from tpilu import (
    CSRMatrix,
    SolverConfig,
    apply_iilu,
    bicgstab,
    gen_stencil_27pt,
    parallel_factor,
    solve,
    solve_auto,
    spmv,
    triangular_solve,
)
from tpilu.solver import BASE, FALLBACK, IILU


def certificate(a, x, b, rtol):
    return np.linalg.norm(b - a.toarray() @ x) / np.linalg.norm(b) <= 10 * rtol


def test_identity(rng):
    b = rng.standard_normal(6)
    x, rep = bicgstab(CSRMatrix.identity(6), None, b)
    assert rep.converged and rep.iterations <= 1
    np.testing.assert_allclose(x, b, rtol=1e-15)
    assert len(rep.residual_history) == rep.iterations + 1


def test_zero_rhs():
    x, rep = bicgstab(CSRMatrix.identity(4), None, np.zeros(4))
    assert rep.converged and rep.iterations == 0 and not x.any()


def test_spd_full_level(rng):
    m = rng.standard_normal((10, 10))
    a = m @ m.T + 10 * np.eye(10)
    A = CSRMatrix.from_dense(a)
    b = rng.standard_normal(10)
    cfg = SolverConfig()
    x, rep, _ = solve(A, 9, "base", b=b, cfg=cfg)
    assert rep.converged
    assert np.linalg.norm(b - a @ x) <= cfg.rtol * np.linalg.norm(b)
    np.testing.assert_allclose(x, np.linalg.solve(a, b), atol=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_preconditioner_equivalence_full_level(seed):
    rng = np.random.default_rng(seed)
    n = 10 + 3 * seed
    a = CSRMatrix.from_dense(rng.uniform(-1, 1, (n, n)) + 2 * np.sqrt(n) * np.eye(n))
    fr = parallel_factor(a, a.n, with_inverse=True)
    b = spmv(a, np.ones(a.n))
    _, r1 = bicgstab(a, lambda v: triangular_solve(fr.filled, v), b)
    _, r2 = bicgstab(a, lambda v: apply_iilu(fr.inverse, v), b)
    assert r1.iterations == r2.iterations
    assert r1.outcome == r2.outcome
    np.testing.assert_allclose(r1.residual_history, r2.residual_history, rtol=1e-8, atol=1e-14)


@pytest.mark.parametrize("method", ["base", "iilu", "auto"])
def test_deterministic_across_workers(method):
    a = gen_stencil_27pt(10)
    _, ref, _ = solve(a, 1, method, 1, 64)
    for w in (2, 4):
        _, rep, _ = solve(a, 1, method, w, 64)
        assert rep.residual_history == ref.residual_history
        assert rep.iterations == ref.iterations and rep.fpa == ref.fpa
        assert rep.true_residual == ref.true_residual


@pytest.mark.parametrize("method", ["base", "iilu", "auto"])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_stencil_small_converges(method, k):
    a = gen_stencil_27pt(12)
    x, rep, _ = solve(a, k, method)
    assert rep.converged
    assert certificate(a, x, spmv(a, np.ones(a.n)), 1e-8)
    assert rep.true_residual <= 1e-7


def test_auto_identity_uses_inverse():
    _, rep, _ = solve_auto(CSRMatrix.identity(5), 0)
    assert rep.method == IILU and rep.converged and not rep.attempts


def test_auto_dominant_converges_quickly():
    a = random_sparse(3, 300, density=0.02)
    x, rep, _ = solve_auto(a, 0)
    assert rep.method == IILU and rep.converged and rep.iterations <= 10


def test_failfast_monitor_triggers_fallback():
    # growth threshold just above 1 so any early increase abandons the attempt
    a = random_sparse(9, 80, density=0.08, dominant=False)
    cfg = SolverConfig(failfast_window=1000, failfast_growth=1.0 + 1e-12, max_iters=1000)
    x, rep, _ = solve_auto(a, 0, cfg=cfg)
    assert rep.method == FALLBACK and rep.converged
    first = rep.attempts[0]
    assert first.method == IILU and first.outcome == "failfast"
    assert rep.timings["abandoned_iterations"] >= 0.0


def test_max_iters_outcome():
    a = gen_stencil_27pt(8)
    _, rep, _ = solve(a, 0, "base", cfg=SolverConfig(max_iters=2))
    assert rep.outcome == "max-iters" and rep.iterations == 2
    assert len(rep.residual_history) == 3


def test_timings_reported():
    _, rep, _ = solve(gen_stencil_27pt(6), 1, "iilu")
    for key in ("iterations", "precond_symbolic", "precond_numeric", "precond_inverse"):
        assert rep.timings[key] >= 0.0


@pytest.mark.parametrize(
    "kwargs",
    [dict(rtol=0), dict(max_iters=0), dict(failfast_window=0), dict(failfast_growth=1.0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_unknown_method():
    with pytest.raises(ValueError):
        solve(CSRMatrix.identity(2), 0, "gmres")


def test_labels():
    assert (BASE, IILU, FALLBACK) == ("base", "incomplete-inverse", "fallback-after-failfast")
