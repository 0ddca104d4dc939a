"""Right-preconditioned BiCGSTAB and the try-inverse-then-fall-back driver."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import FactorResult, parallel_factor
from .inverse import apply_iilu
from .numeric import FpaCounter, PivotPolicy, triangular_solve
from .sparse import CSRMatrix, dot, spmv

__all__ = [
    "SolverConfig",
    "SolveReport",
    "bicgstab",
    "solve_auto",
    "solve",
    "BASE",
    "IILU",
    "FALLBACK",
]

BASE = "base"
IILU = "incomplete-inverse"
FALLBACK = "fallback-after-failfast"

Preconditioner = Callable[[np.ndarray], np.ndarray]

_TINY = 1e-300


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-8
    max_iters: int = 1000
    failfast_window: int = 10
    failfast_growth: float = 10.0

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValueError("rtol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.failfast_window < 1:
            raise ValueError("failfast_window must be >= 1")
        if not self.failfast_growth > 1:
            raise ValueError("failfast_growth must be > 1")


@dataclass
class SolveReport:
    method: str
    outcome: str  # converged | breakdown | max-iters | diverged | failfast
    iterations: int
    residual_history: list[float]
    true_residual: float = float("nan")
    fpa: FpaCounter = field(default_factory=FpaCounter)
    timings: dict = field(default_factory=dict)
    attempts: list = field(default_factory=list)  # earlier abandoned attempts

    @property
    def converged(self) -> bool:
        return self.outcome == "converged"

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def bicgstab(a: CSRMatrix, precond: Optional[Preconditioner], b, cfg: SolverConfig = SolverConfig(),
             monitor: Optional[Callable[[int, float], bool]] = None, method: str = BASE,
             workers: int = 1) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` from a zero initial guess.

    Right preconditioning: the iteration runs on ``A M^-1`` and ``x`` is
    accumulated from preconditioned directions, so the recurrence residual
    is the residual of the original system.  ``monitor(it, relres)``
    returning true stops the iteration with outcome ``"failfast"``.
    """
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (a.n,):
        raise ValueError("dimension mismatch")
    if precond is None:
        precond = np.copy
    t0 = time.perf_counter()

    x = np.zeros(a.n)
    bnorm = math.sqrt(dot(b, b))
    if bnorm == 0.0:
        rep = SolveReport(method, "converged", 0, [0.0], 0.0)
        rep.timings["iterations"] = 0.0
        return x, rep

    r = b.copy()
    rhat = r.copy()
    p = np.zeros(a.n)
    v = np.zeros(a.n)
    rho_old = alpha = omega = 1.0
    history = [1.0]
    outcome = "max-iters"
    it = 0

    while it < cfg.max_iters:
        rho = dot(rhat, r)
        if abs(rho) < _TINY:
            outcome = "breakdown"
            break
        beta = (rho / rho_old) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = precond(p)
        v = spmv(a, phat, workers)
        denom = dot(rhat, v)
        if abs(denom) < _TINY:
            outcome = "breakdown"
            break
        alpha = rho / denom
        s = r - alpha * v
        it += 1
        snorm = math.sqrt(dot(s, s)) / bnorm
        if snorm <= cfg.rtol:
            x += alpha * phat
            history.append(snorm)
            outcome = "converged"
            break
        shat = precond(s)
        t = spmv(a, shat, workers)
        tt = dot(t, t)
        if tt < _TINY:
            x += alpha * phat
            history.append(snorm)
            outcome = "breakdown"
            break
        omega = dot(t, s) / tt
        x += alpha * phat + omega * shat
        r = s - omega * t
        relres = math.sqrt(dot(r, r)) / bnorm
        history.append(relres)
        if not math.isfinite(relres):
            outcome = "diverged"
            break
        if relres <= cfg.rtol:
            outcome = "converged"
            break
        if abs(omega) < _TINY:
            outcome = "breakdown"
            break
        if monitor is not None and monitor(it, relres):
            outcome = "failfast"
            break
        rho_old = rho

    rep = SolveReport(method, outcome, it, history)
    res = b - spmv(a, x, workers)
    rep.true_residual = math.sqrt(dot(res, res)) / bnorm
    rep.timings["iterations"] = time.perf_counter() - t0
    return x, rep


def failfast_monitor(cfg: SolverConfig) -> Callable[[int, float], bool]:
    """Abandon when, within the first ``failfast_window`` iterations, the
    relative residual exceeds ``failfast_growth`` times its starting value
    (which is 1 for a zero initial guess)."""

    def monitor(it: int, relres: float) -> bool:
        if not math.isfinite(relres):
            return True
        return it <= cfg.failfast_window and relres > cfg.failfast_growth

    return monitor


def _rhs(a: CSRMatrix, b):
    return spmv(a, np.ones(a.n)) if b is None else np.asarray(b, dtype=np.float64)


def _factor_timings(fr: FactorResult) -> dict:
    return {f"precond_{k}": v for k, v in fr.timings.items()}


def solve_auto(a: CSRMatrix, k: int, workers: int = 1, band_size: int | None = None,
               cfg: SolverConfig = SolverConfig(), b=None,
               pivot: PivotPolicy = PivotPolicy()) -> tuple[np.ndarray, SolveReport, FactorResult]:
    """Try the incomplete-inverse preconditioner; on early divergence or
    any other failure, rerun from zero with substitution solves on the
    already computed factors.

    ``b`` defaults to ``A @ 1``.  Factorization breakdown propagates as
    :class:`~tpilu.numeric.ZeroPivotError`.
    """
    b = _rhs(a, b)
    fr = parallel_factor(a, k, workers, band_size, pivot, with_inverse=True)
    pair = fr.inverse
    x, rep = bicgstab(a, lambda v: apply_iilu(pair, v, workers), b, cfg,
                      monitor=failfast_monitor(cfg), method=IILU, workers=workers)
    if not rep.converged:
        first = rep
        x, rep = bicgstab(a, lambda v: triangular_solve(fr.filled, v), b, cfg,
                          method=FALLBACK, workers=workers)
        rep.attempts.append(first)
        rep.timings["abandoned_iterations"] = first.timings["iterations"]
    rep.fpa = fr.fpa
    rep.timings.update(_factor_timings(fr))
    return x, rep, fr


def solve(a: CSRMatrix, k: int, method: str = "auto", workers: int = 1, band_size: int | None = None,
          cfg: SolverConfig = SolverConfig(), b=None,
          pivot: PivotPolicy = PivotPolicy()) -> tuple[np.ndarray, SolveReport, FactorResult]:
    """Factor and solve with ``method`` in ``{"base", "iilu", "auto"}``."""
    if method == "auto":
        return solve_auto(a, k, workers, band_size, cfg, b, pivot)
    b = _rhs(a, b)
    if method == "base":
        fr = parallel_factor(a, k, workers, band_size, pivot)
        x, rep = bicgstab(a, lambda v: triangular_solve(fr.filled, v), b, cfg, method=BASE, workers=workers)
    elif method == "iilu":
        fr = parallel_factor(a, k, workers, band_size, pivot, with_inverse=True)
        pair = fr.inverse
        x, rep = bicgstab(a, lambda v: apply_iilu(pair, v, workers), b, cfg, method=IILU, workers=workers)
    else:
        raise ValueError(f"unknown method {method!r}")
    rep.fpa = fr.fpa
    rep.timings.update(_factor_timings(fr))
    return x, rep, fr
