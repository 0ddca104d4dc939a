# When the truncated inverses are a poor preconditioner the automatic driver
# gives up on them early and reuses the same factors for substitution solves.

import numpy as np

from tpilu import CSRMatrix, SolverConfig, ZeroPivotError, solve_auto, spmv

cfg = SolverConfig()  # window 10, growth 10
for seed in range(200):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 30))
    a = np.where(rng.random((n, n)) < 0.25, rng.uniform(-1, 1, (n, n)), 0.0)
    np.fill_diagonal(a, rng.uniform(0.2, 1.0, n) * rng.choice([-1.0, 1.0], n))
    A = CSRMatrix.from_dense(a)
    try:
        x, rep, fr = solve_auto(A, 0, cfg=cfg)
    except ZeroPivotError:
        continue
    if rep.attempts and rep.attempts[0].outcome == "failfast":
        break

first = rep.attempts[0]
print(f"seed {seed}, n = {n}")
print("first attempt:", first.method, first.outcome, "after", first.iterations, "iterations")
print("  residuals:", " ".join(f"{r:.2g}" for r in first.residual_history))
print("then:", rep.method, rep.outcome, "in", rep.iterations, "iterations")
b = spmv(A, np.ones(n))
print("true residual:", np.linalg.norm(b - a @ x) / np.linalg.norm(b))

# a diagonally dominant matrix keeps the inverse path
d = a + np.diag(np.abs(a).sum(axis=1) + 1)
x, rep, _ = solve_auto(CSRMatrix.from_dense(d), 0, cfg=cfg)
print("\ndominant variant:", rep.method, rep.outcome, "in", rep.iterations, "iterations")
