# BiCGSTAB on the 27-point stencil, b = A*1, with both preconditioners.

import numpy as np

from tpilu import SolverConfig, gen_stencil_27pt, solve

cfg = SolverConfig(rtol=1e-8)
A = gen_stencil_27pt(40)
print("n =", A.n, "nnz =", A.nnz)

print(f"{'method':<20}{'k':>2}{'iters':>7}{'true res':>11}{'entries':>10}{'ops':>12}{'factor s':>10}{'iter s':>8}")
for method in ("base", "iilu"):
    for k in (0, 1):
        x, rep, fr = solve(A, k, method, cfg=cfg)
        t_pre = sum(v for key, v in rep.timings.items() if key.startswith("precond_"))
        print(f"{rep.method:<20}{k:>2}{rep.iterations:>7}{rep.true_residual:>11.1e}"
              f"{fr.pattern.nnz:>10}{rep.fpa.total:>12}{t_pre:>10.2f}{rep.timings['iterations']:>8.2f}")
        assert np.abs(x - 1).max() < 1e-5

# residual history of the base ILU(0) run
x, rep, _ = solve(A, 0, "base", cfg=cfg)
print("\nbase ILU(0) relative residuals:")
print(" ".join(f"{r:.1e}" for r in rep.residual_history))
