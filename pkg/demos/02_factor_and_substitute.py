# Numeric ILU on a fixed pattern, the substitution solve, and the op counter.

import numpy as np

from tpilu import CSRMatrix, numeric_factor, symbolic_factor, triangular_solve

A = CSRMatrix.from_dense([[4.0, 3.0], [6.0, 3.0]])
F, fpa = numeric_factor(A, symbolic_factor(A, 0))
L, U = F.lu_dense()
print("L =\n", L)
print("U =\n", U)
print("multiplies + divides:", fpa.factor)       # 2: l21 = 6/4, u22 = 3 - 1.5*3
print("with subtractions:   ", fpa.factor_flops)  # 3
print("solve (7, 9):", triangular_solve(F, [7.0, 9.0]))

# A sparser case where ILU(0) drops fill and is no longer exact
rng = np.random.default_rng(0)
n = 30
d = np.where(rng.random((n, n)) < 0.15, rng.uniform(-1, 1, (n, n)), 0.0)
d += np.diag(np.abs(d).sum(axis=1) + 1)
A = CSRMatrix.from_dense(d)
for k in (0, 1, 2, n - 1):
    F, fpa = numeric_factor(A, symbolic_factor(A, k))
    L, U = F.lu_dense()
    err = np.abs(L @ U - d).max()
    print(f"k={k:>2}  entries={F.nnz:>4}  ops={fpa.factor:>6}  max|LU - A| = {err:.2e}")
