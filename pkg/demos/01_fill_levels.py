# Levels of fill on a small arrow-ish matrix, and how k controls the pattern.

import numpy as np

from tpilu import CSRMatrix, symbolic_factor, symbolic_factor_k1

# lower arrow in the first column, a couple of upper entries
a = np.eye(8) * 4.0
a[1:, 0] = -1.0
a[0, 3] = a[2, 5] = a[5, 7] = -1.0
A = CSRMatrix.from_dense(a)


def show(p):
    grid = np.full((p.n, p.n), ".")
    for (i, j), lev in p.level_map().items():
        grid[i, j] = str(lev)
    for row in grid:
        print(" ".join(row))


for k in range(4):
    p = symbolic_factor(A, k)
    print(f"k={k}: {p.nnz} entries")
    show(p)
    print()

# the k=1 pattern can be built row by row with no dependence between rows
print("independent-row k=1 path agrees:", symbolic_factor_k1(A) == symbolic_factor(A, 1))

# at k >= n-1 nothing is dropped any more
full = symbolic_factor(A, A.n - 1)
print("full-level entries:", full.nnz, "max level:", full.levels.max())
