# Truncated inverses of L and U: exact when nothing is dropped, an
# approximation otherwise.  Applying them costs two sparse products.

import numpy as np

from tpilu import (
    CSRMatrix,
    apply_iilu,
    factor_with_inverse,
    gen_stencil_27pt,
    symbolic_factor,
    triangular_solve,
)

rng = np.random.default_rng(1)
n = 12
d = rng.uniform(-1, 1, (n, n)) + n * np.eye(n)
A = CSRMatrix.from_dense(d)
F, pair, fpa = factor_with_inverse(A, symbolic_factor(A, n))
L, U = F.lu_dense()
print("dense matrix, full level")
print("  |Linv - inv(L)| =", np.abs(pair.linv.toarray() - np.linalg.inv(L)).max())
print("  |Uinv - inv(U)| =", np.abs(pair.uinv.toarray() - np.linalg.inv(U)).max())
print("  ops: factor", fpa.factor, "Linv", fpa.linv, "Uinv", fpa.uinv)

# on the stencil the inverses live on the ILU pattern only
A = gen_stencil_27pt(12)
b = rng.standard_normal(A.n)
for k in (0, 1, 2):
    F, pair, fpa = factor_with_inverse(A, symbolic_factor(A, k))
    y_sub = triangular_solve(F, b)
    y_inv = apply_iilu(pair, b)
    rel = np.linalg.norm(y_inv - y_sub) / np.linalg.norm(y_sub)
    print(f"stencil k={k}: Linv nnz={pair.linv.nnz}, Uinv nnz={pair.uinv.nnz}, "
          f"|inverse apply - substitution| / |substitution| = {rel:.2e}")
