import numpy as np
import pytest

from oracles import masked_ilu, random_dense_nonsingular, random_sparse, split_lu
from tpilu import (
    CSRMatrix,
    PivotPolicy,
    ZeroPivotError,
    numeric_factor,
    symbolic_factor,
    triangular_solve,
)


def factor(a, k):
    return numeric_factor(a, symbolic_factor(a, k))


def test_diagonal():
    f, fpa = factor(CSRMatrix.from_dense(np.diag([2.0, 3.0])), 2)
    lower, upper = f.lu_dense()
    assert np.array_equal(lower, np.eye(2))
    assert np.array_equal(upper, np.diag([2.0, 3.0]))
    assert fpa.factor == 0


def test_two_by_two():
    f, fpa = factor(CSRMatrix.from_dense([[4.0, 3.0], [6.0, 3.0]]), 0)
    assert f.values.tolist() == [4.0, 3.0, 1.5, -1.5]
    # one divide for l21, one multiply for u22
    assert fpa.factor == 2
    assert fpa.factor_div == 1 and fpa.factor_flops == 3
    assert triangular_solve(f, [7.0, 9.0]).tolist() == [1.0, 1.0]


def test_identity_solve(rng):
    f, _ = factor(CSRMatrix.identity(5), 1)
    b = rng.standard_normal(5)
    assert np.array_equal(triangular_solve(f, b), b)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("k", [0, 1, 2])
def test_matches_masked_dense_elimination(seed, k):
    a = random_sparse(seed, 40, density=0.08)
    f, _ = factor(a, k)
    want = masked_ilu(a, f.pattern.positions())
    full = np.zeros((a.n, a.n))
    rows = np.repeat(np.arange(a.n), np.diff(f.indptr))
    full[rows, f.indices] = f.values
    assert np.max(np.abs(full - want)) <= 1e-12 * np.max(np.abs(want))


@pytest.mark.parametrize("seed", range(20))
def test_full_level_reproduces_a(seed):
    n = 5 + seed % 26
    a = random_dense_nonsingular(seed, n)
    a[np.abs(a) < 0.3] = 0.0
    np.fill_diagonal(a, n)
    m = CSRMatrix.from_dense(a)
    f, _ = factor(m, n)
    lower, upper = f.lu_dense()
    assert np.max(np.abs(lower @ upper - a)) <= 1e-12 * np.max(np.abs(a))


def test_full_level_solve_20(rng):
    a = random_dense_nonsingular(3, 20)
    f, _ = factor(CSRMatrix.from_dense(a), 19)
    b = rng.standard_normal(20)
    y = triangular_solve(f, b)
    lower, upper = f.lu_dense()
    assert np.linalg.norm(lower @ upper @ y - b) <= 1e-12 * np.linalg.norm(b)
    assert np.allclose(triangular_solve(f, lower @ upper @ b), b, rtol=0, atol=1e-12)


def test_pattern_preserved(m200):
    p = symbolic_factor(m200, 2)
    f, _ = numeric_factor(m200, p)
    assert f.pattern == p


def test_deterministic(m200):
    p = symbolic_factor(m200, 2)
    f1, c1 = numeric_factor(m200, p)
    f2, c2 = numeric_factor(m200, p)
    assert f1 == f2 and c1 == c2


def test_zero_pivot_names_row():
    a = CSRMatrix.from_dense([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(ZeroPivotError) as info:
        factor(a, 0)
    assert info.value.row == 1
    assert "row 1" in str(info.value)


def test_structural_zero_diagonal_breaks_down():
    a = CSRMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ZeroPivotError) as info:
        factor(a, 0)
    assert info.value.row == 0


def test_perturbation_recovers():
    a = CSRMatrix.from_dense([[1.0, 1.0, 0.0], [1.0, 1.0, 2.0], [0.0, 3.0, 1.0]])
    f, _ = numeric_factor(a, symbolic_factor(a, 0), PivotPolicy(perturb=True, eps=1e-6))
    u11 = f.values[f.diag[1]]
    assert u11 == pytest.approx(2e-6)
    assert np.all(np.isfinite(f.values))


def test_dimension_mismatch():
    f, _ = factor(CSRMatrix.identity(3), 0)
    with pytest.raises(ValueError):
        triangular_solve(f, np.ones(4))
    with pytest.raises(ValueError):
        numeric_factor(CSRMatrix.identity(4), f.pattern)


def test_flop_count_matches_brute_force(m200):
    # count every divide, multiply and subtract of a masked dense elimination
    p = symbolic_factor(m200, 2)
    _, fpa = numeric_factor(m200, p)
    lm = p.positions()
    n = m200.n
    ops = 0
    for j in range(n):
        for i in range(j):
            if (j, i) in lm:
                ops += 1
                ops += 2 * sum(1 for t in range(i + 1, n) if (j, t) in lm and (i, t) in lm)
    assert fpa.factor_flops == ops
