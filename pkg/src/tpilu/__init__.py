"""Task-parallel ILU(k) preconditioning with incomplete-inverse triangular
solves and a BiCGSTAB driver."""

__version__ = "0.1.0"

from .engine import BandPartition, FactorResult, parallel_factor, partition_bands, pipeline_simulate
from .inverse import IncompleteInversePair, apply_iilu, factor_with_inverse
from .numeric import FilledMatrix, FpaCounter, PivotPolicy, ZeroPivotError, numeric_factor, triangular_solve
from .solver import SolverConfig, SolveReport, bicgstab, solve, solve_auto
from .sparse import (
    CSRMatrix,
    MatrixMarketError,
    axpy,
    dot,
    gen_stencil_27pt,
    parse_matrix_market,
    read_matrix_market,
    spmv,
    write_matrix_market,
)
from .symbolic import FillPattern, symbolic_factor, symbolic_factor_k1
