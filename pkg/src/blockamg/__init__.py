"""Monolithic block algebraic multigrid for coupled 2x2 multiphysics systems.

Builds aggregation-based multigrid hierarchies per physics block, composes
block-diagonal grid transfers, keeps cross-coupling blocks on every coarse
level through blockwise Galerkin products, smooths with damped block
Gauss-Seidel, and drives everything with right-preconditioned GMRES.
"""

from .aggregation import (Aggregation, NodeGraph, aggregate_greedy, amalgamate,
                          clone_aggregation)
from .hierarchy import (Hierarchy, Level, SetupError, SetupParams,
                        apply_preconditioner, hierarchy_report,
                        setup_block_hierarchy, setup_scalar_hierarchy, vcycle)
from .krylov import GmresBreakdown, SolveStats, gmres
from .problems import (BuiltProblem, ProblemSpec, build_problem, convdiff2d,
                       coupled_mhd_like, coupled_mixed_resolution,
                       manufactured_rhs, poisson2d, saddle2d)
from .smoothers import (Ilu0Factors, PivotError, SmootherSpec, block_gs_sweep,
                        build_smoother, default_block_gs_spec, ilu0_apply,
                        ilu0_factor, point_sweep, schwarz_ilu0_factor,
                        smoother_as_iteration)
from .sparse import (BlockMatrix, BlockVector, CsrMatrix, DofMap, axpy,
                     block_apply, dot, matmat, merge_blocks, merge_vector,
                     norm2, split_monolithic, split_vector, spmv, stack_blocks,
                     transpose, triple_product_rap)
from .transfers import (BlockTransfer, TransferPair, block_diagonal_transfer,
                        restriction_from_prolongator, shared_transfer,
                        smooth_prolongator, tentative_prolongator)

__version__ = "0.1.0"
