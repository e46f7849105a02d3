"""Multigrid hierarchy setup and application.

Two staged setup pipelines build level operators: a scalar one (amalgamate ->
aggregate -> tentative P [-> smoothed P] -> R = P^T -> RAP) and a 2x2 block
one that runs the per-block stages separately, optionally cloning block 0's
aggregation or sharing its transfers, then composes block-diagonal transfers
and forms every coarse block by a blockwise Galerkin product. Cross-coupling
blocks therefore survive on all levels whenever the fine coupling is non-zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.linalg as _la

from .aggregation import Aggregation, aggregate_greedy, amalgamate, clone_aggregation
from .smoothers import SmootherSpec, build_smoother
from .sparse import (BlockMatrix, BlockVector, CsrMatrix, stack_blocks,
                     transpose, triple_product_rap)
from .transfers import (TransferPair, block_diagonal_transfer, default_smoothing_omega,
                        shared_transfer, smooth_prolongator, tentative_prolongator)

__all__ = [
    "SetupError",
    "SetupParams",
    "Level",
    "Hierarchy",
    "setup_scalar_hierarchy",
    "setup_block_hierarchy",
    "vcycle",
    "apply_preconditioner",
    "hierarchy_report",
]

Operator = Union[CsrMatrix, BlockMatrix]


class SetupError(RuntimeError):
    """Hierarchy construction failed (degenerate aggregation, singular coarse solve, ...)."""


@dataclass(frozen=True)
class SetupParams:
    """Configuration of the multigrid setup pipelines.

    transfer selects tentative (plain aggregation) or smoothed prolongators;
    omega_sa=None picks the classical 4/3 / rho(D^-1 A) damping per level.
    clone_aggregates / share_transfers apply to the block pipeline only and
    require co-located blocks. The V-cycle applies the configured smoother
    once before and once after coarse-grid correction on every level.
    """

    max_levels: int = 10
    coarse_size: int = 100
    target_size: int = 3
    transfer: str = "tentative"
    clone_aggregates: bool = False
    share_transfers: bool = False
    smoother: SmootherSpec = field(default_factory=lambda: SmootherSpec("gauss_seidel"))
    drop_tol: float = 0.0
    dofs_per_node: int = 1
    block_dofs_per_node: Tuple[int, int] = (1, 1)
    normalize_tentative: bool = False
    omega_sa: Optional[float] = None

    def __post_init__(self):
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.coarse_size < 1:
            raise ValueError("coarse_size must be >= 1")
        if self.transfer not in ("tentative", "smoothed"):
            raise ValueError(f"transfer must be 'tentative' or 'smoothed', got {self.transfer!r}")


@dataclass
class Level:
    """One hierarchy level: operator, transfers down, and smoother state.

    P, R, smoother and aggregations are absent on the coarsest level.
    """

    A: Operator
    level_index: int
    P: Optional[Operator] = None
    R: Optional[Operator] = None
    smoother: object = None
    aggregations: Optional[Tuple[Aggregation, ...]] = None

    @property
    def dim(self):
        return self.A.shape[0]


class Hierarchy:
    """Built multigrid hierarchy with a dense-LU coarsest solve.

    Immutable after setup; apply-phase calls on distinct vectors are safe to
    run concurrently.
    """

    def __init__(self, levels: List[Level], params: SetupParams):
        if not levels:
            raise ValueError("hierarchy needs at least one level")
        self.levels = levels
        self.params = params
        self.is_block = isinstance(levels[0].A, BlockMatrix)
        coarse = levels[-1].A
        merged = stack_blocks(coarse) if isinstance(coarse, BlockMatrix) else coarse
        try:
            self._coarse_lu = _la.lu_factor(merged.to_dense())
        except Exception as e:  # scipy raises on NaN/size problems
            raise SetupError(f"coarse direct solve failed at level {levels[-1].level_index}: {e}") from e
        du = np.abs(np.diag(self._coarse_lu[0]))
        if not np.all(np.isfinite(du)) or (len(du) and du.min() < 1e-12 * max(du.max(), 1.0)):
            raise SetupError(
                f"coarsest operator is singular at level {levels[-1].level_index} "
                f"(smallest LU pivot {du.min() if len(du) else 0.0:.3e})")

    @property
    def n_levels(self):
        return len(self.levels)

    def level_dims(self):
        return [lvl.dim for lvl in self.levels]

    def operator_complexity(self):
        nnz0 = self.levels[0].A.nnz
        return sum(lvl.A.nnz for lvl in self.levels) / nnz0 if nnz0 else 1.0

    def coarse_solve(self, b):
        if isinstance(b, BlockVector):
            flat = _la.lu_solve(self._coarse_lu, b.to_array())
            sizes = b.sizes
            offs = np.concatenate([[0], np.cumsum(sizes)])
            return BlockVector([flat[offs[i]:offs[i + 1]] for i in range(len(sizes))])
        return _la.lu_solve(self._coarse_lu, b)

    def solve_direct(self, b):
        """Exact solve with the coarsest factorization (only sensible for 1 level)."""
        return self.coarse_solve(b)


def _zeros_like_vec(A: Operator):
    if isinstance(A, BlockMatrix):
        return BlockVector.zeros(A.row_sizes)
    return np.zeros(A.n_rows)


def _build_level_smoother(A: Operator, spec: SmootherSpec):
    if isinstance(A, BlockMatrix) and spec.kind != "block_gauss_seidel":
        raise SetupError(f"block levels need a block_gauss_seidel smoother, got {spec.kind!r}")
    if isinstance(A, CsrMatrix) and spec.kind == "block_gauss_seidel":
        raise SetupError("block_gauss_seidel smoother cannot run on a scalar level")
    return build_smoother(A, spec)


def _scalar_transfer(A: CsrMatrix, agg: Aggregation, dofs_per_node: int,
                     p: SetupParams) -> TransferPair:
    P = tentative_prolongator(agg, dofs_per_node, normalize=p.normalize_tentative)
    if p.transfer == "smoothed":
        omega = p.omega_sa if p.omega_sa is not None else default_smoothing_omega(A)
        P = smooth_prolongator(A, P, omega)
    return TransferPair(P, transpose(P))


def setup_scalar_hierarchy(A: CsrMatrix, p: SetupParams) -> Hierarchy:
    """Repeatedly coarsen a scalar operator until it is small enough to factor."""
    if A.n_rows != A.n_cols:
        raise ValueError("setup_scalar_hierarchy expects a square operator")
    levels = [Level(A, 0)]
    while len(levels) < p.max_levels and levels[-1].dim > p.coarse_size:
        lvl = levels[-1]
        try:
            g = amalgamate(lvl.A, p.dofs_per_node, "interleaved", p.drop_tol)
            agg = aggregate_greedy(g, p.target_size)
            if agg.n_aggregates >= g.n_nodes:
                break  # coarsening stalled; level dims must strictly decrease
            pair = _scalar_transfer(lvl.A, agg, p.dofs_per_node, p)
            coarse = triple_product_rap(pair.R, lvl.A, pair.P)
        except (ValueError, ArithmeticError) as e:
            raise SetupError(f"setup failed at level {lvl.level_index}: {e}") from e
        lvl.P, lvl.R = pair.P, pair.R
        lvl.aggregations = (agg,)
        lvl.smoother = _build_level_smoother(lvl.A, p.smoother)
        levels.append(Level(coarse, lvl.level_index + 1))
    return Hierarchy(levels, p)


def _block_transfers(A: BlockMatrix, p: SetupParams):
    """Per-block aggregations and transfer pairs for one level of the 2x2 pipeline."""
    k0, k1 = p.block_dofs_per_node
    a00, a11 = A.blocks[0][0], A.blocks[1][1]
    if a00 is None or a11 is None:
        raise SetupError("block pipeline needs both diagonal blocks present")
    g0 = amalgamate(a00, k0, "interleaved", p.drop_tol)
    agg0 = aggregate_greedy(g0, p.target_size)
    pair0 = _scalar_transfer(a00, agg0, k0, p)

    n_nodes1 = a11.n_rows // k1
    if p.share_transfers:
        if a11.n_rows != pair0.P.n_rows:
            raise SetupError(
                f"share_transfers needs equal block dimensions, got {pair0.P.n_rows} vs {a11.n_rows}")
        pairs = shared_transfer(pair0, 2).diag
        return (agg0, agg0), pairs
    if p.clone_aggregates:
        agg1 = clone_aggregation(agg0, n_nodes1)
    else:
        g1 = amalgamate(a11, k1, "interleaved", p.drop_tol)
        agg1 = aggregate_greedy(g1, p.target_size)
    pair1 = _scalar_transfer(a11, agg1, k1, p)
    return (agg0, agg1), [pair0, pair1]


def setup_block_hierarchy(A: BlockMatrix, p: SetupParams) -> Hierarchy:
    """Build a monolithic hierarchy for a 2x2 block operator.

    Aggregation is always driven by block (0,0)'s graph first; block (1,1)
    either aggregates independently or reuses a clone (co-located blocks
    only). Every coarse block, cross couplings included, is the Galerkin
    product R_ii A_ij P_jj of the fine block.
    """
    if A.n_block_rows != 2 or A.n_block_cols != 2:
        raise ValueError("setup_block_hierarchy expects a 2x2 block operator")
    if not A.is_square_layout():
        raise ValueError("block operator must be square")
    levels = [Level(A, 0)]
    while len(levels) < p.max_levels and levels[-1].dim > p.coarse_size:
        lvl = levels[-1]
        cur: BlockMatrix = lvl.A
        try:
            aggs, pairs = _block_transfers(cur, p)
            coarse_sizes = [pairs[0].P.n_cols, pairs[1].P.n_cols]
            if sum(coarse_sizes) >= cur.shape[0]:
                break
            p_block, r_block = block_diagonal_transfer(pairs)
            grid = [[None, None], [None, None]]
            for i in range(2):
                for j in range(2):
                    blk = cur.blocks[i][j]
                    if blk is not None:
                        grid[i][j] = triple_product_rap(pairs[i].R, blk, pairs[j].P)
            coarse = BlockMatrix(grid, row_sizes=coarse_sizes, col_sizes=coarse_sizes)
        except (ValueError, ArithmeticError) as e:
            raise SetupError(f"setup failed at level {lvl.level_index}: {e}") from e
        lvl.P, lvl.R = p_block, r_block
        lvl.aggregations = aggs
        lvl.smoother = _build_level_smoother(cur, p.smoother)
        levels.append(Level(coarse, lvl.level_index + 1))
    return Hierarchy(levels, p)


def _cycle(h: Hierarchy, idx: int, b, x):
    lvl = h.levels[idx]
    if idx == h.n_levels - 1:
        return h.coarse_solve(b)
    x = lvl.smoother.apply(b, x)
    r = b - lvl.A.matvec(x)
    rc = lvl.R.matvec(r)
    ec = _cycle(h, idx + 1, rc, _zeros_like_vec(h.levels[idx + 1].A))
    x = x + lvl.P.matvec(ec)
    return lvl.smoother.apply(b, x)


def vcycle(h: Hierarchy, b, x_in=None):
    """One V-cycle: pre-smooth, restrict, recurse, correct, post-smooth."""
    if x_in is None:
        x_in = _zeros_like_vec(h.levels[0].A)
    return _cycle(h, 0, b, x_in)


def apply_preconditioner(h: Hierarchy, r):
    """One V-cycle from a zero initial guess; a fixed linear operator in r."""
    return _cycle(h, 0, r, _zeros_like_vec(h.levels[0].A))


def hierarchy_report(h: Hierarchy) -> str:
    """Plain-text per-level summary: dimensions, nnz per block, complexity."""
    lines = []
    kind = "block 2x2" if h.is_block else "scalar"
    lines.append(f"multigrid hierarchy: {h.n_levels} level(s), {kind} operators")
    for lvl in h.levels:
        A = lvl.A
        if isinstance(A, BlockMatrix):
            dims = "x".join(str(s) for s in A.row_sizes)
            nnz = ", ".join(
                f"A{i}{j}={A.blocks[i][j].nnz if A.blocks[i][j] is not None else 0}"
                for i in range(2) for j in range(2))
            lines.append(f"  level {lvl.level_index}: block dims [{dims}] "
                         f"(total {A.shape[0]}), nnz {nnz}")
        else:
            lines.append(f"  level {lvl.level_index}: dim {A.n_rows}, nnz {A.nnz}")
    lines.append(f"  operator complexity: {h.operator_complexity():.4f}")
    return "\n".join(lines)
