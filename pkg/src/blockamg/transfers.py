"""Grid-transfer construction: tentative (piecewise-constant) prolongators per
physics block, optional prolongator smoothing, restrictions as transposes, and
composite block-diagonal transfer operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .aggregation import Aggregation
from .sparse import BlockMatrix, CsrMatrix, spmv, transpose

__all__ = [
    "TransferPair",
    "BlockTransfer",
    "tentative_prolongator",
    "smooth_prolongator",
    "default_smoothing_omega",
    "restriction_from_prolongator",
    "block_diagonal_transfer",
    "shared_transfer",
]


@dataclass
class TransferPair:
    """Prolongation (fine x coarse) and matching restriction (coarse x fine)."""

    P: CsrMatrix
    R: CsrMatrix

    def __post_init__(self):
        if self.R.n_rows != self.P.n_cols or self.R.n_cols != self.P.n_rows:
            raise ValueError(f"restriction {self.R.shape} does not match prolongation {self.P.shape}")
        col_counts = np.bincount(self.P.col_indices, minlength=self.P.n_cols)
        if np.any(col_counts == 0):
            raise ValueError("prolongator has an empty column (rank-deficient transfer)")

    @classmethod
    def from_prolongator(cls, P: CsrMatrix):
        return cls(P, restriction_from_prolongator(P))


@dataclass
class BlockTransfer:
    """Per-block transfer pairs forming a block-diagonal composite operator."""

    diag: List[TransferPair]

    def __post_init__(self):
        if not self.diag:
            raise ValueError("need at least one transfer pair")


def tentative_prolongator(agg: Aggregation, dofs_per_node: int = 1,
                          normalize: bool = False) -> CsrMatrix:
    """Piecewise-constant prolongator induced by an aggregation.

    Row (node v, dof d) holds a single entry in column (aggregate(v), dof d),
    node-major on both sides, so each solution component is interpolated as a
    constant over its aggregate. Entries are 1.0; with normalize=True each
    column is scaled to unit 2-norm instead.
    """
    k = int(dofs_per_node)
    if k < 1:
        raise ValueError("dofs_per_node must be >= 1")
    n_fine = agg.n_nodes * k
    cols = (agg.node_to_aggregate[:, None] * k + np.arange(k, dtype=np.int64)[None, :]).ravel()
    if normalize:
        sizes = agg.aggregate_sizes().astype(np.float64)
        vals = 1.0 / np.sqrt(sizes[agg.node_to_aggregate])
        vals = np.repeat(vals, k)
    else:
        vals = np.ones(n_fine)
    return CsrMatrix(n_fine, agg.n_aggregates * k,
                     np.arange(n_fine + 1, dtype=np.int64), cols, vals, validate=False)


def smooth_prolongator(A: CsrMatrix, P_hat: CsrMatrix, omega_sa: float) -> CsrMatrix:
    """One damped-Jacobi smoothing pass: P = (I - omega_sa * D^-1 A) @ P_hat."""
    if A.n_rows != A.n_cols:
        raise ValueError("smooth_prolongator expects a square operator")
    if A.n_rows != P_hat.n_rows:
        raise ValueError(f"operator is {A.shape} but tentative prolongator has {P_hat.n_rows} rows")
    d = A.diag()
    if np.any(d == 0.0):
        raise ValueError("smooth_prolongator: operator has a zero diagonal entry")
    if omega_sa == 0.0:
        return P_hat
    scaled = A.to_scipy().multiply((omega_sa / d)[:, None]).tocsr()
    out = (P_hat.to_scipy() - scaled @ P_hat.to_scipy()).tocsr()
    out.sort_indices()
    return CsrMatrix(P_hat.n_rows, P_hat.n_cols, out.indptr, out.indices, out.data, validate=False)


def default_smoothing_omega(A: CsrMatrix, iters: int = 10, seed: int = 0) -> float:
    """Classical SA damping 4/3 divided by a power-iteration estimate of rho(D^-1 A)."""
    d = A.diag()
    if np.any(d == 0.0):
        raise ValueError("default_smoothing_omega: operator has a zero diagonal entry")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.n_rows)
    x /= np.linalg.norm(x)
    rho = 1.0
    for _ in range(iters):
        y = spmv(A, x) / d
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        rho = ny
        x = y / ny
    return (4.0 / 3.0) / rho


def restriction_from_prolongator(P: CsrMatrix) -> CsrMatrix:
    """R = P^T."""
    return transpose(P)


def block_diagonal_transfer(pairs: Sequence[TransferPair]) -> Tuple[BlockMatrix, BlockMatrix]:
    """Compose per-block pairs into block-diagonal (P_block, R_block) operators."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one transfer pair")
    n = len(pairs)
    p_grid = [[pairs[i].P if i == j else None for j in range(n)] for i in range(n)]
    r_grid = [[pairs[i].R if i == j else None for j in range(n)] for i in range(n)]
    return BlockMatrix(p_grid), BlockMatrix(r_grid)


def shared_transfer(pair: TransferPair, n_blocks: int) -> BlockTransfer:
    """Reuse one pair for every block (requires co-located, equal-DoF blocks)."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    return BlockTransfer([pair] * n_blocks)
