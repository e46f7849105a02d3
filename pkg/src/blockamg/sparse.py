"""Sparse CSR matrices, dense/blocked vectors and the linear-algebra kernels
everything else is built on.

All scalars are float64 and all index arrays int64. Values are frozen after
construction; every operation returns a new object, so shared instances are
safe to use from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as _sp

__all__ = [
    "CsrMatrix",
    "BlockVector",
    "BlockMatrix",
    "DofMap",
    "spmv",
    "transpose",
    "matmat",
    "triple_product_rap",
    "drop_small",
    "block_apply",
    "split_monolithic",
    "merge_blocks",
    "stack_blocks",
    "split_vector",
    "merge_vector",
    "norm2",
    "dot",
    "axpy",
]


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out.base is None and out is not arr:
        out.setflags(write=False)
        return out
    out = out.copy()
    out.setflags(write=False)
    return out


class CsrMatrix:
    """Immutable sparse matrix in compressed-row form.

    Stored entries have strictly increasing column indices within each row and
    no (row, col) duplicates. Explicitly stored zero values are legal; they are
    part of the sparsity pattern until removed with :func:`drop_small`.
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values", "_scipy")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values, validate=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = _frozen(row_offsets, np.int64)
        self.col_indices = _frozen(col_indices, np.int64)
        self.values = _frozen(values, np.float64)
        self._scipy = None
        if validate:
            self._validate()

    def _validate(self):
        ro, ci, v = self.row_offsets, self.col_indices, self.values
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative matrix dimension")
        if ro.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if ro[0] != 0 or ro[-1] != len(ci) or len(ci) != len(v):
            raise ValueError("row_offsets endpoints inconsistent with nnz")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if len(ci) > 1:
            inc = np.diff(ci) > 0
            row_start = np.zeros(len(ci), dtype=bool)
            starts = ro[1:-1]
            row_start[starts[starts < len(ci)]] = True
            if not np.all(inc | row_start[1:]):
                raise ValueError("column indices must be strictly increasing within each row")

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        """Build from coordinate triplets; duplicate entries are summed."""
        m = _sp.coo_matrix(
            (np.asarray(vals, dtype=np.float64),
             (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(n_rows, n_cols),
        ).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(n_rows, n_cols, m.indptr, m.indices, m.data, validate=False)

    @classmethod
    def from_scipy(cls, m):
        m = m.tocsr().copy()
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data, validate=False)

    @classmethod
    def from_dense(cls, arr, keep_zeros=False):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("from_dense expects a 2-d array")
        if keep_zeros:
            n_rows, n_cols = arr.shape
            rows, cols = np.indices(arr.shape)
            return cls.from_coo(n_rows, n_cols, rows.ravel(), cols.ravel(), arr.ravel())
        return cls.from_scipy(_sp.csr_matrix(arr))

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n), validate=False)

    @classmethod
    def zeros(cls, n_rows, n_cols):
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64), [], [], validate=False)

    @classmethod
    def diagonal(cls, diag):
        diag = np.asarray(diag, dtype=np.float64)
        n = len(diag)
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, diag, validate=False)

    # -- views -------------------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def to_scipy(self):
        """scipy.sparse.csr_matrix sharing this matrix's (read-only) arrays."""
        if self._scipy is None:
            m = _sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.n_rows, self.n_cols), copy=False)
            m.has_sorted_indices = True
            m.has_canonical_format = True
            self._scipy = m
        return self._scipy

    def to_dense(self):
        return np.asarray(self.to_scipy().todense())

    def diag(self):
        """Main diagonal as a dense vector (missing entries are 0)."""
        return self.to_scipy().diagonal().astype(np.float64)

    def matvec(self, x):
        return spmv(self, x)

    def pattern(self):
        """Set of stored (row, col) positions."""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        return set(zip(rows.tolist(), self.col_indices.tolist()))

    def same_values(self, other, tol=0.0):
        """True if both matrices store the same pattern with values within tol."""
        if self.shape != other.shape or self.nnz != other.nnz:
            return False
        if not (np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)):
            return False
        if tol == 0.0:
            return bool(np.array_equal(self.values, other.values))
        return bool(np.all(np.abs(self.values - other.values) <= tol))

    def __repr__(self):
        return f"CsrMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


# -- scalar-matrix kernels --------------------------------------------------


def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product A @ x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise ValueError(f"spmv: vector of length {x.shape} does not match {A.n_cols} columns")
    return A.to_scipy() @ x


def transpose(A: CsrMatrix) -> CsrMatrix:
    """Transpose, returned in canonical CSR form. Values move bitwise."""
    m = A.to_scipy().T.tocsr()
    m.sort_indices()
    return CsrMatrix(A.n_cols, A.n_rows, m.indptr, m.indices, m.data, validate=False)


def matmat(A: CsrMatrix, B: CsrMatrix) -> CsrMatrix:
    """Sparse product A @ B.

    Entries that cancel numerically are kept as explicit zeros so that the
    result's pattern is the structural product; use :func:`drop_small` for an
    explicit dropping pass.
    """
    if A.n_cols != B.n_rows:
        raise ValueError(f"matmat: inner dimensions differ ({A.n_cols} vs {B.n_rows})")
    m = A.to_scipy() @ B.to_scipy()
    m = m.tocsr()
    m.sort_indices()
    return CsrMatrix(A.n_rows, B.n_cols, m.indptr, m.indices, m.data, validate=False)


def triple_product_rap(R: CsrMatrix, A: CsrMatrix, P: CsrMatrix) -> CsrMatrix:
    """Galerkin triple product R @ A @ P."""
    if R.n_cols != A.n_rows:
        raise ValueError(f"triple_product_rap: R has {R.n_cols} columns but A has {A.n_rows} rows")
    if A.n_cols != P.n_rows:
        raise ValueError(f"triple_product_rap: A has {A.n_cols} columns but P has {P.n_rows} rows")
    return matmat(matmat(R, A), P)


def drop_small(A: CsrMatrix, tol: float = 0.0) -> CsrMatrix:
    """Remove stored entries with |value| <= tol (tol=0 removes explicit zeros)."""
    keep = np.abs(A.values) > tol
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_offsets))
    return CsrMatrix.from_coo(A.n_rows, A.n_cols, rows[keep], A.col_indices[keep], A.values[keep])


# -- vectors -----------------------------------------------------------------


class BlockVector:
    """Ordered list of dense vectors matching a BlockMatrix row layout."""

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable[np.ndarray]):
        self.blocks = [np.asarray(b, dtype=np.float64) for b in blocks]

    @classmethod
    def zeros(cls, sizes: Sequence[int]):
        return cls([np.zeros(s) for s in sizes])

    @property
    def sizes(self):
        return [len(b) for b in self.blocks]

    def copy(self):
        return BlockVector([b.copy() for b in self.blocks])

    def to_array(self):
        return np.concatenate(self.blocks) if self.blocks else np.zeros(0)

    def __len__(self):
        return sum(len(b) for b in self.blocks)

    def __add__(self, other):
        return BlockVector([a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        return BlockVector([a - b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, alpha):
        return BlockVector([alpha * b for b in self.blocks])

    __rmul__ = __mul__

    def __repr__(self):
        return f"BlockVector(sizes={self.sizes})"


Vector = Union[np.ndarray, BlockVector]


def norm2(x: Vector) -> float:
    if isinstance(x, BlockVector):
        return float(np.sqrt(sum(float(b @ b) for b in x.blocks)))
    return float(np.linalg.norm(x))


def dot(x: Vector, y: Vector) -> float:
    if isinstance(x, BlockVector):
        return float(sum(float(a @ b) for a, b in zip(x.blocks, y.blocks)))
    return float(np.dot(x, y))


def axpy(alpha: float, x: Vector, y: Vector) -> Vector:
    """alpha * x + y, without mutating either input."""
    if isinstance(x, BlockVector):
        return BlockVector([alpha * a + b for a, b in zip(x.blocks, y.blocks)])
    return alpha * x + y


# -- block matrices ----------------------------------------------------------


class BlockMatrix:
    """N x N grid of optional CsrMatrix blocks; an absent block is zero.

    Absent blocks are stored as None and never materialized.
    """

    __slots__ = ("n_block_rows", "n_block_cols", "blocks", "row_sizes", "col_sizes")

    def __init__(self, blocks, row_sizes=None, col_sizes=None):
        self.blocks = [list(row) for row in blocks]
        self.n_block_rows = len(self.blocks)
        self.n_block_cols = len(self.blocks[0]) if self.blocks else 0
        if any(len(row) != self.n_block_cols for row in self.blocks):
            raise ValueError("ragged block grid")
        self.row_sizes = list(row_sizes) if row_sizes is not None else self._infer_sizes(rows=True)
        self.col_sizes = list(col_sizes) if col_sizes is not None else self._infer_sizes(rows=False)
        self._check_shapes()

    def _infer_sizes(self, rows):
        n_outer = self.n_block_rows if rows else self.n_block_cols
        sizes = [None] * n_outer
        for i in range(self.n_block_rows):
            for j in range(self.n_block_cols):
                b = self.blocks[i][j]
                if b is None:
                    continue
                k = i if rows else j
                s = b.n_rows if rows else b.n_cols
                if sizes[k] is None:
                    sizes[k] = s
        if any(s is None for s in sizes):
            raise ValueError("cannot infer block sizes: a block row/column has no present block "
                             "(pass row_sizes/col_sizes explicitly)")
        return sizes

    def _check_shapes(self):
        for i in range(self.n_block_rows):
            for j in range(self.n_block_cols):
                b = self.blocks[i][j]
                if b is None:
                    continue
                want = (self.row_sizes[i], self.col_sizes[j])
                if b.shape != want:
                    raise ValueError(f"block ({i},{j}) has shape {b.shape}, expected {want}")

    @property
    def shape(self):
        return (sum(self.row_sizes), sum(self.col_sizes))

    @property
    def nnz(self):
        return sum(b.nnz for row in self.blocks for b in row if b is not None)

    def block(self, i, j) -> Optional[CsrMatrix]:
        return self.blocks[i][j]

    def is_square_layout(self):
        return self.n_block_rows == self.n_block_cols and self.row_sizes == self.col_sizes

    def matvec(self, x: BlockVector) -> BlockVector:
        return block_apply(self, x)

    def __repr__(self):
        present = [(i, j) for i in range(self.n_block_rows)
                   for j in range(self.n_block_cols) if self.blocks[i][j] is not None]
        return (f"BlockMatrix({self.n_block_rows}x{self.n_block_cols} blocks, "
                f"rows={self.row_sizes}, cols={self.col_sizes}, present={present})")


def block_apply(A: BlockMatrix, x: BlockVector) -> BlockVector:
    """y_i = sum_j A_ij @ x_j, absent blocks contributing zero."""
    if x.sizes != A.col_sizes:
        raise ValueError(f"block_apply: vector sizes {x.sizes} do not match columns {A.col_sizes}")
    out = [np.zeros(s) for s in A.row_sizes]
    for i in range(A.n_block_rows):
        for j in range(A.n_block_cols):
            b = A.blocks[i][j]
            if b is not None:
                out[i] += b.to_scipy() @ x.blocks[j]
    return BlockVector(out)


# -- DoF maps and monolithic <-> block conversion ----------------------------


@dataclass(frozen=True)
class DofMap:
    """Assignment of co-located nodal DoFs to physics blocks.

    Each node carries dofs_per_node_per_block[b] unknowns of block b. Within a
    block, local DoFs are node-major (node v, dof d -> v*k_b + d). The layout
    fixes the global ordering: 'interleaved' keeps all DoFs of one node
    adjacent, 'stacked' keeps all DoFs of one block adjacent.
    """

    n_nodes: int
    dofs_per_node_per_block: tuple
    layout: str = "interleaved"

    def __post_init__(self):
        if self.layout not in ("interleaved", "stacked"):
            raise ValueError(f"unknown layout {self.layout!r}")
        object.__setattr__(self, "dofs_per_node_per_block",
                           tuple(int(k) for k in self.dofs_per_node_per_block))
        if any(k < 1 for k in self.dofs_per_node_per_block):
            raise ValueError("dofs per node must be >= 1")

    @property
    def n_blocks(self):
        return len(self.dofs_per_node_per_block)

    @property
    def block_sizes(self):
        return [self.n_nodes * k for k in self.dofs_per_node_per_block]

    @property
    def total_dofs(self):
        return self.n_nodes * sum(self.dofs_per_node_per_block)

    def global_indices(self, b: int) -> np.ndarray:
        """Global DoF ids of block b's local DoFs, in local (node-major) order."""
        ks = self.dofs_per_node_per_block
        k = ks[b]
        nodes = np.arange(self.n_nodes, dtype=np.int64)
        if self.layout == "interleaved":
            K = sum(ks)
            off = sum(ks[:b])
            return (nodes[:, None] * K + off + np.arange(k, dtype=np.int64)[None, :]).ravel()
        base = self.n_nodes * sum(ks[:b])
        return base + np.arange(self.n_nodes * k, dtype=np.int64)


def _inverse_maps(dof_map: DofMap):
    total = dof_map.total_dofs
    g2b = np.empty(total, dtype=np.int64)
    g2l = np.empty(total, dtype=np.int64)
    for b in range(dof_map.n_blocks):
        g = dof_map.global_indices(b)
        g2b[g] = b
        g2l[g] = np.arange(len(g), dtype=np.int64)
    return g2b, g2l


def split_monolithic(A: CsrMatrix, dof_map: DofMap) -> BlockMatrix:
    """Partition a square matrix into blocks according to a DoF map.

    Every stored entry of A lands in exactly one block, reindexed to that
    block's local numbering; blocks that receive no entries are absent.
    """
    total = dof_map.total_dofs
    if A.n_rows != total or A.n_cols != total:
        raise ValueError(f"split_monolithic: matrix is {A.shape} but map has {total} DoFs")
    g2b, g2l = _inverse_maps(dof_map)
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_offsets))
    cols = A.col_indices
    rb, lr = g2b[rows], g2l[rows]
    cb, lc = g2b[cols], g2l[cols]
    nb = dof_map.n_blocks
    sizes = dof_map.block_sizes
    grid = []
    for i in range(nb):
        row = []
        for j in range(nb):
            mask = (rb == i) & (cb == j)
            if not mask.any():
                row.append(None)
                continue
            row.append(CsrMatrix.from_coo(sizes[i], sizes[j],
                                          lr[mask], lc[mask], A.values[mask]))
        grid.append(row)
    return BlockMatrix(grid, row_sizes=sizes, col_sizes=sizes)


def merge_blocks(A: BlockMatrix, dof_map: DofMap) -> CsrMatrix:
    """Assemble a monolithic matrix from blocks in the map's global ordering.

    Inverse of split_monolithic: round-trips exactly, explicit zeros included.
    """
    sizes = dof_map.block_sizes
    if A.row_sizes != sizes or A.col_sizes != sizes:
        raise ValueError(f"merge_blocks: block sizes {A.row_sizes}/{A.col_sizes} do not match map {sizes}")
    total = dof_map.total_dofs
    gmaps = [dof_map.global_indices(b) for b in range(dof_map.n_blocks)]
    rows, cols, vals = [], [], []
    for i in range(A.n_block_rows):
        for j in range(A.n_block_cols):
            b = A.blocks[i][j]
            if b is None:
                continue
            local_rows = np.repeat(np.arange(b.n_rows), np.diff(b.row_offsets))
            rows.append(gmaps[i][local_rows])
            cols.append(gmaps[j][b.col_indices])
            vals.append(b.values)
    if not rows:
        return CsrMatrix.zeros(total, total)
    return CsrMatrix.from_coo(total, total,
                              np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def stack_blocks(A: BlockMatrix) -> CsrMatrix:
    """Concatenate blocks into one matrix ordered block row by block row.

    Unlike merge_blocks this needs no DoF map, so it also covers blocks with
    unequal node counts (mixed discretizations, coarse levels).
    """
    row_off = np.concatenate([[0], np.cumsum(A.row_sizes)])
    col_off = np.concatenate([[0], np.cumsum(A.col_sizes)])
    rows, cols, vals = [], [], []
    for i in range(A.n_block_rows):
        for j in range(A.n_block_cols):
            b = A.blocks[i][j]
            if b is None:
                continue
            local_rows = np.repeat(np.arange(b.n_rows), np.diff(b.row_offsets))
            rows.append(local_rows + row_off[i])
            cols.append(b.col_indices + col_off[j])
            vals.append(b.values)
    n, m = int(row_off[-1]), int(col_off[-1])
    if not rows:
        return CsrMatrix.zeros(n, m)
    return CsrMatrix.from_coo(n, m, np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals))


def split_vector(x: np.ndarray, dof_map: DofMap) -> BlockVector:
    """Split a monolithic vector into per-block vectors per the DoF map."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) != dof_map.total_dofs:
        raise ValueError("split_vector: length does not match map")
    return BlockVector([x[dof_map.global_indices(b)] for b in range(dof_map.n_blocks)])


def merge_vector(x: BlockVector, dof_map: DofMap) -> np.ndarray:
    """Assemble a monolithic vector from blocks (inverse of split_vector)."""
    if x.sizes != dof_map.block_sizes:
        raise ValueError("merge_vector: block sizes do not match map")
    out = np.empty(dof_map.total_dofs)
    for b, vec in enumerate(x.blocks):
        out[dof_map.global_indices(b)] = vec
    return out
