"""Shared helpers: seeded random matrices and dense oracles."""

import numpy as np
import pytest

from blockamg.sparse import BlockMatrix, CsrMatrix


def random_sparse(rng, n_rows, n_cols, density=0.3):
    """Random sparse matrix with the given fill fraction."""
    mask = rng.random((n_rows, n_cols)) < density
    dense = np.where(mask, rng.standard_normal((n_rows, n_cols)), 0.0)
    return CsrMatrix.from_dense(dense)


def random_diag_dominant(rng, n, density=0.3):
    """Random square matrix with a dominant diagonal (safe for ILU/GS)."""
    mask = rng.random((n, n)) < density
    dense = np.where(mask, rng.standard_normal((n, n)), 0.0)
    np.fill_diagonal(dense, np.abs(dense).sum(axis=1) + 1.0 + rng.random(n))
    return CsrMatrix.from_dense(dense)


def random_block_2x2(rng, n0, n1, density=0.4, diag_dominant=True, coupling=True):
    """Random 2x2 block system, optionally diagonally dominant and coupled."""
    make = random_diag_dominant if diag_dominant else (
        lambda r, n, density=density: random_sparse(r, n, n, density))
    a00 = make(rng, n0, density=density) if diag_dominant else random_sparse(rng, n0, n0, density)
    a11 = make(rng, n1, density=density) if diag_dominant else random_sparse(rng, n1, n1, density)
    a01 = random_sparse(rng, n0, n1, density) if coupling else None
    a10 = random_sparse(rng, n1, n0, density) if coupling else None
    return BlockMatrix([[a00, a01], [a10, a11]], row_sizes=[n0, n1], col_sizes=[n0, n1])


def tridiag(n, lo=-1.0, mid=2.0, hi=-1.0):
    """1D Laplacian-style tridiagonal matrix."""
    dense = mid * np.eye(n) + lo * np.eye(n, k=-1) + hi * np.eye(n, k=1)
    return CsrMatrix.from_dense(dense)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
