"""MatrixMarket coordinate-format I/O for CsrMatrix and dense vectors.

Writes the plain "%%MatrixMarket matrix coordinate real general" flavor with
1-based indices. Explicitly stored zeros survive a write/read round trip, so
sparsity patterns are preserved exactly.
"""

from __future__ import annotations

import numpy as np

from .sparse import CsrMatrix

__all__ = ["write_matrix_market", "read_matrix_market",
           "write_vector_market", "read_vector_market"]

_COORD_HEADER = "%%MatrixMarket matrix coordinate real general"
_ARRAY_HEADER = "%%MatrixMarket matrix array real general"


def write_matrix_market(path, A: CsrMatrix, comment: str = ""):
    """Write a sparse matrix in coordinate format (entries in row-major order)."""
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_offsets))
    with open(path, "w") as f:
        f.write(_COORD_HEADER + "\n")
        if comment:
            for line in comment.splitlines():
                f.write(f"% {line}\n")
        f.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for r, c, v in zip(rows, A.col_indices, A.values):
            f.write(f"{r + 1} {c + 1} {v!r}\n")


def read_matrix_market(path) -> CsrMatrix:
    """Read a coordinate-format real matrix; 'symmetric' files are expanded."""
    with open(path) as f:
        header = f.readline().strip()
        parts = header.split()
        if (len(parts) < 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix"
                or parts[2].lower() != "coordinate" or parts[3].lower() != "real"):
            raise ValueError(f"unsupported MatrixMarket header: {header!r}")
        symmetry = parts[4].lower()
        if symmetry not in ("general", "symmetric"):
            raise ValueError(f"unsupported symmetry {symmetry!r}")
        line = f.readline()
        while line.startswith("%"):
            line = f.readline()
        n_rows, n_cols, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            r, c, v = f.readline().split()
            rows[k], cols[k], vals[k] = int(r) - 1, int(c) - 1, float(v)
    if symmetry == "symmetric":
        off = rows != cols
        rows = np.concatenate([rows, cols[off]])
        cols = np.concatenate([cols, rows[:nnz][off]])
        vals = np.concatenate([vals, vals[off]])
    return CsrMatrix.from_coo(n_rows, n_cols, rows, cols, vals)


def write_vector_market(path, x: np.ndarray, comment: str = ""):
    """Write a dense vector as an n x 1 array-format matrix."""
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w") as f:
        f.write(_ARRAY_HEADER + "\n")
        if comment:
            for line in comment.splitlines():
                f.write(f"% {line}\n")
        f.write(f"{len(x)} 1\n")
        for v in x:
            f.write(f"{v!r}\n")


def read_vector_market(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("%%MatrixMarket matrix array real"):
            raise ValueError(f"unsupported MatrixMarket header: {header!r}")
        line = f.readline()
        while line.startswith("%"):
            line = f.readline()
        n, m = (int(t) for t in line.split())
        if m != 1:
            raise ValueError("expected a single-column array file")
        return np.array([float(f.readline()) for _ in range(n)])
