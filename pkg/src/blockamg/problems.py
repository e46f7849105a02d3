"""Deterministic desk-scale test-system generators.

Structured-grid finite differences stand in for finite-element assembly: the
generators reproduce the block structure the solver targets (convection-
diffusion evolution blocks, gradient/divergence constraint couplings,
stabilization Laplacians on the constraint diagonals, and velocity<->magnetics
cross coupling) without an FE engine. This is a deliberate fidelity boundary:
operator values are not those of any physical discretization.

All generators are pure functions of their parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .sparse import (BlockMatrix, BlockVector, CsrMatrix, DofMap, block_apply,
                     merge_blocks, spmv, transpose)

__all__ = [
    "ProblemSpec",
    "MhdBlockLayout",
    "BuiltProblem",
    "poisson2d",
    "convdiff2d",
    "gradient2d",
    "saddle2d",
    "coupled_mhd_like",
    "coupled_mixed_resolution",
    "mhd_layout",
    "manufactured_rhs",
    "build_problem",
    "PROBLEM_KINDS",
]

PROBLEM_KINDS = ("poisson2d", "convdiff2d", "saddle2d", "coupled_mhd_like",
                 "coupled_mixed_resolution")


@dataclass(frozen=True)
class ProblemSpec:
    """Parameters selecting and sizing a generated system."""

    kind: str
    n: int = 8
    epsilon: float = 1.0
    velocity: Tuple[float, float] = (1.0, 0.5)
    tau: float = 0.05
    gamma: float = 0.0
    seed: int = 0
    coupling: str = "node_identity"

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {PROBLEM_KINDS}")
        if self.n < 2 and self.kind != "poisson2d":
            raise ValueError("n must be >= 2")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.tau < 0 or self.gamma < 0:
            raise ValueError("tau and gamma must be >= 0")
        if self.coupling not in ("node_identity", "convective"):
            raise ValueError(f"unknown coupling variant {self.coupling!r}")


def _scale(A: CsrMatrix, alpha: float) -> CsrMatrix:
    """Scale stored values, keeping the pattern (alpha=0 keeps explicit zeros)."""
    return CsrMatrix(A.n_rows, A.n_cols, A.row_offsets, A.col_indices,
                     alpha * A.values, validate=False)


def _stencil(n, terms):
    """Assemble an n*n-node operator from (di, dj, value) stencil terms."""
    i, j = np.divmod(np.arange(n * n, dtype=np.int64), n)
    rows, cols, vals = [], [], []
    for di, dj, val in terms:
        ti, tj = i + di, j + dj
        ok = (ti >= 0) & (ti < n) & (tj >= 0) & (tj < n)
        rows.append((i[ok] * n + j[ok]))
        cols.append((ti[ok] * n + tj[ok]))
        vals.append(np.full(ok.sum(), val))
    return CsrMatrix.from_coo(n * n, n * n, np.concatenate(rows),
                              np.concatenate(cols), np.concatenate(vals))


def poisson2d(n: int) -> CsrMatrix:
    """5-point Laplacian on the n x n interior grid, Dirichlet rows eliminated.

    Unit h scaling: diagonal 4, grid neighbors -1; symmetric positive definite.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return _stencil(n, [(0, 0, 4.0), (0, 1, -1.0), (0, -1, -1.0),
                        (1, 0, -1.0), (-1, 0, -1.0)])


def convdiff2d(n: int, epsilon: float = 1.0,
               velocity: Tuple[float, float] = (1.0, 0.5)) -> CsrMatrix:
    """epsilon * 5-point Laplacian plus first-order upwind convection.

    The upwind term adds |v_d| * h to the diagonal and -|v_d| * h on the
    upwind neighbor in each direction d (h = 1/(n+1)), keeping rows
    diagonally dominant and row sums non-negative.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    h = 1.0 / (n + 1)
    vx, vy = velocity
    terms = [(0, 0, 4.0 * epsilon), (0, 1, -epsilon), (0, -1, -epsilon),
             (1, 0, -epsilon), (-1, 0, -epsilon)]
    if vx:
        terms.append((0, 0, abs(vx) * h))
        terms.append((0, -1 if vx > 0 else 1, -abs(vx) * h))
    if vy:
        terms.append((0, 0, abs(vy) * h))
        terms.append((-1 if vy > 0 else 1, 0, -abs(vy) * h))
    return _stencil(n, terms)


def gradient2d(n: int) -> CsrMatrix:
    """Centered-difference gradient mapping nodal scalars to 2-component
    velocity rows (node-major: row 2*node + component), scaled by h/2."""
    half_h = 0.5 / (n + 1)
    i, j = np.divmod(np.arange(n * n, dtype=np.int64), n)
    rows, cols, vals = [], [], []
    for comp, (di, dj) in enumerate([(0, 1), (1, 0)]):
        for sign in (1.0, -1.0):
            ti, tj = i + int(sign) * di, j + int(sign) * dj
            ok = (ti >= 0) & (ti < n) & (tj >= 0) & (tj < n)
            v = (i[ok] * n + j[ok])
            rows.append(2 * v + comp)
            cols.append(ti[ok] * n + tj[ok])
            vals.append(np.full(ok.sum(), sign * half_h))
    return CsrMatrix.from_coo(2 * n * n, n * n, np.concatenate(rows),
                              np.concatenate(cols), np.concatenate(vals))


def _interleave_components(C: CsrMatrix, k: int = 2) -> CsrMatrix:
    """Apply one scalar operator to k co-located components, node-major."""
    rows = np.repeat(np.arange(C.n_rows), np.diff(C.row_offsets))
    out_r, out_c, out_v = [], [], []
    for c in range(k):
        out_r.append(k * rows + c)
        out_c.append(k * C.col_indices + c)
        out_v.append(C.values)
    return CsrMatrix.from_coo(k * C.n_rows, k * C.n_cols, np.concatenate(out_r),
                              np.concatenate(out_c), np.concatenate(out_v))


def saddle2d(n: int, epsilon: float = 1.0, velocity: Tuple[float, float] = (1.0, 0.5),
             tau: float = 0.05) -> BlockMatrix:
    """Stabilized saddle-point system: 2-component convection-diffusion block,
    gradient/divergence constraint coupling, and a tau-scaled stabilization
    Laplacian on the constraint diagonal (structurally present even at tau=0).
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    conv = convdiff2d(n, epsilon, velocity)
    evol = _interleave_components(conv, 2)
    grad = gradient2d(n)
    t = transpose(grad)
    div = _scale(t, -1.0)
    stab = _scale(poisson2d(n), tau)
    return BlockMatrix([[evol, grad], [div, stab]],
                       row_sizes=[2 * n * n, n * n], col_sizes=[2 * n * n, n * n])


@dataclass
class MhdBlockLayout:
    """Sub-operators of the coupled generator, grouped 2x2.

    Group 0 pairs the flow evolution block with its constraint (gradient,
    divergence, pressure-stabilization Laplacian); group 1 is the structurally
    identical magnetics group. The cross blocks couple velocity and magnetics
    components with strength gamma.
    """

    flow: BlockMatrix
    magnetics: BlockMatrix
    velocity_from_magnetics: Optional[CsrMatrix]
    magnetics_from_velocity: Optional[CsrMatrix]
    gamma: float
    group_maps: Tuple[DofMap, DofMap]

    def assemble(self) -> BlockMatrix:
        a00 = merge_blocks(self.flow, self.group_maps[0])
        a11 = merge_blocks(self.magnetics, self.group_maps[1])
        return BlockMatrix([[a00, self.velocity_from_magnetics],
                            [self.magnetics_from_velocity, a11]],
                           row_sizes=[a00.n_rows, a11.n_rows],
                           col_sizes=[a00.n_cols, a11.n_cols])


def _coupling_entries(n: int, gamma: float, variant: str):
    """Row/col/value triplets of one velocity-component coupling operator."""
    nn = n * n
    v = np.arange(nn, dtype=np.int64)
    if variant == "node_identity":
        return v, v, np.full(nn, gamma)
    # first-order difference toward the west neighbor
    i, j = np.divmod(v, n)
    ok = j > 0
    rows = np.concatenate([v, v[ok]])
    cols = np.concatenate([v, v[ok] - 1])
    vals = np.concatenate([np.full(nn, gamma), np.full(int(ok.sum()), -gamma)])
    return rows, cols, vals


def _group_coupling(rows_nodes, cols_nodes, vals, k: int = 3, n_comp: int = 2):
    """Lift nodal coupling weights to group coordinates on matching components."""
    out_r = np.concatenate([k * rows_nodes + c for c in range(n_comp)])
    out_c = np.concatenate([k * cols_nodes + c for c in range(n_comp)])
    out_v = np.concatenate([vals] * n_comp)
    return out_r, out_c, out_v


def mhd_layout(n: int, epsilon: float = 1.0, velocity: Tuple[float, float] = (1.0, 0.5),
               tau: float = 0.05, gamma: float = 0.0,
               coupling: str = "node_identity") -> MhdBlockLayout:
    """Build the sub-operator layout behind coupled_mhd_like."""
    group = saddle2d(n, epsilon, velocity, tau)
    dm = DofMap(n * n, (2, 1), "interleaved")
    if gamma == 0.0:
        z = y = None
    else:
        r, c, v = _coupling_entries(n, gamma, coupling)
        gr, gc, gv = _group_coupling(r, c, v)
        size = 3 * n * n
        z = CsrMatrix.from_coo(size, size, gr, gc, gv)
        y = CsrMatrix.from_coo(size, size, gc, gr, -gv)
    return MhdBlockLayout(flow=group, magnetics=group,
                          velocity_from_magnetics=z, magnetics_from_velocity=y,
                          gamma=gamma, group_maps=(dm, dm))


def coupled_mhd_like(n: int, epsilon: float = 1.0,
                     velocity: Tuple[float, float] = (1.0, 0.5), tau: float = 0.05,
                     gamma: float = 0.0, coupling: str = "node_identity") -> BlockMatrix:
    """Coupled 2x2 system: two structurally identical stabilized saddle groups
    on the same n x n grid (3 DoFs per node each, node-major), cross-coupled
    on the velocity/magnetics components with strength gamma.

    With gamma = 0 the off-diagonal blocks are absent and the merged system is
    a permutation of two independent saddle2d systems.
    """
    return mhd_layout(n, epsilon, velocity, tau, gamma, coupling).assemble()


def _bilinear_weights(m: int, n: int):
    """Bilinear interpolation weights from an n x n interior grid onto the
    finer m x m interior grid (independent spacings; boundary mass dropped)."""
    hf = 1.0 / (m + 1)
    hc = 1.0 / (n + 1)
    fi, fj = np.divmod(np.arange(m * m, dtype=np.int64), m)
    rows, cols, vals = [], [], []
    for fine, (x, y) in enumerate(zip((fj + 1) * hf, (fi + 1) * hf)):
        tx, ty = x / hc, y / hc
        ix, iy = int(np.floor(tx)), int(np.floor(ty))
        fx, fy = tx - ix, ty - iy
        for (lat_i, wy) in ((iy, 1.0 - fy), (iy + 1, fy)):
            if not (1 <= lat_i <= n) or wy == 0.0:
                continue
            for (lat_j, wx) in ((ix, 1.0 - fx), (ix + 1, fx)):
                if not (1 <= lat_j <= n) or wx == 0.0:
                    continue
                rows.append(fine)
                cols.append((lat_i - 1) * n + (lat_j - 1))
                vals.append(wx * wy)
    return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
            np.asarray(vals))


def coupled_mixed_resolution(n: int, epsilon: float = 1.0,
                             velocity: Tuple[float, float] = (1.0, 0.5),
                             tau: float = 0.05, gamma: float = 0.0) -> BlockMatrix:
    """Coupled system whose flow group lives on a (2n-1) x (2n-1) grid and
    magnetics group on an n x n grid; the rectangular cross blocks carry
    bilinear inter-grid interpolation weights.

    Because the node counts differ, aggregation cannot be cloned between the
    blocks; per-block transfers must be built independently.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    m = 2 * n - 1
    flow_group = saddle2d(m, epsilon, velocity, tau)
    mag_group = saddle2d(n, epsilon, velocity, tau)
    a00 = merge_blocks(flow_group, DofMap(m * m, (2, 1), "interleaved"))
    a11 = merge_blocks(mag_group, DofMap(n * n, (2, 1), "interleaved"))
    if gamma == 0.0:
        a01 = a10 = None
    else:
        r, c, w = _bilinear_weights(m, n)
        gr, gc, gv = _group_coupling(r, c, gamma * w)
        a01 = CsrMatrix.from_coo(3 * m * m, 3 * n * n, gr, gc, gv)
        a10 = CsrMatrix.from_coo(3 * n * n, 3 * m * m, gc, gr, -gv)
    return BlockMatrix([[a00, a01], [a10, a11]],
                       row_sizes=[3 * m * m, 3 * n * n],
                       col_sizes=[3 * m * m, 3 * n * n])


def manufactured_rhs(A: Union[CsrMatrix, BlockMatrix], seed: int = 0):
    """Deterministic (b, x_true) with b = A @ x_true and unit-norm x_true."""
    rng = np.random.default_rng(seed)
    if isinstance(A, BlockMatrix):
        x = rng.standard_normal(A.shape[1])
        x /= np.linalg.norm(x)
        offs = np.concatenate([[0], np.cumsum(A.col_sizes)])
        xb = BlockVector([x[offs[i]:offs[i + 1]] for i in range(A.n_block_cols)])
        return block_apply(A, xb), xb
    x = rng.standard_normal(A.n_cols)
    x /= np.linalg.norm(x)
    return spmv(A, x), x


@dataclass
class BuiltProblem:
    """A generated system plus the layout facts the setup pipelines need."""

    spec: ProblemSpec
    matrix: Union[CsrMatrix, BlockMatrix]
    block_dofs_per_node: Tuple[int, ...]
    meta: dict = field(default_factory=dict)

    @property
    def is_block(self):
        return isinstance(self.matrix, BlockMatrix)


def build_problem(spec: ProblemSpec) -> BuiltProblem:
    """Instantiate a ProblemSpec; meta records kind, parameters and sizes."""
    n = spec.n
    if spec.kind == "poisson2d":
        mat = poisson2d(n)
        ks = (1,)
    elif spec.kind == "convdiff2d":
        mat = convdiff2d(n, spec.epsilon, spec.velocity)
        ks = (1,)
    elif spec.kind == "saddle2d":
        mat = saddle2d(n, spec.epsilon, spec.velocity, spec.tau)
        ks = (2, 1)
    elif spec.kind == "coupled_mhd_like":
        mat = coupled_mhd_like(n, spec.epsilon, spec.velocity, spec.tau, spec.gamma,
                               spec.coupling)
        ks = (3, 3)
    else:
        mat = coupled_mixed_resolution(n, spec.epsilon, spec.velocity, spec.tau, spec.gamma)
        ks = (3, 3)
    meta = {
        "kind": spec.kind, "n": n, "epsilon": spec.epsilon,
        "velocity": list(spec.velocity), "tau": spec.tau, "gamma": spec.gamma,
        "seed": spec.seed, "rows": mat.shape[0],
        "nnz": mat.nnz,
    }
    if isinstance(mat, BlockMatrix):
        meta["block_rows"] = list(mat.row_sizes)
    return BuiltProblem(spec, mat, ks, meta)
