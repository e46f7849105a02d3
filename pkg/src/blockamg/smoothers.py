"""Level relaxation: point Jacobi / Gauss-Seidel, ILU(0), non-overlapping
additive-Schwarz ILU(0), and the damped block Gauss-Seidel smoother for 2x2
block systems.

The block smoother alternates approximate solves of the two diagonal physics
blocks, recomputing the residual with the freshly updated first-block solution
before the second sub-solve, and scales both updates by a damping factor.
Each smoother is a linear fixed-point iteration in (b, x); factorizations are
immutable once built and applying never mutates caller vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as _sp
from scipy.sparse.linalg import spsolve_triangular

from .sparse import BlockMatrix, BlockVector, CsrMatrix

__all__ = [
    "SMOOTHER_KINDS",
    "SmootherSpec",
    "PivotError",
    "Ilu0Factors",
    "SchwarzIlu0Factors",
    "ilu0_factor",
    "ilu0_apply",
    "schwarz_ilu0_factor",
    "schwarz_ilu0_apply",
    "point_sweep",
    "block_gs_sweep",
    "smoother_as_iteration",
    "build_smoother",
]

SMOOTHER_KINDS = ("jacobi", "gauss_seidel", "ilu0", "schwarz_ilu0", "block_gauss_seidel")


class PivotError(ArithmeticError):
    """Structurally missing or numerically vanishing pivot in a factorization."""


@dataclass(frozen=True)
class SmootherSpec:
    """Declarative smoother configuration.

    sub_solvers configures the per-diagonal-block solves of the block
    Gauss-Seidel smoother (exactly one spec per diagonal block);
    schwarz_domains only applies to the schwarz_ilu0 kind. A damping of 0 is
    accepted so the no-op update is expressible, e.g. in linearity tests.
    """

    kind: str
    sweeps: int = 1
    damping: float = 1.0
    sub_solvers: Optional[Tuple["SmootherSpec", ...]] = None
    schwarz_domains: int = 1

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise ValueError(f"unknown smoother kind {self.kind!r}; expected one of {SMOOTHER_KINDS}")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")
        if self.schwarz_domains < 1:
            raise ValueError("schwarz_domains must be >= 1")
        if self.kind == "block_gauss_seidel":
            if self.sub_solvers is None or len(self.sub_solvers) != 2:
                raise ValueError("block_gauss_seidel needs exactly one sub_solver per diagonal block")
            object.__setattr__(self, "sub_solvers", tuple(self.sub_solvers))
        elif self.sub_solvers is not None:
            raise ValueError(f"sub_solvers only apply to block_gauss_seidel, not {self.kind!r}")


def default_block_gs_spec(sweeps: int = 1, damping: float = 1.0,
                          schwarz_domains: int = 1) -> SmootherSpec:
    """Block Gauss-Seidel with single-domain Schwarz ILU(0) sub-solves."""
    sub = SmootherSpec("schwarz_ilu0", schwarz_domains=schwarz_domains)
    return SmootherSpec("block_gauss_seidel", sweeps=sweeps, damping=damping,
                        sub_solvers=(sub, sub))


# -- ILU(0) ------------------------------------------------------------------


@dataclass
class Ilu0Factors:
    """Zero-fill incomplete LU factors: L unit lower (diagonal implicit), U upper."""

    L: CsrMatrix
    U: CsrMatrix

    def solve(self, r: np.ndarray) -> np.ndarray:
        return ilu0_apply(self, r)


def ilu0_factor(A: CsrMatrix) -> Ilu0Factors:
    """ILU(0): Gaussian elimination restricted to pattern(A), natural row order.

    Raises PivotError if a diagonal entry is structurally missing or a pivot
    falls below 1e-14 * max|a_ii|.
    """
    n = A.n_rows
    if n != A.n_cols:
        raise ValueError("ilu0_factor expects a square matrix")
    ro, ci = A.row_offsets, A.col_indices
    vals = A.values.copy()

    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        lo, hi = ro[i], ro[i + 1]
        pos = np.searchsorted(ci[lo:hi], i)
        if pos < hi - lo and ci[lo + pos] == i:
            diag_pos[i] = lo + pos
    missing = np.nonzero(diag_pos < 0)[0]
    if len(missing):
        raise PivotError(f"row {missing[0]} has no stored diagonal entry")

    pivot_tol = 1e-14 * float(np.max(np.abs(vals[diag_pos]))) if n else 0.0

    for i in range(n):
        lo, hi = ro[i], ro[i + 1]
        row_cols = ci[lo:hi]
        col_to_pos = {int(c): lo + p for p, c in enumerate(row_cols)}
        for p in range(lo, hi):
            k = ci[p]
            if k >= i:
                break
            ukk = vals[diag_pos[k]]
            if abs(ukk) < pivot_tol or ukk == 0.0:
                raise PivotError(f"zero pivot in row {k} (|u_kk| = {abs(ukk):.3e})")
            lik = vals[p] / ukk
            vals[p] = lik
            for q in range(diag_pos[k] + 1, ro[k + 1]):
                j = int(ci[q])
                tgt = col_to_pos.get(j)
                if tgt is not None:
                    vals[tgt] -= lik * vals[q]
        uii = vals[diag_pos[i]]
        if abs(uii) < pivot_tol or uii == 0.0:
            raise PivotError(f"zero pivot in row {i} (|u_ii| = {abs(uii):.3e})")

    rows = np.repeat(np.arange(n), np.diff(ro))
    lower = ci < rows
    upper = ~lower
    L = CsrMatrix.from_coo(n, n, rows[lower], ci[lower], vals[lower])
    U = CsrMatrix.from_coo(n, n, rows[upper], ci[upper], vals[upper])
    return Ilu0Factors(L, U)


def ilu0_apply(f: Ilu0Factors, r: np.ndarray) -> np.ndarray:
    """z = U^-1 L^-1 r by forward then backward substitution."""
    r = np.asarray(r, dtype=np.float64)
    y = spsolve_triangular(f.L.to_scipy(), r, lower=True, unit_diagonal=True)
    return spsolve_triangular(f.U.to_scipy(), y, lower=False)


@dataclass
class SchwarzIlu0Factors:
    """Per-domain ILU(0) factors over contiguous row ranges (block Jacobi apply)."""

    offsets: np.ndarray
    domains: list

    @property
    def n_domains(self):
        return len(self.domains)

    def solve(self, r: np.ndarray) -> np.ndarray:
        return schwarz_ilu0_apply(self, r)


def schwarz_ilu0_factor(A: CsrMatrix, n_domains: int) -> SchwarzIlu0Factors:
    """Partition rows into contiguous domains and ILU(0)-factor each diagonal sub-block."""
    n = A.n_rows
    if n != A.n_cols:
        raise ValueError("schwarz_ilu0_factor expects a square matrix")
    if not 1 <= n_domains <= n:
        raise ValueError(f"n_domains must be in [1, {n}]")
    bounds = np.linspace(0, n, n_domains + 1).astype(np.int64)
    m = A.to_scipy()
    factors = []
    for d in range(n_domains):
        lo, hi = int(bounds[d]), int(bounds[d + 1])
        sub = m[lo:hi, lo:hi].tocsr()
        factors.append(ilu0_factor(CsrMatrix.from_scipy(sub)))
    return SchwarzIlu0Factors(bounds, factors)


def schwarz_ilu0_apply(f: SchwarzIlu0Factors, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    z = np.empty_like(r)
    for d, fac in enumerate(f.domains):
        lo, hi = int(f.offsets[d]), int(f.offsets[d + 1])
        z[lo:hi] = ilu0_apply(fac, r[lo:hi])
    return z


# -- stateful smoothers --------------------------------------------------------


class _PointSmoother:
    """Damped Jacobi or forward Gauss-Seidel (SOR splitting) sweeps."""

    def __init__(self, A: CsrMatrix, kind: str, damping: float, sweeps: int):
        self.A = A
        self.kind = kind
        self.damping = damping
        self.sweeps = sweeps
        d = A.diag()
        if np.any(d == 0.0):
            raise PivotError(f"{kind} smoother requires a nonzero diagonal")
        if kind == "jacobi":
            self._dinv = 1.0 / d
        else:
            # x + w*(D + w*L)^-1 r reproduces the classical in-place damped
            # forward Gauss-Seidel update.
            m = (_sp.diags(d) + damping * _sp.tril(A.to_scipy(), -1)).tocsr()
            m.sort_indices()
            self._m_lower = m

    def apply(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        a = self.A.to_scipy()
        x = np.array(x, dtype=np.float64)
        for _ in range(self.sweeps):
            r = b - a @ x
            if self.kind == "jacobi":
                x += self.damping * (self._dinv * r)
            else:
                x += self.damping * spsolve_triangular(self._m_lower, r, lower=True)
        return x


class _FactorSmoother:
    """Richardson iteration preconditioned by (Schwarz-)ILU(0) factors."""

    def __init__(self, A: CsrMatrix, factors, damping: float, sweeps: int):
        self.A = A
        self.factors = factors
        self.damping = damping
        self.sweeps = sweeps

    def apply(self, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        a = self.A.to_scipy()
        x = np.array(x, dtype=np.float64)
        for _ in range(self.sweeps):
            x += self.damping * self.factors.solve(b - a @ x)
        return x


class _BlockGsSmoother:
    """Damped block Gauss-Seidel over a 2x2 block system.

    Per sweep: residual of block 0 (using the current full iterate), approximate
    A00 sub-solve, damped update of x0; then the block-1 residual is formed with
    the already-updated x0 before the A11 sub-solve and damped update of x1.
    """

    def __init__(self, A: BlockMatrix, spec: SmootherSpec):
        if A.n_block_rows != 2 or A.n_block_cols != 2:
            raise ValueError("block Gauss-Seidel operates on 2x2 block systems")
        for i in range(2):
            if A.blocks[i][i] is None:
                raise ValueError(f"diagonal block ({i},{i}) is absent; cannot sub-solve")
        self.A = A
        self.damping = spec.damping
        self.sweeps = spec.sweeps
        self.subs = [build_smoother(A.blocks[i][i], spec.sub_solvers[i]) for i in range(2)]

    def _sub_solve(self, i, r):
        return self.subs[i].apply(r, np.zeros_like(r))

    def apply(self, b: BlockVector, x: BlockVector) -> BlockVector:
        a01 = self.A.blocks[0][1]
        a10 = self.A.blocks[1][0]
        a00 = self.A.blocks[0][0].to_scipy()
        a11 = self.A.blocks[1][1].to_scipy()
        x0 = x.blocks[0].copy()
        x1 = x.blocks[1].copy()
        b0, b1 = b.blocks
        for _ in range(self.sweeps):
            r0 = b0 - a00 @ x0
            if a01 is not None:
                r0 -= a01.to_scipy() @ x1
            x0 += self.damping * self._sub_solve(0, r0)
            r1 = b1 - a11 @ x1
            if a10 is not None:
                r1 -= a10.to_scipy() @ x0
            x1 += self.damping * self._sub_solve(1, r1)
        return BlockVector([x0, x1])


def build_smoother(A, spec: SmootherSpec):
    """Construct smoother state for an operator: factors, splittings, sub-smoothers."""
    if spec.kind == "block_gauss_seidel":
        if not isinstance(A, BlockMatrix):
            raise ValueError("block_gauss_seidel requires a BlockMatrix operator")
        return _BlockGsSmoother(A, spec)
    if not isinstance(A, CsrMatrix):
        raise ValueError(f"{spec.kind} smoother requires a CsrMatrix operator")
    if spec.kind in ("jacobi", "gauss_seidel"):
        return _PointSmoother(A, spec.kind, spec.damping, spec.sweeps)
    if spec.kind == "ilu0":
        return _FactorSmoother(A, ilu0_factor(A), spec.damping, spec.sweeps)
    # Clamp so one spec can serve every hierarchy level, however small.
    return _FactorSmoother(A, schwarz_ilu0_factor(A, min(spec.schwarz_domains, A.n_rows)),
                           spec.damping, spec.sweeps)


# -- functional entry points ---------------------------------------------------


def point_sweep(kind: str, A: CsrMatrix, b: np.ndarray, x: np.ndarray,
                damping: float = 1.0, sweeps: int = 1) -> np.ndarray:
    """Damped Jacobi / forward Gauss-Seidel sweeps starting from x."""
    if kind not in ("jacobi", "gauss_seidel"):
        raise ValueError(f"point_sweep kind must be jacobi or gauss_seidel, got {kind!r}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n_rows,) or np.shape(x) != (A.n_cols,):
        raise ValueError("point_sweep: vector lengths do not match the operator")
    return _PointSmoother(A, kind, damping, sweeps).apply(b, np.asarray(x, dtype=np.float64))


def block_gs_sweep(A: BlockMatrix, b: BlockVector, spec: SmootherSpec) -> BlockVector:
    """Damped block Gauss-Seidel from a zero initial guess."""
    if spec.kind != "block_gauss_seidel":
        raise ValueError("block_gs_sweep requires a block_gauss_seidel spec")
    zero = BlockVector.zeros(b.sizes)
    return _BlockGsSmoother(A, spec).apply(b, zero)


def smoother_as_iteration(A, b, x_in, spec: SmootherSpec):
    """Apply the configured smoother starting from x_in instead of zero."""
    return build_smoother(A, spec).apply(b, x_in)
