"""Right-preconditioned restarted GMRES.

Arnoldi with modified Gram-Schmidt and Givens rotations; the preconditioner
acts on the right (solve A M^-1 u = b, x = M^-1 u) so reported residuals are
unpreconditioned and comparable across preconditioners. The true residual is
recomputed at every restart and at termination.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .sparse import BlockVector

__all__ = ["SolveStats", "gmres", "write_convergence_csv", "GmresBreakdown"]


class GmresBreakdown(RuntimeError):
    """Arnoldi produced a (near-)zero basis vector without reaching the tolerance."""


@dataclass
class SolveStats:
    """Outcome of one linear solve.

    relative_residuals holds the initial relative residual plus one entry per
    iteration (length iterations + 1); entries at restarts and at termination
    are true recomputed residuals, the rest are Givens estimates.
    """

    iterations: int = 0
    relative_residuals: np.ndarray = field(default_factory=lambda: np.zeros(1))
    converged: bool = False
    breakdown: bool = False
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0

    @property
    def final_relative_residual(self):
        return float(self.relative_residuals[-1])


def _as_matvec(op) -> Callable[[np.ndarray], np.ndarray]:
    if op is None:
        return lambda v: v
    if hasattr(op, "matvec"):
        return op.matvec
    return op


def gmres(op, b, precond=None, tol: float = 1e-8, max_iter: int = 100,
          restart: int = 50, x0=None, flexible: bool = False):
    """Solve op(x) = b; returns (x, SolveStats).

    op and precond may be CsrMatrix/BlockMatrix (their matvec is used) or any
    callable; precond applies M^-1. BlockVector right-hand sides are handled
    by flattening around the operators. max_iter caps the total number of
    inner iterations across restarts.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if restart < 1:
        raise ValueError("restart must be >= 1")
    t0 = time.perf_counter()

    a_mv = _as_matvec(op)
    m_mv = _as_matvec(precond)
    block_sizes = None
    if isinstance(b, BlockVector):
        block_sizes = b.sizes
        offs = np.concatenate([[0], np.cumsum(block_sizes)])

        def _unflatten(v):
            return BlockVector([v[offs[i]:offs[i + 1]] for i in range(len(block_sizes))])

        a_flat, m_flat = a_mv, m_mv
        a_mv = lambda v: a_flat(_unflatten(v)).to_array()
        if precond is not None:
            m_mv = lambda v: m_flat(_unflatten(v)).to_array()
        b_arr = b.to_array()
        x = x0.to_array().copy() if x0 is not None else np.zeros_like(b_arr)
    else:
        b_arr = np.asarray(b, dtype=np.float64)
        x = np.array(x0, dtype=np.float64) if x0 is not None else np.zeros_like(b_arr)

    def _pack(v):
        return _unflatten(v) if block_sizes is not None else v

    n = len(b_arr)
    norm_b = float(np.linalg.norm(b_arr))
    if norm_b == 0.0:
        stats = SolveStats(iterations=0, relative_residuals=np.zeros(1), converged=True,
                           solve_seconds=time.perf_counter() - t0)
        return _pack(np.zeros_like(b_arr)), stats

    target = tol * norm_b
    history = []
    iterations = 0
    converged = False
    breakdown = False

    r = b_arr - a_mv(x)
    beta = float(np.linalg.norm(r))
    history.append(beta / norm_b)
    converged = beta <= target

    while not converged and not breakdown and iterations < max_iter:
        m = min(restart, max_iter - iterations)
        V = np.zeros((n, m + 1))
        Z = np.zeros((n, m)) if flexible else None
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[:, 0] = r / beta
        g[0] = beta
        j_last = -1

        for j in range(m):
            z = m_mv(V[:, j])
            if flexible:
                Z[:, j] = z
            w = a_mv(z)
            w_norm_pre = float(np.linalg.norm(w))
            for i in range(j + 1):
                H[i, j] = float(V[:, i] @ w)
                w -= H[i, j] * V[:, i]
            h_next = float(np.linalg.norm(w))
            H[j + 1, j] = h_next

            for i in range(j):
                hi, hi1 = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hi1
                H[i + 1, j] = -sn[i] * hi + cs[i] * hi1
            denom = float(np.hypot(H[j, j], H[j + 1, j]))
            cs[j] = H[j, j] / denom if denom else 1.0
            sn[j] = H[j + 1, j] / denom if denom else 0.0
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            iterations += 1
            j_last = j
            history.append(abs(g[j + 1]) / norm_b)
            if h_next <= 1e-14 * max(w_norm_pre, 1.0):
                if abs(g[j + 1]) > target:
                    breakdown = True
                break
            if abs(g[j + 1]) <= target:
                break
            if j + 1 < m:
                V[:, j + 1] = w / h_next

        if j_last >= 0:
            y = _la_solve_triu(H[:j_last + 1, :j_last + 1], g[:j_last + 1])
            if np.all(np.isfinite(y)):
                if flexible:
                    x = x + Z[:, :j_last + 1] @ y
                else:
                    x = x + m_mv(V[:, :j_last + 1] @ y)
            else:
                breakdown = True

        r = b_arr - a_mv(x)
        beta = float(np.linalg.norm(r))
        history[-1] = beta / norm_b  # replace the estimate with the true residual
        converged = beta <= target

    stats = SolveStats(
        iterations=iterations,
        relative_residuals=np.asarray(history),
        converged=converged,
        breakdown=breakdown and not converged,
        solve_seconds=time.perf_counter() - t0,
    )
    return _pack(x), stats


def _la_solve_triu(R, rhs):
    """Back substitution for the rotated (upper triangular) Hessenberg system."""
    m = R.shape[0]
    y = np.zeros(m)
    for i in range(m - 1, -1, -1):
        y[i] = (rhs[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


def write_convergence_csv(path, stats: SolveStats):
    """Dump the residual history as 'iter,relres' lines."""
    with open(path, "w") as f:
        f.write("iter,relres\n")
        for k, rr in enumerate(stats.relative_residuals):
            f.write(f"{k},{rr:.16e}\n")
