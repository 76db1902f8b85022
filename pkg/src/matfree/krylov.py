"""Jacobi-preconditioned conjugate gradients."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numba
import numpy as np

DEFAULT_TOL = 1e-8
DEFAULT_MAXITER = 2000
REDUCTION_BLOCK = 1024


class NotSPDError(ArithmeticError):
    pass


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    apply_time_seconds: float = 0.0
    total_time_seconds: float = 0.0


@numba.njit(nogil=True, cache=True)
def _blocked_dot(x, y, block):
    n = x.shape[0]
    nblocks = (n + block - 1) // block
    partial = np.zeros(nblocks)
    for b in range(nblocks):
        s = 0.0
        for i in range(b * block, min(n, (b + 1) * block)):
            s += x[i] * y[i]
        partial[b] = s
    total = 0.0
    for b in range(nblocks):
        total += partial[b]
    return total


def dot(x, y):
    """Inner product with a fixed blocked summation order."""
    return _blocked_dot(np.ascontiguousarray(x, dtype=np.float64),
                        np.ascontiguousarray(y, dtype=np.float64), REDUCTION_BLOCK)


def pcg(op, b, precond=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAXITER, fixed_iterations=None):
    """Solve ``A x = b`` for SPD ``A`` starting from ``x = 0``.

    Parameters
    ----------
    op : MatFreeOperator or callable
        The operator, or any ``apply(v) -> A v``.
    b : ndarray
    precond : ndarray, optional
        Operator diagonal for Jacobi preconditioning; ``None`` for plain CG.
    tol : float
        Stop when ``||r_k|| / ||b|| <= tol``.  Ignored in fixed-iteration mode.
    fixed_iterations : int, optional
        Run exactly this many iterations regardless of the residual (benchmark mode).

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``residual_history[k]`` is ``||r_k||_2``; entry 0 is the initial residual.
    """
    t_start = time.perf_counter()
    if callable(op):
        apply = op
    else:
        from matfree.operator import operator_apply

        def apply(v):
            return operator_apply(op, v)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(b)):
        raise FloatingPointError("right-hand side contains non-finite values")
    inv_diag = None
    if precond is not None:
        inv_diag = 1.0 / np.asarray(precond, dtype=np.float64).reshape(-1)

    report = SolveReport()
    x = np.zeros_like(b)
    r = b.copy()
    z = r * inv_diag if inv_diag is not None else r.copy()
    p = z.copy()
    rz = dot(r, z)
    bnorm = np.sqrt(dot(b, b))
    rnorm = bnorm
    report.residual_history.append(rnorm)
    limit = fixed_iterations if fixed_iterations is not None else max_iter

    def done():
        if fixed_iterations is not None:
            return report.iterations >= fixed_iterations
        return bnorm == 0.0 or rnorm <= tol * bnorm

    while not done() and report.iterations < limit:
        t0 = time.perf_counter()
        ap = apply(p)
        report.apply_time_seconds += time.perf_counter() - t0
        pap = dot(p, ap)
        if not np.isfinite(pap):
            raise FloatingPointError(f"non-finite p^T A p at iteration {report.iterations}")
        if pap <= 0.0:
            if rnorm == 0.0:
                break
            raise NotSPDError(f"p^T A p = {pap:.3e} <= 0 at iteration {report.iterations}; operator is not SPD")
        step = rz / pap
        x += step * p
        r -= step * ap
        if inv_diag is not None:
            np.multiply(r, inv_diag, out=z)
        else:
            z[...] = r
        rz_new = dot(r, z)
        rnorm = np.sqrt(dot(r, r))
        if not np.isfinite(rnorm):
            raise FloatingPointError(f"residual became non-finite at iteration {report.iterations}")
        p *= rz_new / rz
        p += z
        rz = rz_new
        report.iterations += 1
        report.residual_history.append(rnorm)

    report.converged = bnorm == 0.0 or rnorm <= tol * bnorm
    report.total_time_seconds = time.perf_counter() - t_start
    return x, report
