"""Inner contraction kernels for tensor-product (sum-factorized) operators.

Element data is stored lexicographically with the x index fastest, so an
element block of sizes ``(s0, s1, s2)`` is held as a C-ordered array of shape
``(s2, s1, s0)``.  Tensor direction ``d`` therefore maps to array axis ``-1-d``.

All kernels are compiled with numba in ``nogil`` mode so the operator layer can
run them on worker threads.  Every output value is a sequential sum over the
contracted index, which makes the result independent of how elements are
batched or which thread computes them.

Operation counts use the convention that one multiply-add is two operations.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numba
import numpy as np

NAIVE = "naive"
SUM_FACTORIZED = "sumfact"
PATHS = (NAIVE, SUM_FACTORIZED)

INTERP = "interp"
GRAD = "grad"

DEFAULT_BLOCK = 8


class FlopCounter:
    """Thread-safe accumulator for instrumented operation counts."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, n: int) -> None:
        with self._lock:
            self.count += int(n)

    def reset(self) -> None:
        with self._lock:
            self.count = 0


@dataclass(frozen=True)
class KernelPlan:
    """Kernel configuration for one (p, q, m) basis application.

    ``collocated`` marks a basis whose interpolation matrix is the identity;
    the sum-factorized path then skips every interpolation contraction.
    """

    p: int
    q: int
    m: int = 1
    path: str = SUM_FACTORIZED
    block: int = DEFAULT_BLOCK
    collocated: bool = False
    counter: FlopCounter | None = None

    def __post_init__(self):
        if self.path not in PATHS:
            raise ValueError(f"unknown kernel path {self.path!r}; expected one of {PATHS}")
        if self.block < 1:
            raise ValueError(f"block must be >= 1, got {self.block}")
        if self.p < 1 or self.q < 1 or self.m < 1:
            raise ValueError(f"invalid plan sizes p={self.p}, q={self.q}, m={self.m}")

    def count(self, n: int) -> None:
        if self.counter is not None:
            self.counter.add(n)

    def scratch_size(self) -> int:
        """Doubles needed by :func:`tensor_apply` for one batch."""
        n = max(self.p + 1, self.q)
        return 2 * self.block * n**3


# ---------------------------------------------------------------------------
# compiled loops
# ---------------------------------------------------------------------------


@numba.njit(nogil=True, cache=True)
def _contract_sf(mat, u, out, accumulate):
    # u: (pre, n_in, post), out: (pre, n_out, post); loop order pre, i, c, j
    pre, n_in, post = u.shape
    n_out = mat.shape[0]
    for a in range(pre):
        for i in range(n_out):
            for c in range(post):
                s = out[a, i, c] if accumulate else 0.0
                for j in range(n_in):
                    s += mat[i, j] * u[a, j, c]
                out[a, i, c] = s


@numba.njit(nogil=True, cache=True)
def _contract_naive(mat, u, out, in_sizes, out_sizes, dim, accumulate):
    # u: (nb, prod(in_sizes)), out: (nb, prod(out_sizes)); flat x-fastest index arithmetic
    nb = u.shape[0]
    t0, t1, t2 = out_sizes[0], out_sizes[1], out_sizes[2]
    s0, s1 = in_sizes[0], in_sizes[1]
    n_in = in_sizes[dim]
    for b in range(nb):
        for o in range(t0 * t1 * t2):
            i0 = o % t0
            i1 = (o // t0) % t1
            i2 = o // (t0 * t1)
            s = out[b, o] if accumulate else 0.0
            for j in range(n_in):
                if dim == 0:
                    flat = j + s0 * (i1 + s1 * i2)
                    row = i0
                elif dim == 1:
                    flat = i0 + s0 * (j + s1 * i2)
                    row = i1
                else:
                    flat = i0 + s0 * (i1 + s1 * j)
                    row = i2
                s += mat[row, j] * u[b, flat]
            out[b, o] = s


@numba.njit(nogil=True, cache=True)
def _dense3d(m0, m1, m2, u, out, accumulate):
    # out[b, Q] = sum_N m2[qz, nz] * m1[qy, ny] * m0[qx, nx] * u[b, N]
    nb = u.shape[0]
    q0, n0 = m0.shape
    q1, n1 = m1.shape
    q2, n2 = m2.shape
    for b in range(nb):
        for qz in range(q2):
            for qy in range(q1):
                for qx in range(q0):
                    o = qx + q0 * (qy + q1 * qz)
                    s = out[b, o] if accumulate else 0.0
                    for nz in range(n2):
                        for ny in range(n1):
                            for nx in range(n0):
                                s += m2[qz, nz] * m1[qy, ny] * m0[qx, nx] * u[b, nx + n0 * (ny + n1 * nz)]
                    out[b, o] = s


# ---------------------------------------------------------------------------
# public kernels
# ---------------------------------------------------------------------------


def contract_batch(plan, matrix_1d, dim_index, input_batch, out=None, accumulate=False):
    """Apply a 1D matrix along tensor direction ``dim_index`` for every element.

    Parameters
    ----------
    plan : KernelPlan
        Selects the loop path and receives the operation count.
    matrix_1d : ndarray, shape (n_out, n_in)
    dim_index : {0, 1, 2}
        Tensor direction; 0 is the fastest-varying (x) index.
    input_batch : ndarray, shape (nb, s2, s1, s0)
        ``s[dim_index]`` must equal ``n_in``.
    out : ndarray, optional
        Output buffer with ``s[dim_index]`` replaced by ``n_out``.
    accumulate : bool
        Add into ``out`` instead of overwriting it.
    """
    if dim_index not in (0, 1, 2):
        raise ValueError(f"dim_index must be 0, 1 or 2, got {dim_index}")
    mat = np.ascontiguousarray(matrix_1d, dtype=np.float64)
    u = np.ascontiguousarray(input_batch, dtype=np.float64)
    if u.ndim != 4:
        raise ValueError(f"input_batch must have shape (nb, s2, s1, s0), got {u.shape}")
    nb = u.shape[0]
    in_sizes = (u.shape[3], u.shape[2], u.shape[1])
    n_out, n_in = mat.shape
    if in_sizes[dim_index] != n_in:
        raise ValueError(
            f"matrix has {n_in} columns but direction {dim_index} has size {in_sizes[dim_index]}"
        )
    out_sizes = list(in_sizes)
    out_sizes[dim_index] = n_out
    out_shape = (nb, out_sizes[2], out_sizes[1], out_sizes[0])
    if out is None:
        if accumulate:
            raise ValueError("accumulate=True requires an output buffer")
        out = np.empty(out_shape)
    elif out.shape != out_shape:
        raise ValueError(f"output buffer has shape {out.shape}, expected {out_shape}")
    elif not out.flags.c_contiguous:
        raise ValueError("output buffer must be C-contiguous")

    if plan.path == SUM_FACTORIZED:
        post = int(np.prod(in_sizes[:dim_index]))
        pre = nb * int(np.prod(in_sizes[dim_index + 1:]))
        _contract_sf(mat, u.reshape(pre, n_in, post), out.reshape(pre, n_out, post), accumulate)
    else:
        _contract_naive(
            mat,
            u.reshape(nb, -1),
            out.reshape(nb, -1),
            np.array(in_sizes, dtype=np.int64),
            np.array(out_sizes, dtype=np.int64),
            dim_index,
            accumulate,
        )
    plan.count(2 * nb * int(np.prod(out_sizes)) * n_in)
    return out


def tensor_apply(plan, mats, u, out, accumulate=False, scratch=None):
    """Apply ``mats[2] (x) mats[1] (x) mats[0]`` to a batch of elements.

    ``mats[d]`` acts along direction ``d``; ``None`` stands for the identity and
    is skipped on the sum-factorized path.  ``u`` has shape ``(nb, N)`` and
    ``out`` shape ``(nb, Q)`` with N, Q the cubes of the matrix column and row
    counts.  ``scratch`` is an optional flat buffer of at least
    ``2 * nb * max(n, q)**3`` doubles.
    """
    nb = u.shape[0]
    sizes = []
    for mat in mats:
        sizes.append(None if mat is None else mat.shape)
    known = [s for s in sizes if s is not None]
    if known:
        n_out, n_in = known[0]
    else:
        n_out = n_in = round(u.shape[1] ** (1 / 3))

    if plan.path == NAIVE:
        dense = [np.eye(n_in) if mat is None else mat for mat in mats]
        _dense3d(dense[0], dense[1], dense[2], u, out, accumulate)
        plan.count(2 * nb * dense[0].shape[0] * dense[1].shape[0] * dense[2].shape[0] * n_in**3)
        return out

    active = [d for d in range(3) if mats[d] is not None]
    if not active:
        if accumulate:
            out += u
        else:
            out[...] = u
        return out
    cur_sizes = [n_in, n_in, n_in]
    cur = u.reshape(nb, n_in, n_in, n_in)
    need = nb * max(n_in, n_out) ** 3
    if scratch is None or scratch.size < 2 * need:
        scratch = np.empty(2 * need)
    bufs = (scratch[:need], scratch[need:2 * need])
    for step, d in enumerate(active):
        cur_sizes[d] = mats[d].shape[0]
        shape = (nb, cur_sizes[2], cur_sizes[1], cur_sizes[0])
        if step == len(active) - 1:
            dest = out.reshape(shape)
            contract_batch(plan, mats[d], d, cur, out=dest, accumulate=accumulate)
        else:
            size = int(np.prod(shape))
            dest = bufs[step % 2][:size].reshape(shape)
            contract_batch(plan, mats[d], d, cur, out=dest)
        cur = dest
    return out


def flops_estimate(plan, mode):
    """Closed-form operation count per element for one basis application.

    Forward and transpose applications cost the same.  For the sum-factorized
    path an interpolation costs ``2*m*(q*(p+1)**3 + q**2*(p+1)**2 + q**3*(p+1))``
    and a gradient three times that; a collocated basis skips interpolation
    (zero cost) and each gradient component is a single contraction.  The naive
    path evaluates the full 3D sums: ``2*m*q**3*(p+1)**3`` per term.
    """
    n = plan.p + 1
    q = plan.q
    m = plan.m
    if mode not in (INTERP, GRAD):
        raise ValueError(f"unknown mode {mode!r}")
    terms = 1 if mode == INTERP else 3
    if plan.path == NAIVE:
        return terms * 2 * m * q**3 * n**3
    if plan.collocated:
        if mode == INTERP:
            return 0
        return 3 * 2 * m * q**3 * n
    return terms * 2 * m * (q * n**3 + q**2 * n**2 + q**3 * n)
