"""Matrix-free composition G^T B^T D B G with essential constraints.

Vector roles: an L-vector holds ``m * n_L`` values in component-major order;
a T-vector is the same array with constrained entries held fixed by the
projection below; E-vectors are ``(E, m, (p+1)**3)`` element blocks and
Q-vectors hold values at quadrature points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from matfree._pool import run_chunks
from matfree.kernels import DEFAULT_BLOCK, GRAD, INTERP, FlopCounter, KernelPlan, tensor_apply
from matfree.qfunctions import (
    DIFFUSION,
    MASS,
    QF_FLOPS,
    SYM_INDEX,
    QData,
    apply_qf_diffusion,
    apply_qf_mass,
    compute_qdata,
)
from matfree.restriction import apply_g, apply_g_transpose, make_restriction
from matfree.tensor_basis import FORWARD, TRANSPOSE, apply_tensor_3d

ASSEMBLY_LIMIT = 20_000


@dataclass
class MatFreeOperator:
    """``alpha * A + beta * B`` applied without forming a matrix.

    ``constrained`` holds flat L-indices (``comp * n_L + node``) of essential
    dofs.  ``workers`` is the thread count used by :func:`operator_apply`.
    """

    restriction: object
    basis: object
    mesh: object
    alpha: float
    beta: float
    qdata_mass: QData | None = None
    qdata_diff: QData | None = None
    constrained: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    workers: int = 1
    block: int = DEFAULT_BLOCK
    counter: FlopCounter | None = None

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValueError(f"need alpha, beta >= 0 and not both zero, got ({self.alpha}, {self.beta})")
        if self.alpha and self.qdata_diff is None:
            raise ValueError("alpha > 0 requires diffusion qdata")
        if self.beta and self.qdata_mass is None:
            raise ValueError("beta > 0 requires mass qdata")

    @property
    def m(self):
        return self.restriction.m

    @property
    def size(self):
        return self.restriction.l_size

    def free_mask(self):
        mask = np.ones(self.size, dtype=bool)
        mask[self.constrained] = False
        return mask

    def plan(self):
        return self.basis.plan(self.m, block=self.block, counter=self.counter)


def make_operator(mesh, basis, m=1, alpha=0.0, beta=1.0, dirichlet=False, workers=1,
                  block=DEFAULT_BLOCK, counter=None):
    """Build the operator for ``(alpha A + beta B)`` on ``mesh``.

    ``dirichlet=True`` constrains every component at every boundary node.
    """
    r = make_restriction(mesh, m)
    qm = compute_qdata(mesh, basis, MASS, workers=workers) if beta else None
    qd = compute_qdata(mesh, basis, DIFFUSION, workers=workers) if alpha else None
    constrained = np.empty(0, dtype=np.int64)
    if dirichlet:
        bnd = np.asarray(mesh.boundary_nodes, dtype=np.int64)
        constrained = np.concatenate([c * mesh.n_L + bnd for c in range(m)])
    return MatFreeOperator(
        restriction=r, basis=basis, mesh=mesh, alpha=float(alpha), beta=float(beta),
        qdata_mass=qm, qdata_diff=qd, constrained=constrained, workers=workers,
        block=block, counter=counter,
    )


def _qslice(qdata, a, b):
    return QData(qdata.kind, qdata.data[a:b]) if qdata is not None else None


def _element_apply(op, ue, ye, e0, e1):
    """Element-level ``B^T D B`` for elements ``[e0, e1)`` in batches of ``op.block``."""
    basis, m, plan = op.basis, op.m, op.plan()
    nq = basis.num_qpts
    nb_max = min(op.block, e1 - e0)
    qbuf = np.empty(nb_max * m * nq)
    gbuf = np.empty(nb_max * m * 3 * nq) if op.alpha else None
    ebuf = np.empty(nb_max * m * basis.num_nodes) if (op.alpha and op.beta) else None
    for a in range(e0, e1, op.block):
        b = min(a + op.block, e1)
        nb = b - a
        u_b = ue[a:b]
        y_b = ye[a:b]
        if op.beta:
            uq = qbuf[:nb * m * nq].reshape(nb, m, nq)
            apply_tensor_3d(basis, INTERP, FORWARD, m, u_b, plan=plan, out=uq)
            apply_qf_mass(_qslice(op.qdata_mass, a, b), uq, out=uq)
            plan.count(QF_FLOPS[MASS] * uq.size)
            apply_tensor_3d(basis, INTERP, TRANSPOSE, m, uq, plan=plan, out=y_b)
            if op.beta != 1.0:
                y_b *= op.beta
        if op.alpha:
            gq = gbuf[:nb * m * 3 * nq].reshape(nb, m, 3, nq)
            apply_tensor_3d(basis, GRAD, FORWARD, m, u_b, plan=plan, out=gq)
            apply_qf_diffusion(_qslice(op.qdata_diff, a, b), gq, out=gq)
            plan.count(QF_FLOPS[DIFFUSION] * nb * m * nq)
            dest = y_b if not op.beta else ebuf[:y_b.size].reshape(y_b.shape)
            apply_tensor_3d(basis, GRAD, TRANSPOSE, m, gq, plan=plan, out=dest)
            if op.alpha != 1.0:
                dest *= op.alpha
            if op.beta:
                y_b += dest


def operator_apply(op, x, workers=None, out=None):
    """Apply the constrained operator to an L-vector.

    Constrained entries of ``x`` are zeroed before the element action and
    copied through unchanged afterwards, which keeps the operator symmetric.
    Returns a flat array of length ``m * n_L``.
    """
    workers = op.workers if workers is None else workers
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != op.size:
        raise ValueError(f"input has {x.size} entries, expected {op.size}")
    xp = x.copy()
    xp[op.constrained] = 0.0
    r = op.restriction
    ue = apply_g(r, xp, workers=workers)
    ye = np.empty_like(ue)
    run_chunks(lambda a, b: _element_apply(op, ue, ye, a, b), r.E, workers)
    y = apply_g_transpose(r, ye, workers=workers).reshape(-1)
    y[op.constrained] = x[op.constrained]
    if out is not None:
        out[...] = y
        return out
    return y


def _hadamard_terms(basis, d, dd):
    # 1D factors (transposed: node index as row) of (G_d (.) G_dd) for a diagonal sweep
    b, g = basis.interp1d, basis.grad1d
    mats = []
    for k in range(3):
        left = g if k == d else b
        right = g if k == dd else b
        mats.append(np.ascontiguousarray((left * right).T))
    return mats


def operator_diagonal(op, workers=None):
    """Matrix-free diagonal; constrained entries are set to 1.

    Each local diagonal entry is ``sum_k B[k, j] D_k B[k, j]``, evaluated by a
    sum-factorized transpose sweep with elementwise-squared 1D factors.
    """
    workers = op.workers if workers is None else workers
    basis, r, m = op.basis, op.restriction, op.m
    plan = KernelPlan(basis.p, basis.q, 1, block=op.block)
    E, nn = r.E, basis.num_nodes
    local = np.zeros((E, nn))
    if op.beta:
        mats = _hadamard_terms(basis, -1, -1)
        tmp = np.empty((E, nn))
        tensor_apply(plan, mats, np.ascontiguousarray(op.qdata_mass.data), tmp)
        local += op.beta * tmp
    if op.alpha:
        data = op.qdata_diff.data
        tmp = np.empty((E, nn))
        for s, (d, dd) in enumerate(SYM_INDEX):
            weight = op.alpha * (1.0 if d == dd else 2.0)
            tensor_apply(plan, _hadamard_terms(basis, d, dd), np.ascontiguousarray(data[:, s]), tmp)
            local += weight * tmp
    e_vec = np.repeat(local[:, None, :], m, axis=1)
    diag = apply_g_transpose(r, e_vec, workers=workers).reshape(-1)
    diag[op.constrained] = 1.0
    return diag


def _dense_terms(basis):
    b, g = basis.interp1d, basis.grad1d
    interp = np.kron(b, np.kron(b, b))
    grads = [np.kron(b, np.kron(b, g)), np.kron(b, np.kron(g, b)), np.kron(g, np.kron(b, b))]
    return interp, grads


def reference_assemble(op):
    """Dense matrix of the constrained operator, built by a direct quadrature loop.

    Test oracle only: uses explicit 3D basis tables and recomputes geometric
    factors from the coordinates with ``numpy.linalg`` instead of the stored
    qdata.  Constrained rows/columns are replaced by identity.
    """
    n = op.size
    if n > ASSEMBLY_LIMIT:
        raise ValueError(f"refusing to assemble a dense {n}x{n} matrix (limit {ASSEMBLY_LIMIT})")
    basis, mesh, r = op.basis, op.mesh, op.restriction
    interp, grads = _dense_terms(basis)
    w = basis.qweights3d()
    K = np.zeros((n, n))
    for e in range(r.E):
        idx = r.indices[e]
        xe = mesh.coords[:, idx]
        J = np.stack([np.stack([gd @ xe[i] for gd in grads], axis=-1) for i in range(3)], axis=1)
        det = np.linalg.det(J)
        ke = np.zeros((idx.size, idx.size))
        if op.beta:
            ke += op.beta * (interp.T * (w * det)) @ interp
        if op.alpha:
            jinv_t = np.linalg.inv(J).transpose(0, 2, 1)
            ref = np.stack(grads, axis=1)  # (Q, 3, N)
            phys = np.einsum("kij,kjn->kin", jinv_t, ref)
            ke += op.alpha * np.einsum("k,kin,kim->nm", w * det, phys, phys)
        for c in range(r.m):
            g = c * r.n_L + idx
            K[np.ix_(g, g)] += ke
    cons = op.constrained
    K[cons, :] = 0.0
    K[:, cons] = 0.0
    K[cons, cons] = 1.0
    return K
