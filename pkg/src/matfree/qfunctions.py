"""Geometric factors at quadrature points and the pointwise mass/diffusion action."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from matfree.kernels import GRAD
from matfree.restriction import apply_g, make_restriction
from matfree.tensor_basis import FORWARD, apply_tensor_3d

MASS = "mass"
DIFFUSION = "diffusion"

# row-major upper triangle of a symmetric 3x3 block
SYM_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_FULL_TO_SYM = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])

# operations per quadrature point per field component
QF_FLOPS = {MASS: 1, DIFFUSION: 15}


class NonPositiveJacobian(ValueError):
    pass


@dataclass(frozen=True)
class QData:
    """Stored quadrature-point factors.

    ``data`` has shape ``(E, Q)`` for mass (``w * det J``) and ``(E, 6, Q)``
    for diffusion (upper triangle of ``w * det J * J^-1 J^-T``).
    """

    kind: str
    data: np.ndarray

    @property
    def E(self):
        return self.data.shape[0]

    @property
    def num_qpts(self):
        return self.data.shape[-1]

    def block(self, e, k):
        """Full symmetric 3x3 diffusion block at element ``e``, qpoint ``k``."""
        if self.kind != DIFFUSION:
            raise ValueError("only diffusion qdata has 3x3 blocks")
        return self.data[e, _FULL_TO_SYM, k]


def jacobians(mesh, basis, workers=1):
    """Coordinate Jacobians ``J[e, i, d, k] = dx_i / dr_d`` at every quadrature point."""
    if basis.p != mesh.p:
        raise ValueError(f"basis degree {basis.p} differs from mesh degree {mesh.p}")
    r3 = make_restriction(mesh, m=3)
    xe = apply_g(r3, mesh.coords, workers=workers)
    return apply_tensor_3d(basis, GRAD, FORWARD, 3, xe)


def _det_adj(J):
    a, b, c = J[:, 0, 0], J[:, 0, 1], J[:, 0, 2]
    d, e, f = J[:, 1, 0], J[:, 1, 1], J[:, 1, 2]
    g, h, i = J[:, 2, 0], J[:, 2, 1], J[:, 2, 2]
    adj = np.empty_like(J)
    adj[:, 0, 0] = e * i - f * h
    adj[:, 0, 1] = c * h - b * i
    adj[:, 0, 2] = b * f - c * e
    adj[:, 1, 0] = f * g - d * i
    adj[:, 1, 1] = a * i - c * g
    adj[:, 1, 2] = c * d - a * f
    adj[:, 2, 0] = d * h - e * g
    adj[:, 2, 1] = b * g - a * h
    adj[:, 2, 2] = a * e - b * d
    det = a * adj[:, 0, 0] + b * adj[:, 1, 0] + c * adj[:, 2, 0]
    return det, adj


def compute_qdata(mesh, basis, kind, workers=1):
    """Precompute mass or diffusion factors on ``basis``'s quadrature rule.

    Raises
    ------
    NonPositiveJacobian
        If ``det J <= 0`` at any quadrature point.
    """
    if kind not in (MASS, DIFFUSION):
        raise ValueError(f"unknown qdata kind {kind!r}")
    J = jacobians(mesh, basis, workers=workers)
    E, _, _, Q = J.shape
    det, adj = _det_adj(J)
    bad = np.argwhere(det <= 0.0)
    if bad.size:
        e, k = bad[0]
        raise NonPositiveJacobian(
            f"non-positive Jacobian determinant {det[e, k]:.3e} in element {e} at quadrature point {k}"
        )
    wdet = basis.qweights3d()[None, :] * det
    if kind == MASS:
        data = wdet
    else:
        # w det J J^-1 J^-T = (w / det J) adj adj^T
        scale = basis.qweights3d()[None, :] / det
        data = np.empty((E, 6, Q))
        for s, (i, j) in enumerate(SYM_INDEX):
            data[:, s] = scale * np.einsum("ekq,ekq->eq", adj[:, i], adj[:, j])
    data.flags.writeable = False
    return QData(kind, data)


@numba.njit(nogil=True, cache=True)
def _diffusion_kernel(S, g, out, e0, e1):
    m = g.shape[1]
    Q = g.shape[3]
    for e in range(e0, e1):
        for c in range(m):
            for k in range(Q):
                g0 = g[e, c, 0, k]
                g1 = g[e, c, 1, k]
                g2 = g[e, c, 2, k]
                s00 = S[e, 0, k]
                s01 = S[e, 1, k]
                s02 = S[e, 2, k]
                s11 = S[e, 3, k]
                s12 = S[e, 4, k]
                s22 = S[e, 5, k]
                out[e, c, 0, k] = s00 * g0 + s01 * g1 + s02 * g2
                out[e, c, 1, k] = s01 * g0 + s11 * g1 + s12 * g2
                out[e, c, 2, k] = s02 * g0 + s12 * g1 + s22 * g2


@numba.njit(nogil=True, cache=True)
def _mass_kernel(w, u, out, e0, e1):
    m = u.shape[1]
    Q = u.shape[2]
    for e in range(e0, e1):
        for c in range(m):
            for k in range(Q):
                out[e, c, k] = w[e, k] * u[e, c, k]


def apply_qf_mass(qdata, u_q, out=None, elems=None):
    """Pointwise ``v = (w det J) u`` for every component; ``u_q`` has shape ``(E, m, Q)``."""
    if qdata.kind != MASS:
        raise ValueError(f"mass action needs mass qdata, got {qdata.kind!r}")
    u_q = np.asarray(u_q, dtype=np.float64)
    if u_q.ndim != 3 or u_q.shape[0] != qdata.E or u_q.shape[2] != qdata.num_qpts:
        raise ValueError(f"u_q shape {u_q.shape} does not match qdata ({qdata.E}, m, {qdata.num_qpts})")
    if out is None:
        out = np.empty_like(u_q)
    e0, e1 = (0, qdata.E) if elems is None else elems
    _mass_kernel(qdata.data, u_q, out, e0, e1)
    return out


def apply_qf_diffusion(qdata, grad_u_q, out=None, elems=None):
    """Pointwise ``grad_v = S grad_u`` with ``S`` the stored symmetric block.

    ``grad_u_q`` has shape ``(E, m, 3, Q)`` (reference-gradient components).
    """
    if qdata.kind != DIFFUSION:
        raise ValueError(f"diffusion action needs diffusion qdata, got {qdata.kind!r}")
    g = np.asarray(grad_u_q, dtype=np.float64)
    if g.ndim != 4 or g.shape[0] != qdata.E or g.shape[2] != 3 or g.shape[3] != qdata.num_qpts:
        raise ValueError(f"grad_u_q shape {g.shape} does not match qdata ({qdata.E}, m, 3, {qdata.num_qpts})")
    if out is None:
        out = np.empty_like(g)
    e0, e1 = (0, qdata.E) if elems is None else elems
    _diffusion_kernel(qdata.data, g, out, e0, e1)
    return out
