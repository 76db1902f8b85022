"""Quadrature rules, 1D Lagrange basis matrices, and 3D tensor-product evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from matfree.kernels import GRAD, INTERP, KernelPlan, SUM_FACTORIZED, tensor_apply

GAUSS_LEGENDRE = "gauss"
GAUSS_LOBATTO_LEGENDRE = "lobatto"
QUADRATURE_KINDS = (GAUSS_LEGENDRE, GAUSS_LOBATTO_LEGENDRE)

FORWARD = "forward"
TRANSPOSE = "transpose"

NEWTON_TOL = 1e-15
NEWTON_MAXITER = 100


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    q: int
    points: np.ndarray
    weights: np.ndarray


def legendre(n, x):
    """Return ``(P_n(x), P_n'(x))`` by the three-term recurrence."""
    x = np.asarray(x, dtype=np.float64)
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    # derivative from (1 - x^2) P_n' = n (P_{n-1} - x P_n); endpoints handled separately
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (p0 - x * p1) / (1.0 - x * x)
    edge = np.abs(x) == 1.0
    if np.any(edge):
        dp = np.where(edge, np.sign(x) ** (n + 1) * n * (n + 1) / 2.0, dp)
    return p1, dp


def _newton(f, x0):
    x = x0.copy()
    for _ in range(NEWTON_MAXITER):
        dx = f(x)
        x -= dx
        if np.max(np.abs(dx), initial=0.0) <= NEWTON_TOL:
            break
    return x


def _symmetrize(x):
    x = 0.5 * (x - x[::-1])
    if x.size % 2:
        x[x.size // 2] = 0.0
    return x


def make_quadrature(kind, q):
    """Build a Gauss-Legendre or Gauss-Lobatto-Legendre rule on [-1, 1].

    Nodes are found by Newton iteration on ``P_q`` (Gauss) or on ``P_{q-1}'``
    (Lobatto interior points), starting from Chebyshev points.
    """
    if kind not in QUADRATURE_KINDS:
        raise ValueError(f"unknown quadrature kind {kind!r}; expected one of {QUADRATURE_KINDS}")
    q = int(q)
    if kind == GAUSS_LEGENDRE:
        if q < 1:
            raise ValueError(f"Gauss-Legendre rule needs q >= 1, got {q}")
        x0 = -np.cos((2 * np.arange(q) + 1) * np.pi / (2 * q))

        def step(x):
            p, dp = legendre(q, x)
            return p / dp

        x = _symmetrize(_newton(step, x0))
        _, dp = legendre(q, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
    else:
        if q < 2:
            raise ValueError(f"Gauss-Lobatto-Legendre rule needs q >= 2, got {q}")
        n = q - 1
        x0 = -np.cos(np.pi * np.arange(1, n) / n)

        def step(x):
            p, dp = legendre(n, x)
            # (1 - x^2) P'' = 2 x P' - n (n + 1) P
            d2p = (2.0 * x * dp - n * (n + 1) * p) / (1.0 - x * x)
            return dp / d2p

        interior = _newton(step, x0) if n > 1 else np.empty(0)
        x = _symmetrize(np.concatenate(([-1.0], interior, [1.0])))
        x[0], x[-1] = -1.0, 1.0
        p, _ = legendre(n, x)
        w = 2.0 / (n * (n + 1) * p * p)
    w = 0.5 * (w + w[::-1])
    x.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(kind, q, x, w)


def barycentric_weights(nodes):
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_interp_matrix(nodes, points):
    """Values of the Lagrange polynomials on ``nodes`` at ``points``; shape (len(points), len(nodes))."""
    bw = barycentric_weights(nodes)
    out = np.zeros((points.size, nodes.size))
    for i, x in enumerate(points):
        hit = np.nonzero(x == nodes)[0]
        if hit.size:
            out[i, hit[0]] = 1.0
            continue
        t = bw / (x - nodes)
        out[i] = t / t.sum()
    return out


def lagrange_diff_matrix(nodes):
    """Derivative of each Lagrange polynomial at each node; rows sum to zero."""
    bw = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    d = (bw[None, :] / bw[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


@dataclass(frozen=True)
class TensorBasis:
    """Degree-p Lagrange basis on GLL nodes, tabulated at a 1D quadrature rule.

    ``interp1d`` and ``grad1d`` are stored with the quadrature index as row.
    """

    p: int
    q: int
    nodes: np.ndarray
    quad: QuadratureRule
    interp1d: np.ndarray
    grad1d: np.ndarray
    collocated: bool
    interp1d_t: np.ndarray = field(repr=False)
    grad1d_t: np.ndarray = field(repr=False)

    @property
    def num_nodes(self):
        return (self.p + 1) ** 3

    @property
    def num_qpts(self):
        return self.q**3

    def qweights3d(self):
        w = self.quad.weights
        return np.kron(w, np.kron(w, w))

    def plan(self, m=1, **kwargs):
        return KernelPlan(self.p, self.q, m, collocated=self.collocated, **kwargs)


def make_basis(p, quad):
    """Tabulate the GLL-node Lagrange basis of degree ``p`` at ``quad.points``."""
    if p < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {p}")
    nodes = make_quadrature(GAUSS_LOBATTO_LEGENDRE, p + 1).points
    interp = lagrange_interp_matrix(nodes, quad.points)
    grad = interp @ lagrange_diff_matrix(nodes)
    collocated = interp.shape[0] == interp.shape[1] and np.array_equal(interp, np.eye(p + 1))
    for a in (interp, grad):
        a.flags.writeable = False
    return TensorBasis(
        p=p,
        q=quad.q,
        nodes=nodes,
        quad=quad,
        interp1d=interp,
        grad1d=grad,
        collocated=collocated,
        interp1d_t=np.ascontiguousarray(interp.T),
        grad1d_t=np.ascontiguousarray(grad.T),
    )


def basis_terms(basis, mode, transpose, skip_identity=True):
    """1D factor triples ``(x, y, z)`` of each Kronecker term for ``mode``.

    Interp has one term; Grad has three, term ``d`` differentiating along
    direction ``d``.  With a collocated basis the identity factors are ``None``.
    """
    b = basis.interp1d_t if transpose else basis.interp1d
    g = basis.grad1d_t if transpose else basis.grad1d
    if basis.collocated and skip_identity:
        b = None
    if mode == INTERP:
        return [(b, b, b)]
    if mode == GRAD:
        return [(g, b, b), (b, g, b), (b, b, g)]
    raise ValueError(f"unknown evaluation mode {mode!r}")


def apply_tensor_3d(basis, mode, direction, m, u, plan=None, out=None):
    """Sum-factorized evaluation of the 3D interpolation or gradient operator.

    Parameters
    ----------
    basis : TensorBasis
    mode : {"interp", "grad"}
    direction : {"forward", "transpose"}
    m : int
        Number of field components.
    u : ndarray
        Forward: ``(E, m, (p+1)**3)``.  Transpose: ``(E, m, q**3)`` for interp
        or ``(E, m, 3, q**3)`` for grad.  A flat array is read as one element.
    plan : KernelPlan, optional
        Kernel path, batch size and operation counter.

    Returns
    -------
    ndarray
        Forward grad output is component-major: ``(E, m, 3, q**3)`` holding all
        d/dr0 values, then d/dr1, then d/dr2.
    """
    if direction not in (FORWARD, TRANSPOSE):
        raise ValueError(f"unknown direction {direction!r}")
    if mode not in (INTERP, GRAD):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    transpose = direction == TRANSPOSE
    if plan is None:
        plan = basis.plan(m)
    nn, nq = basis.num_nodes, basis.num_qpts
    flat = np.ndim(u) == 1
    u = np.asarray(u, dtype=np.float64)
    nterms = 3 if mode == GRAD else 1
    n_in = nq if transpose else nn
    n_out = nn if transpose else nq
    in_tail = (nterms, nq) if (transpose and mode == GRAD) else (n_in,)
    out_tail = (nterms, nq) if (not transpose and mode == GRAD) else (n_out,)
    if flat:
        if u.size != m * int(np.prod(in_tail)):
            raise ValueError(f"expected {m * int(np.prod(in_tail))} entries, got {u.size}")
        u = u.reshape((1, m) + in_tail)
    if u.shape[1:] != (m,) + in_tail:
        raise ValueError(f"input shape {u.shape} does not match (E, {m}, {in_tail})")
    ne = u.shape[0]
    u = np.ascontiguousarray(u)
    if out is None:
        out = np.empty((ne, m) + out_tail)
    terms = basis_terms(basis, mode, transpose, skip_identity=plan.path == SUM_FACTORIZED)
    _apply_terms(plan, terms, u, out, transpose, n_in, n_out)
    if flat:
        return out.reshape(-1)
    return out


def _apply_terms(plan, terms, u, out, transpose, n_in, n_out, scratch=None):
    ne, m = u.shape[:2]
    nterms = len(terms)
    if scratch is None:
        scratch = np.empty(2 * plan.block * m * max(n_in, n_out))
    if nterms > 1:
        staging = np.empty(plan.block * m * (n_in if transpose else n_out))
    for start in range(0, ne, plan.block):
        stop = min(start + plan.block, ne)
        rows = (stop - start) * m
        if nterms == 1:
            tensor_apply(plan, terms[0], u[start:stop].reshape(rows, n_in),
                         out[start:stop].reshape(rows, n_out), scratch=scratch)
        elif transpose:
            dest = out[start:stop].reshape(rows, n_out)
            src = u[start:stop]
            for d, mats in enumerate(terms):
                comp = staging[:rows * n_in].reshape(stop - start, m, n_in)
                comp[...] = src[:, :, d]
                tensor_apply(plan, mats, comp.reshape(rows, n_in), dest,
                             accumulate=d > 0, scratch=scratch)
        else:
            src = u[start:stop].reshape(rows, n_in)
            blk = out[start:stop]
            tmp = staging[:rows * n_out].reshape(rows, n_out)
            for d, mats in enumerate(terms):
                tensor_apply(plan, mats, src, tmp, scratch=scratch)
                blk[:, :, d] = tmp.reshape(stop - start, m, n_out)
    return out
