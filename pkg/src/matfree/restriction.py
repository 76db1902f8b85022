"""Element restriction: L-vector to E-vector copy and its accumulating transpose."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from matfree._pool import run_chunks
from matfree.mesh import element_colors

NUM_COLORS = 8


@numba.njit(nogil=True, cache=True)
def _gather(l_vec, idx, e_vec, e0, e1):
    m = l_vec.shape[0]
    size = idx.shape[1]
    for e in range(e0, e1):
        for c in range(m):
            for s in range(size):
                e_vec[e, c, s] = l_vec[c, idx[e, s]]


@numba.njit(nogil=True, cache=True)
def _scatter_add(e_vec, idx, elems, l_vec):
    m = l_vec.shape[0]
    size = idx.shape[1]
    for k in range(elems.shape[0]):
        e = elems[k]
        for c in range(m):
            for s in range(size):
                l_vec[c, idx[e, s]] += e_vec[e, c, s]


@dataclass(frozen=True)
class ElemRestriction:
    """Index map between a component-major L-vector ``(m, n_L)`` and E-vector ``(E, m, elem_size)``.

    ``colors[c]`` lists, in increasing order, the elements of parity class ``c``;
    elements in one class share no nodes, so each class can be accumulated
    in parallel without races.
    """

    E: int
    elem_size: int
    n_L: int
    m: int
    indices: np.ndarray
    colors: tuple

    @property
    def l_size(self):
        return self.m * self.n_L

    @property
    def e_size(self):
        return self.m * self.E * self.elem_size


def make_restriction(mesh, m=1):
    table = np.ascontiguousarray(mesh.elem_nodes, dtype=np.int64)
    parity = element_colors(mesh.dims)
    colors = tuple(np.flatnonzero(parity == c).astype(np.int64) for c in range(NUM_COLORS))
    return ElemRestriction(
        E=table.shape[0],
        elem_size=table.shape[1],
        n_L=mesh.n_L,
        m=m,
        indices=table,
        colors=colors,
    )


def _as_lvec(r, l_vec):
    l_vec = np.asarray(l_vec, dtype=np.float64)
    if l_vec.size != r.l_size:
        raise ValueError(f"L-vector has {l_vec.size} entries, expected {r.l_size}")
    return np.ascontiguousarray(l_vec.reshape(r.m, r.n_L))


def apply_g(r, l_vec, workers=1, out=None):
    """Copy L-vector values into per-element blocks: ``e[e, c, s] = l[c, indices[e, s]]``."""
    l2 = _as_lvec(r, l_vec)
    if out is None:
        out = np.empty((r.E, r.m, r.elem_size))
    run_chunks(lambda a, b: _gather(l2, r.indices, out, a, b), r.E, workers)
    return out


def apply_g_transpose(r, e_vec, workers=1, out=None):
    """Sum element blocks back into an L-vector of shape ``(m, n_L)``.

    Color classes are accumulated in increasing class id; within a class every
    node receives at most one contribution, so the result is bitwise identical
    for any worker count.
    """
    e_vec = np.asarray(e_vec, dtype=np.float64)
    if e_vec.size != r.e_size:
        raise ValueError(f"E-vector has {e_vec.size} entries, expected {r.e_size}")
    e3 = np.ascontiguousarray(e_vec.reshape(r.E, r.m, r.elem_size))
    if out is None:
        out = np.zeros((r.m, r.n_L))
    else:
        out[...] = 0.0
    for elems in r.colors:
        if elems.size == 0:
            continue
        run_chunks(lambda a, b, elems=elems: _scatter_add(e3, r.indices, elems[a:b], out),
                   elems.size, workers)
    return out


def multiplicity(r):
    """Number of elements containing each node, as a scalar L-vector."""
    counts = np.zeros(r.n_L)
    np.add.at(counts, r.indices.reshape(-1), 1.0)
    return counts
