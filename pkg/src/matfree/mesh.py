"""Structured hexahedral meshes of the unit cube with isoparametric coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from matfree.tensor_basis import GAUSS_LOBATTO_LEGENDRE, make_quadrature

SINE_AMPLITUDE = 0.05
DEFORMATIONS = (None, "sine")


@dataclass(frozen=True)
class HexMesh:
    """Lexicographically numbered Q_p mesh of [0, 1]^3.

    Global node ``(I, J, K)`` has L-index ``I + Nx * (J + Ny * K)`` with
    ``Nx = nx * p + 1``.  ``coords`` is a component-major L-vector of shape
    ``(3, n_L)``.
    """

    dims: tuple
    p: int
    n_L: int
    coords: np.ndarray
    boundary_nodes: np.ndarray
    deformation: str | None
    elem_nodes: np.ndarray

    @property
    def num_elements(self):
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def lattice_shape(self):
        """Node counts per direction ``(Nx, Ny, Nz)``."""
        return tuple(n * self.p + 1 for n in self.dims)


def sine_deformation(x, eps=SINE_AMPLITUDE):
    """``x_i + eps * prod_j sin(pi x_j)`` applied to every component."""
    bump = eps * np.prod(np.sin(np.pi * x), axis=0)
    return x + bump[None, :]


def _lattice_1d(n_elem, p):
    gll = make_quadrature(GAUSS_LOBATTO_LEGENDRE, p + 1).points
    ref = (gll + 1.0) / 2.0
    pts = np.empty(n_elem * p + 1)
    for e in range(n_elem):
        pts[e * p:e * p + p + 1] = (e + ref) / n_elem
    pts[-1] = 1.0
    return pts


def _element_table(dims, p):
    nx, ny, nz = dims
    Nx, Ny = nx * p + 1, ny * p + 1
    loc = np.arange(p + 1)
    # local lexicographic (i fastest) offsets within the global lattice
    lk, lj, li = np.meshgrid(loc, loc, loc, indexing="ij")
    local = (li + Nx * (lj + Ny * lk)).reshape(-1)
    ez, ey, ex = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    base = (ex * p + Nx * (ey * p + Ny * ez * p)).reshape(-1)
    return (base[:, None] + local[None, :]).astype(np.int64)


def build_mesh(nx, ny, nz, p, deformation=None):
    """Build a structured ``nx x ny x nz`` mesh of degree-``p`` hexahedra on [0, 1]^3."""
    dims = (int(nx), int(ny), int(nz))
    if min(dims) < 1:
        raise ValueError(f"element counts must be >= 1, got {dims}")
    if p < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {p}")
    if deformation == "none":
        deformation = None
    if deformation not in DEFORMATIONS:
        raise ValueError(f"unknown deformation {deformation!r}; expected None or 'sine'")

    axes = [_lattice_1d(n, p) for n in dims]
    z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    coords = np.stack([x.reshape(-1), y.reshape(-1), z.reshape(-1)])
    if deformation == "sine":
        coords = sine_deformation(coords)

    shape = tuple(n * p + 1 for n in dims)
    kk, jj, ii = np.meshgrid(*(np.arange(s) for s in reversed(shape)), indexing="ij")
    on_bnd = (
        (ii == 0) | (ii == shape[0] - 1)
        | (jj == 0) | (jj == shape[1] - 1)
        | (kk == 0) | (kk == shape[2] - 1)
    ).reshape(-1)
    boundary = np.flatnonzero(on_bnd)

    table = _element_table(dims, p)
    for a in (coords, boundary, table):
        a.flags.writeable = False
    return HexMesh(
        dims=dims,
        p=p,
        n_L=int(np.prod(shape)),
        coords=coords,
        boundary_nodes=boundary,
        deformation=deformation,
        elem_nodes=table,
    )


def element_node_indices(mesh, e):
    """L-indices of the ``(p+1)**3`` nodes of element ``e`` in local lexicographic order."""
    if not 0 <= e < mesh.num_elements:
        raise IndexError(f"element {e} out of range [0, {mesh.num_elements})")
    return mesh.elem_nodes[e].tolist()


def element_colors(dims):
    """Parity class ``(i % 2) + 2 (j % 2) + 4 (k % 2)`` of every element."""
    nx, ny, nz = dims
    ez, ey, ex = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    return ((ex % 2) + 2 * (ey % 2) + 4 * (ez % 2)).reshape(-1)
