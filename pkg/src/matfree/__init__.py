"""Matrix-free high-order hexahedral finite element operators and BP1-BP6 benchmarks."""

from matfree.tensor_basis import (
    GAUSS_LEGENDRE,
    GAUSS_LOBATTO_LEGENDRE,
    QuadratureRule,
    TensorBasis,
    apply_tensor_3d,
    make_basis,
    make_quadrature,
)
from matfree.mesh import HexMesh, build_mesh, element_node_indices
from matfree.restriction import ElemRestriction, make_restriction
from matfree.qfunctions import QData, apply_qf_diffusion, apply_qf_mass, compute_qdata
from matfree.operator import (
    MatFreeOperator,
    operator_apply,
    operator_diagonal,
    reference_assemble,
)
from matfree.krylov import SolveReport, pcg

__version__ = "0.1.0"

__all__ = [
    "GAUSS_LEGENDRE",
    "GAUSS_LOBATTO_LEGENDRE",
    "QuadratureRule",
    "TensorBasis",
    "apply_tensor_3d",
    "make_basis",
    "make_quadrature",
    "HexMesh",
    "build_mesh",
    "element_node_indices",
    "ElemRestriction",
    "make_restriction",
    "QData",
    "apply_qf_mass",
    "apply_qf_diffusion",
    "compute_qdata",
    "MatFreeOperator",
    "operator_apply",
    "operator_diagonal",
    "reference_assemble",
    "SolveReport",
    "pcg",
]
