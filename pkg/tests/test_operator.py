import numpy as np
import pytest

from matfree.bench import BPS, BPConfig, bp_setup
from matfree.mesh import build_mesh
from matfree.operator import make_operator, operator_apply, operator_diagonal, reference_assemble
from matfree.tensor_basis import GAUSS_LEGENDRE as GL, make_basis, make_quadrature


def op_for(bp, p, n, deform=None, threads=1):
    return bp_setup(BPConfig(bp, p, (n, n, n), deform, threads=threads)).op


def rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def test_stiffness_annihilates_constants():
    mesh = build_mesh(2, 2, 2, 3, "sine")
    op = make_operator(mesh, make_basis(3, make_quadrature(GL, 5)), alpha=1.0, beta=0.0)
    y = operator_apply(op, np.ones(op.size))
    scale = np.max(np.abs(operator_diagonal(op)))
    assert np.max(np.abs(y)) <= 1e-11 * scale


@pytest.mark.parametrize("deform", [None, "sine"])
def test_mass_of_ones_is_volume(deform):
    op = op_for("bp1", 3, 2, deform)
    ones = np.ones(op.size)
    assert abs(ones @ operator_apply(op, ones) - 1.0) <= 1e-10


@pytest.mark.parametrize("bp", ["bp1", "bp3", "bp4", "bp6"])
@pytest.mark.parametrize("deform", [None, "sine"])
def test_apply_matches_dense_p3(bp, deform):
    op = op_for(bp, 3, 2, deform)
    K = reference_assemble(op)
    x = np.random.default_rng(0).standard_normal(op.size)
    assert rel_err(operator_apply(op, x), K @ x) <= 1e-12
    assert rel_err(operator_diagonal(op), np.diag(K)) <= 1e-12


def test_single_p1_element_mass_diagonal():
    op = op_for("bp1", 1, 1)
    # int phi_i^2 over the unit cube for trilinear phi: (1/3)^3
    np.testing.assert_allclose(operator_diagonal(op), (1 / 3) ** 3, rtol=1e-14)
    np.testing.assert_allclose(operator_diagonal(op), np.diag(reference_assemble(op)), rtol=1e-13)


def test_diffusion_diagonal_positive():
    op = op_for("bp3", 3, 3, "sine")
    d = operator_diagonal(op)
    free = op.free_mask()
    assert np.all(d[free] > 0)
    assert np.all(d[~free] == 1.0)


def test_mixed_coefficients():
    mesh = build_mesh(2, 1, 2, 2, "sine")
    op = make_operator(mesh, make_basis(2, make_quadrature(GL, 4)), m=2, alpha=0.7, beta=1.9, dirichlet=True)
    K = reference_assemble(op)
    x = np.random.default_rng(1).standard_normal(op.size)
    assert rel_err(operator_apply(op, x), K @ x) <= 1e-12
    assert rel_err(operator_diagonal(op), np.diag(K)) <= 1e-12


def test_dense_mass_properties():
    K = reference_assemble(op_for("bp1", 2, 2, "sine"))
    assert abs(K.sum() - 1.0) <= 1e-10
    assert np.max(np.abs(K - K.T)) <= 1e-13 * np.max(np.abs(K))


def test_dense_diffusion_spectrum():
    mesh = build_mesh(2, 2, 2, 2, "sine")
    b = make_basis(2, make_quadrature(GL, 4))
    free = make_operator(mesh, b, alpha=1.0, beta=0.0)
    assert np.linalg.eigvalsh(reference_assemble(free)).min() >= -1e-10
    constrained = make_operator(mesh, b, alpha=1.0, beta=0.0, dirichlet=True)
    np.linalg.cholesky(reference_assemble(constrained))


def test_assembly_guard():
    op = op_for("bp2", 2, 10)
    with pytest.raises(ValueError, match="refusing"):
        reference_assemble(op)


@pytest.mark.parametrize("bp", BPS)
def test_symmetry(bp):
    op = op_for(bp, 3, 3, "sine")
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal(op.size), rng.standard_normal(op.size)
    lhs, rhs = operator_apply(op, x) @ y, x @ operator_apply(op, y)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_positive_semidefinite():
    mesh = build_mesh(3, 3, 3, 2, "sine")
    b = make_basis(2, make_quadrature(GL, 4))
    free = make_operator(mesh, b, alpha=1.0, beta=0.0)
    cons = make_operator(mesh, b, alpha=1.0, beta=0.0, dirichlet=True)
    rng = np.random.default_rng(3)
    mask = cons.free_mask()
    for _ in range(5):
        x = rng.standard_normal(free.size)
        assert x @ operator_apply(free, x) >= -1e-10 * (x @ x)
        xf = np.where(mask, x, 0.0)
        assert xf @ operator_apply(cons, xf) > 0


def test_constrained_entries_pass_through():
    op = op_for("bp3", 2, 2)
    x = np.random.default_rng(4).standard_normal(op.size)
    y = operator_apply(op, x)
    assert np.array_equal(y[op.constrained], x[op.constrained])
    x2 = x.copy()
    x2[op.constrained] = 123.0
    y2 = operator_apply(op, x2)
    free = op.free_mask()
    assert np.array_equal(y[free], y2[free])


@pytest.mark.parametrize("bp", ["bp1", "bp3", "bp6"])
def test_apply_deterministic_across_workers(bp):
    x = np.random.default_rng(5).standard_normal(op_for(bp, 3, 3).size)
    ref = operator_apply(op_for(bp, 3, 3, "sine", threads=1), x)
    for w in (2, 4, 8):
        assert np.array_equal(operator_apply(op_for(bp, 3, 3, "sine", threads=w), x), ref)


def test_apply_block_invariance():
    mesh = build_mesh(3, 3, 2, 3, "sine")
    b = make_basis(3, make_quadrature(GL, 5))
    x = np.random.default_rng(6).standard_normal(mesh.n_L)
    ref = operator_apply(make_operator(mesh, b, alpha=1.0, beta=0.0, block=1), x)
    for block in (3, 8, 64):
        assert np.array_equal(operator_apply(make_operator(mesh, b, alpha=1.0, beta=0.0, block=block), x), ref)


def test_shape_mismatch():
    op = op_for("bp1", 1, 1)
    with pytest.raises(ValueError):
        operator_apply(op, np.ones(op.size + 1))


def test_coefficient_validation():
    mesh = build_mesh(1, 1, 1, 1)
    b = make_basis(1, make_quadrature(GL, 3))
    with pytest.raises(ValueError):
        make_operator(mesh, b, alpha=0.0, beta=0.0)
    with pytest.raises(ValueError):
        make_operator(mesh, b, alpha=-1.0, beta=1.0)
