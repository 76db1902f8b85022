import numpy as np
import pytest

from matfree.kernels import (
    GRAD,
    INTERP,
    NAIVE,
    SUM_FACTORIZED,
    FlopCounter,
    KernelPlan,
    contract_batch,
    flops_estimate,
)
from matfree.qfunctions import QF_FLOPS
from matfree.tensor_basis import (
    FORWARD,
    GAUSS_LEGENDRE as GL,
    GAUSS_LOBATTO_LEGENDRE as GLL,
    TRANSPOSE,
    apply_tensor_3d,
    make_basis,
    make_quadrature,
)


@pytest.mark.parametrize("path", [NAIVE, SUM_FACTORIZED])
@pytest.mark.parametrize("dim", [0, 1, 2])
def test_identity_contraction(path, dim):
    u = np.random.default_rng(0).standard_normal((3, 4, 4, 4))
    out = contract_batch(KernelPlan(3, 4, path=path), np.eye(4), dim, u)
    assert np.array_equal(out, u)


@pytest.mark.parametrize("path", [NAIVE, SUM_FACTORIZED])
def test_two_by_two_by_hand(path):
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    u = np.arange(8.0).reshape(1, 2, 2, 2)  # u[0, k, j, i] = i + 2 j + 4 k
    out = contract_batch(KernelPlan(1, 2, path=path), M, 0, u)
    for k in range(2):
        for j in range(2):
            a, b = u[0, k, j, 0], u[0, k, j, 1]
            assert out[0, k, j, 0] == 1 * a + 2 * b
            assert out[0, k, j, 1] == 3 * a + 4 * b
    out = contract_batch(KernelPlan(1, 2, path=path), M, 2, u)
    for j in range(2):
        for i in range(2):
            a, b = u[0, 0, j, i], u[0, 1, j, i]
            assert out[0, 0, j, i] == a + 2 * b
            assert out[0, 1, j, i] == 3 * a + 4 * b


@pytest.mark.parametrize("dim", [0, 1, 2])
def test_paths_agree(dim):
    rng = np.random.default_rng(dim)
    M = rng.standard_normal((6, 5))
    u = rng.standard_normal((8, 5, 5, 5))
    a = contract_batch(KernelPlan(4, 6, path=SUM_FACTORIZED), M, dim, u)
    b = contract_batch(KernelPlan(4, 6, path=NAIVE), M, dim, u)
    assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(b))
    # both sum the contracted index sequentially from zero
    assert np.array_equal(a, b)


def test_contract_shape_errors():
    plan = KernelPlan(2, 3)
    with pytest.raises(ValueError):
        contract_batch(plan, np.ones((3, 2)), 0, np.ones((1, 3, 3, 3)))
    with pytest.raises(ValueError):
        contract_batch(plan, np.ones((3, 3)), 3, np.ones((1, 3, 3, 3)))
    with pytest.raises(ValueError):
        contract_batch(plan, np.ones((3, 3)), 0, np.ones((3, 3, 3)))


def test_plan_validation():
    with pytest.raises(ValueError):
        KernelPlan(2, 3, block=0)
    with pytest.raises(ValueError):
        KernelPlan(2, 3, path="blas")


def test_flops_smallest_case():
    assert flops_estimate(KernelPlan(1, 1, 1), INTERP) == 28


@pytest.mark.parametrize("p", [2, 4, 8])
@pytest.mark.parametrize("mode", [INTERP, GRAD])
@pytest.mark.parametrize("direction", [FORWARD, TRANSPOSE])
@pytest.mark.parametrize("m", [1, 3])
def test_counter_matches_estimate(p, mode, direction, m):
    q = p + 2
    b = make_basis(p, make_quadrature(GL, q))
    counter = FlopCounter()
    plan = b.plan(m, counter=counter)
    E = 5
    nin = (p + 1) ** 3 if direction == FORWARD else q**3
    shape = (E, m, 3, nin) if (mode == GRAD and direction == TRANSPOSE) else (E, m, nin)
    apply_tensor_3d(b, mode, direction, m, np.ones(shape), plan=plan)
    assert counter.count == E * flops_estimate(plan, mode)


@pytest.mark.parametrize("p", [2, 4])
@pytest.mark.parametrize("mode", [INTERP, GRAD])
def test_counter_matches_estimate_collocated_and_naive(p, mode):
    b = make_basis(p, make_quadrature(GLL, p + 1))
    for path in (SUM_FACTORIZED, NAIVE):
        counter = FlopCounter()
        plan = b.plan(1, counter=counter, path=path)
        apply_tensor_3d(b, mode, FORWARD, 1, np.ones((3, 1, (p + 1) ** 3)), plan=plan)
        assert counter.count == 3 * flops_estimate(plan, mode)


@pytest.mark.parametrize("p", [1, 2, 4, 8])
def test_collocated_apply_cheaper(p):
    gl = KernelPlan(p, p + 2, 1)
    gll = KernelPlan(p, p + 1, 1, collocated=True)
    bp3 = 2 * flops_estimate(gl, GRAD) + QF_FLOPS["diffusion"] * (p + 2) ** 3
    bp5 = 2 * flops_estimate(gll, GRAD) + QF_FLOPS["diffusion"] * (p + 1) ** 3
    assert bp5 < bp3


@pytest.mark.parametrize("mode", [INTERP, GRAD])
def test_block_size_invariance(mode):
    rng = np.random.default_rng(3)
    b = make_basis(4, make_quadrature(GL, 6))
    u = rng.standard_normal((13, 2, 125))
    ref = apply_tensor_3d(b, mode, FORWARD, 2, u, plan=b.plan(2, block=1))
    for block in (2, 5, 8, 13, 64):
        out = apply_tensor_3d(b, mode, FORWARD, 2, u, plan=b.plan(2, block=block))
        assert np.array_equal(out, ref)


@pytest.mark.parametrize("mode", [INTERP, GRAD])
def test_naive_matches_sumfact(mode):
    rng = np.random.default_rng(4)
    b = make_basis(4, make_quadrature(GL, 6))
    u = rng.standard_normal((8, 1, 125))
    a = apply_tensor_3d(b, mode, FORWARD, 1, u)
    n = apply_tensor_3d(b, mode, FORWARD, 1, u, plan=b.plan(1, path=NAIVE))
    assert np.max(np.abs(a - n)) <= 1e-13 * np.max(np.abs(n))
