import numpy as np
import pytest

from matfree.bench import BPConfig, bp_setup
from matfree.krylov import NotSPDError, dot, pcg
from matfree.operator import operator_apply, operator_diagonal, reference_assemble


def test_diagonal_system_finite_termination():
    A = np.diag([1.0, 2.0, 3.0])
    x, rep = pcg(lambda v: A @ v, np.ones(3), tol=1e-14)
    assert rep.iterations <= 3 and rep.converged
    np.testing.assert_allclose(x, [1, 1 / 2, 1 / 3], rtol=1e-13)
    assert rep.iterations == len(rep.residual_history) - 1


def test_jacobi_on_diagonal_system_is_exact_in_one_step():
    A = np.diag([1.0, 2.0, 3.0])
    x, rep = pcg(lambda v: A @ v, np.ones(3), precond=np.diag(A), tol=1e-14)
    assert rep.iterations == 1
    np.testing.assert_allclose(x, [1, 1 / 2, 1 / 3], rtol=1e-15)


@pytest.mark.parametrize("bp", ["bp1", "bp2"])
@pytest.mark.parametrize("deform", [None, "sine"])
def test_mass_solve_returns_f(bp, deform):
    pr = bp_setup(BPConfig(bp, 3, (2, 2, 2), deform))
    tol = 1e-10
    u, rep = pcg(pr.op, pr.rhs, operator_diagonal(pr.op), tol=tol)
    assert rep.converged
    # u - f = M^-1 r, so the error is bounded by ||M^-1|| ||r|| (dense oracle)
    K = reference_assemble(pr.op)
    lam_min = np.linalg.eigvalsh(K)[0]
    r = pr.rhs - K @ u
    assert np.linalg.norm(u - pr.f_nodal) <= np.linalg.norm(r) / lam_min * (1 + 1e-6) + 1e-14
    assert rep.residual_history[-1] <= tol * np.linalg.norm(pr.rhs)


def test_mass_solve_tight_tolerance():
    pr = bp_setup(BPConfig("bp1", 2, (2, 2, 2)))
    u, _ = pcg(pr.op, pr.rhs, operator_diagonal(pr.op), tol=1e-10)
    assert np.max(np.abs(u - pr.f_nodal)) <= 1e-9


def test_fixed_iterations_mode():
    pr = bp_setup(BPConfig("bp3", 3, (3, 3, 3)))
    _, rep = pcg(pr.op, pr.rhs, operator_diagonal(pr.op), fixed_iterations=7)
    assert rep.iterations == 7 and len(rep.residual_history) == 8
    assert 0 < rep.apply_time_seconds <= rep.total_time_seconds


def test_zero_rhs():
    x, rep = pcg(lambda v: 2 * v, np.zeros(5))
    assert rep.iterations == 0 and rep.converged and np.all(x == 0)


def test_indefinite_operator_rejected():
    A = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(NotSPDError):
        pcg(lambda v: A @ v, np.array([0.0, 1.0, 0.0]))


def test_nan_detected():
    with pytest.raises(FloatingPointError):
        pcg(lambda v: v * np.nan, np.ones(3))
    with pytest.raises(FloatingPointError):
        pcg(lambda v: v, np.array([1.0, np.inf]))


def test_energy_norm_monotone():
    pr = bp_setup(BPConfig("bp3", 3, (2, 2, 2), "sine"))
    K = reference_assemble(pr.op)
    rng = np.random.default_rng(0)
    b = rng.standard_normal(pr.op.size)
    b[pr.op.constrained] = 0.0
    xstar = np.linalg.solve(K, b)
    energies = []
    for k in range(0, 40, 3):
        x, _ = pcg(pr.op, b, operator_diagonal(pr.op), fixed_iterations=k)
        e = x - xstar
        energies.append(e @ K @ e)
    assert all(b <= a * (1 + 1e-12) + 1e-28 for a, b in zip(energies, energies[1:]))
    assert energies[-1] < 1e-6 * energies[0]


def test_blocked_dot_matches_numpy():
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(5000), rng.standard_normal(5000)
    assert dot(x, y) == pytest.approx(np.dot(x, y), rel=1e-13)


# frozen after the first run: BP3 on 4x4x4, p=2, Jacobi, tol 1e-10
BP3_P2_ITERATIONS = 4


def test_bp3_iteration_anchor_and_determinism():
    results = []
    for w in (1, 2, 4, 8):
        pr = bp_setup(BPConfig("bp3", 2, (4, 4, 4), threads=w))
        x, rep = pcg(pr.op, pr.rhs, operator_diagonal(pr.op), tol=1e-10)
        results.append((rep.iterations, rep.residual_history, x))
    assert results[0][0] == BP3_P2_ITERATIONS
    for its, hist, x in results[1:]:
        assert its == results[0][0]
        assert hist == results[0][1]
        assert np.array_equal(x, results[0][2])


def test_random_rhs_determinism():
    rng = np.random.default_rng(2)
    ref = None
    for w in (1, 2, 4, 8):
        pr = bp_setup(BPConfig("bp4", 3, (3, 3, 3), "sine", threads=w))
        if ref is None:
            b = rng.standard_normal(pr.op.size)
            b[pr.op.constrained] = 0.0
        x, rep = pcg(pr.op, b, operator_diagonal(pr.op), tol=1e-10)
        if ref is None:
            ref = (rep.iterations, rep.residual_history, x)
        else:
            assert (rep.iterations, rep.residual_history) == ref[:2]
            assert np.array_equal(x, ref[2])


@pytest.mark.parametrize("p", [2, 4])
def test_jacobi_not_worse_than_plain_cg(p):
    pr = bp_setup(BPConfig("bp3", p, (4, 4, 4)))
    _, jac = pcg(pr.op, pr.rhs, operator_diagonal(pr.op), tol=1e-10)
    _, plain = pcg(pr.op, pr.rhs, None, tol=1e-10)
    assert jac.iterations <= 1.1 * plain.iterations
