"""BP1-BP6 problem definitions, verification helpers and throughput metrics.

Worker threads stand in for ranks: ``P`` in every record is the thread count.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple

import numpy as np

from matfree.kernels import INTERP
from matfree.krylov import DEFAULT_TOL, pcg
from matfree.mesh import build_mesh
from matfree.operator import make_operator, operator_apply, operator_diagonal
from matfree.qfunctions import MASS, compute_qdata
from matfree.restriction import apply_g, make_restriction
from matfree.tensor_basis import (
    FORWARD,
    GAUSS_LEGENDRE,
    GAUSS_LOBATTO_LEGENDRE,
    apply_tensor_3d,
    make_basis,
    make_quadrature,
)

BPS = ("bp1", "bp2", "bp3", "bp4", "bp5", "bp6")
DEFAULT_ITERS = 20
TIMING_REPEATS = 3
TARGET_EFFICIENCY = 0.8


@dataclass(frozen=True)
class BPConfig:
    bp: str
    p: int
    dims: tuple = (2, 2, 2)
    deformation: str | None = None
    threads: int = 1
    iters: int = DEFAULT_ITERS
    mode: str = "bench"
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.bp not in BPS:
            raise ValueError(f"unknown benchmark problem {self.bp!r}; expected one of {BPS}")
        if self.p < 1:
            raise ValueError(f"degree must be >= 1, got {self.p}")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be three positive element counts, got {self.dims}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.mode not in ("bench", "solve"):
            raise ValueError(f"mode must be 'bench' or 'solve', got {self.mode!r}")

    @property
    def number(self):
        return int(self.bp[2:])

    @property
    def m(self):
        return 1 if self.number % 2 else 3

    @property
    def collocated(self):
        return self.number >= 5

    @property
    def quad_kind(self):
        return GAUSS_LOBATTO_LEGENDRE if self.collocated else GAUSS_LEGENDRE

    @property
    def q(self):
        return self.p + 1 if self.collocated else self.p + 2

    @property
    def is_mass(self):
        return self.number <= 2

    @property
    def alpha(self):
        return 0.0 if self.is_mass else 1.0

    @property
    def beta(self):
        return 1.0 if self.is_mass else 0.0

    @property
    def num_elements(self):
        return int(np.prod(self.dims))

    @property
    def n(self):
        """Total dofs: components times unconstrained scalar nodes."""
        lattice = [d * self.p + 1 for d in self.dims]
        if not self.is_mass:
            lattice = [s - 2 for s in lattice]
        return self.m * int(np.prod(lattice))


def exact_solution(m):
    """``sin(pi x) sin(pi y) sin(pi z)`` in each of ``m`` components; input ``(3, npts)``."""

    def u(x):
        x = np.asarray(x, dtype=np.float64)
        val = np.prod(np.sin(np.pi * x), axis=0)
        return np.tile(val, (m, 1))

    return u


def forcing(config):
    u = exact_solution(config.m)
    if config.is_mass:
        return u
    return lambda x: 3.0 * np.pi**2 * u(x)


class BPProblem(NamedTuple):
    op: object
    rhs: np.ndarray
    exact: Callable
    mesh: object
    f_nodal: np.ndarray


def bp_setup(config, counter=None):
    """Operator, right-hand side ``B f`` and exact solution for one BP instance."""
    mesh = build_mesh(*config.dims, config.p, config.deformation)
    basis = make_basis(config.p, make_quadrature(config.quad_kind, config.q))
    op = make_operator(mesh, basis, config.m, config.alpha, config.beta,
                       dirichlet=not config.is_mass, workers=config.threads, counter=counter)
    f_nodal = forcing(config)(mesh.coords).reshape(-1)
    mass = op if config.is_mass else make_operator(mesh, basis, config.m, 0.0, 1.0,
                                                   workers=config.threads)
    rhs = operator_apply(mass, f_nodal)
    rhs[op.constrained] = 0.0
    return BPProblem(op, rhs, exact_solution(config.m), mesh, f_nodal)


def l2_error(mesh, u_h, exact, m=1):
    """L2 norm of ``u_h - exact`` using Gauss-Legendre quadrature with ``q = p + 2``."""
    basis = make_basis(mesh.p, make_quadrature(GAUSS_LEGENDRE, mesh.p + 2))
    wdet = compute_qdata(mesh, basis, MASS).data
    r3 = make_restriction(mesh, 3)
    rm = make_restriction(mesh, m)
    xq = apply_tensor_3d(basis, INTERP, FORWARD, 3, apply_g(r3, mesh.coords))
    uq = apply_tensor_3d(basis, INTERP, FORWARD, m, apply_g(rm, u_h))
    E, _, Q = xq.shape
    pts = xq.transpose(1, 0, 2).reshape(3, E * Q)
    ref = np.asarray(exact(pts)).reshape(m, E, Q).transpose(1, 0, 2)
    return math.sqrt(float(np.sum(wdet[:, None, :] * (uq - ref) ** 2)))


# ---------------------------------------------------------------------------
# records and metrics
# ---------------------------------------------------------------------------


@dataclass
class BenchRecord:
    bp: str
    p: int
    q: int
    E: int
    n: int
    P: int
    iterations: int
    seconds: float
    dofs_rate: float
    n_per_rank: float

    def to_dict(self):
        return asdict(self)


def make_record(config, iterations, seconds):
    n = config.n
    return BenchRecord(
        bp=config.bp,
        p=config.p,
        q=config.q,
        E=config.num_elements,
        n=n,
        P=config.threads,
        iterations=int(iterations),
        seconds=float(seconds),
        dofs_rate=dofs_rate(n, iterations, seconds),
        n_per_rank=n / config.threads,
    )


def dofs_rate(n, iterations, seconds):
    """Degrees of freedom times iterations per second."""
    return n * iterations / seconds


def parallel_efficiency(t1, tp, P):
    return t1 / (P * tp)


def time_to_solution(n, eta, P, r_max, C=1.0):
    """``C n / (eta P r_max)``."""
    return C * n / (eta * P * r_max)


def t_eta(n_eta, r_max, eta=TARGET_EFFICIENCY, C=1.0):
    """Run time at the strong-scale limit: ``(C / eta) n_eta / r_max``."""
    return C / eta * n_eta / r_max


def n_at_efficiency(points, target=TARGET_EFFICIENCY):
    """Smallest ``n/P`` where efficiency reaches ``target``.

    ``points`` are ``(n_per_rank, eta)`` pairs.  The first bracketing pair in
    ascending ``n/P`` is interpolated linearly in ``log(n/P)``; without a
    bracket the result is ``None`` (no extrapolation).
    """
    pts = sorted(points)
    for (x0, e0), (x1, e1) in zip(pts, pts[1:]):
        if e0 < target <= e1:
            if x0 == x1:
                return x0
            t = (target - e0) / (e1 - e0)
            return math.exp(math.log(x0) + t * (math.log(x1) - math.log(x0)))
    return None


def run_bench(config, timing_model=None):
    """Time the CG loop for ``config.iters`` fixed iterations (best of three).

    ``timing_model(n, P) -> seconds`` replaces the measurement; used to drive
    the metrics pipeline with synthetic timings.
    """
    if timing_model is not None:
        return make_record(config, config.iters, timing_model(config.n, config.threads))
    problem = bp_setup(config)
    diag = operator_diagonal(problem.op)
    best = math.inf
    iterations = config.iters
    for _ in range(TIMING_REPEATS):
        if config.mode == "bench":
            t0 = time.perf_counter()
            _, report = pcg(problem.op, problem.rhs, diag, fixed_iterations=config.iters)
            elapsed = time.perf_counter() - t0
        else:
            t0 = time.perf_counter()
            _, report = pcg(problem.op, problem.rhs, diag, tol=config.tol)
            elapsed = time.perf_counter() - t0
        iterations = report.iterations
        best = min(best, elapsed)
    return make_record(config, iterations, best)


@dataclass
class ScalingRecord:
    T_1: float
    T_P: float
    eta: float
    r_max: float
    n_eta: float | None
    C: float


@dataclass
class SweepResult:
    """Sweep rows sorted by ``n/P`` ascending plus the fitted strong-scaling summary."""

    rows: list
    r_max: float
    n_08: float | None
    C: float
    t_08: float | None

    def table(self):
        out = []
        for rec, sc in self.rows:
            out.append({
                "bp": rec.bp, "p": rec.p, "q": rec.q, "E": rec.E, "n": rec.n, "P": rec.P,
                "iters": rec.iterations, "seconds": rec.seconds, "dofs_rate": rec.dofs_rate,
                "n_per_rank": rec.n_per_rank, "eta": sc.eta,
            })
        return out


def run_scaling_sweep(bp, p, dims_list, threads_list, iters=DEFAULT_ITERS, deformation=None,
                      timing_model=None):
    """Benchmark every ``(dims, threads)`` pair and derive efficiency metrics.

    ``n_0.8`` is taken from rows with ``P > 1`` (``P = 1`` rows have efficiency
    1 by definition and carry no scaling information).
    """
    threads_list = list(threads_list)
    if 1 not in threads_list:
        raise ValueError("threads_list must include 1 for the baseline")
    records = []
    for dims in dims_list:
        for P in threads_list:
            cfg = BPConfig(bp, p, tuple(dims), deformation, threads=P, iters=iters)
            records.append(run_bench(cfg, timing_model=timing_model))

    baseline = {(r.E, r.n): r.seconds for r in records if r.P == 1}
    etas = [parallel_efficiency(baseline[(r.E, r.n)], r.seconds, r.P) for r in records]
    r_max = max(r.dofs_rate / r.P for r in records)
    n_08 = n_at_efficiency([(r.n_per_rank, eta) for r, eta in zip(records, etas) if r.P > 1])
    g = np.array([time_to_solution(r.n, eta, r.P, r_max) for r, eta in zip(records, etas)])
    t = np.array([r.seconds for r in records])
    C = float(np.dot(t, g) / np.dot(g, g))
    rows = [
        (r, ScalingRecord(baseline[(r.E, r.n)], r.seconds, eta, r_max, n_08, C))
        for r, eta in zip(records, etas)
    ]
    rows.sort(key=lambda row: (row[0].n_per_rank, row[0].P))
    t_08 = t_eta(n_08, r_max, TARGET_EFFICIENCY, C) if n_08 is not None else None
    return SweepResult(rows, r_max, n_08, C, t_08)
