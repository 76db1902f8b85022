"""Command-line driver: ``run``, ``sweep``, ``verify`` and ``quadcheck``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from matfree import bench
from matfree.krylov import DEFAULT_TOL, pcg
from matfree.operator import ASSEMBLY_LIMIT, operator_apply, operator_diagonal, reference_assemble
from matfree.tensor_basis import GAUSS_LEGENDRE, GAUSS_LOBATTO_LEGENDRE, make_quadrature

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

RUN_FIELDS = ["bp", "p", "q", "E", "n", "P", "iterations", "seconds", "dofs_rate", "n_per_rank"]
SWEEP_FIELDS = ["bp", "p", "q", "E", "n", "P", "iters", "seconds", "dofs_rate", "n_per_rank", "eta"]

RUN_SCHEMA = {
    "type": "object",
    "properties": {
        "bp": {"type": "string"},
        "p": {"type": "integer"},
        "q": {"type": "integer"},
        "E": {"type": "integer"},
        "n": {"type": "integer"},
        "P": {"type": "integer"},
        "iterations": {"type": "integer"},
        "seconds": {"type": "number"},
        "dofs_rate": {"type": "number"},
        "n_per_rank": {"type": "number"},
    },
    "required": RUN_FIELDS,
    "additionalProperties": False,
}


def parse_elems(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NXxNYxNZ, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive counts NXxNYxNZ, got {text!r}")
    return dims


def parse_elems_list(text):
    return [parse_elems(t) for t in text.split(",") if t]


def parse_int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="matfree", description="Matrix-free BP1-BP6 benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi=False):
        p.add_argument("--bp", choices=bench.BPS, default="bp3")
        p.add_argument("--degree", type=positive_int, default=2)
        if multi:
            p.add_argument("--elems", type=parse_elems_list, default=[(2, 2, 2)],
                           help="comma-separated list of NXxNYxNZ")
            p.add_argument("--threads", type=parse_int_list, default=[1])
        else:
            p.add_argument("--elems", type=parse_elems, default=(2, 2, 2), help="NXxNYxNZ")
            p.add_argument("--threads", type=positive_int, default=1)
        p.add_argument("--deform", choices=("none", "sine"), default="none")
        p.add_argument("--out", help="write output to FILE instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    run = sub.add_parser("run", help="run one benchmark and emit a record")
    common(run)
    run.add_argument("--iters", type=positive_int, default=bench.DEFAULT_ITERS)
    run.add_argument("--tol", type=float, default=DEFAULT_TOL)
    run.add_argument("--mode", choices=("solve", "bench"), default="bench")

    sweep = sub.add_parser("sweep", help="scaling sweep over sizes and thread counts")
    common(sweep, multi=True)
    sweep.add_argument("--iters", type=positive_int, default=bench.DEFAULT_ITERS)
    sweep.set_defaults(format="csv")

    verify = sub.add_parser("verify", help="oracle and convergence checks")
    common(verify)
    verify.add_argument("--tol", type=float, default=1e-10)

    quad = sub.add_parser("quadcheck", help="quadrature exactness report")
    quad.add_argument("--max-q", type=positive_int, default=10)
    quad.add_argument("--out")
    return parser


def _deform(name):
    return None if name == "none" else name


def _emit(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows, fields):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in fields})
    return buf.getvalue()


def cmd_run(args):
    cfg = bench.BPConfig(args.bp, args.degree, args.elems, _deform(args.deform), threads=args.threads,
                         iters=args.iters, mode=args.mode, tol=args.tol)
    rec = bench.run_bench(cfg).to_dict()
    if args.format == "json":
        _emit(json.dumps(rec) + "\n", args.out)
    else:
        _emit(_csv([rec], RUN_FIELDS), args.out)
    return EXIT_OK


def cmd_sweep(args):
    if 1 not in args.threads:
        raise UsageError("--threads must include 1 for the efficiency baseline")
    result = bench.run_scaling_sweep(args.bp, args.degree, args.elems, args.threads,
                                     iters=args.iters, deformation=_deform(args.deform))
    table = result.table()
    if args.format == "csv":
        _emit(_csv(table, SWEEP_FIELDS), args.out)
    else:
        doc = {"rows": table, "r_max": result.r_max, "n_0.8": result.n_08, "C": result.C,
               "t_0.8": result.t_08}
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    summary = "n_0.8 unavailable" if result.n_08 is None else f"n_0.8 = {result.n_08:.4g}"
    print(f"r_max = {result.r_max:.4g} DOFS per worker; {summary}", file=sys.stderr)
    return EXIT_OK


class UsageError(Exception):
    pass


def _check(lines, name, ok, detail):
    lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


def verify_config(cfg, tol=1e-10):
    """Run the oracle, identity and convergence checks; return ``(ok, report_lines)``."""
    lines = []
    ok = True
    problem = bench.bp_setup(cfg)
    op = problem.op
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.size)
    y = operator_apply(op, x)
    diag = operator_diagonal(op)
    if op.size <= ASSEMBLY_LIMIT:
        K = reference_assemble(op)
        yr = K @ x
        rel = np.max(np.abs(y - yr)) / np.max(np.abs(yr))
        ok &= _check(lines, "apply vs dense assembly", rel <= 1e-12, f"rel {rel:.2e}")
        dk = np.diag(K)
        rel = np.max(np.abs(diag - dk)) / np.max(np.abs(dk))
        ok &= _check(lines, "diagonal vs dense assembly", rel <= 1e-12, f"rel {rel:.2e}")
    else:
        lines.append(f"SKIP dense oracle: {op.size} dofs exceeds {ASSEMBLY_LIMIT}")
    z = rng.standard_normal(op.size)
    lhs, rhs = np.dot(y, z), np.dot(x, operator_apply(op, z))
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs))
    ok &= _check(lines, "symmetry", rel <= 1e-12, f"rel {rel:.2e}")

    if cfg.is_mass:
        u, rep = pcg(op, problem.rhs, diag, tol=tol)
        err = np.max(np.abs(u - problem.f_nodal))
        ok &= _check(lines, "mass solve returns f", err <= 10 * tol, f"max err {err:.2e} in {rep.iterations} its")
        ones = np.ones(op.size)
        vol = np.dot(ones, operator_apply(op, ones)) / cfg.m
        ok &= _check(lines, "1^T B 1 = |Omega|", abs(vol - 1) <= 1e-10, f"{vol:.15f}")
    else:
        errs = []
        for scale in (1, 2):
            c = bench.BPConfig(cfg.bp, cfg.p, tuple(scale * d for d in cfg.dims), None, threads=cfg.threads)
            pr = bench.bp_setup(c)
            u, _ = pcg(pr.op, pr.rhs, operator_diagonal(pr.op), tol=1e-12)
            errs.append(bench.l2_error(pr.mesh, u, pr.exact, c.m))
        ratio = errs[0] / errs[1]
        expect = 2 ** (cfg.p + 1)
        ok &= _check(lines, "L2 convergence ratio", 0.7 * expect <= ratio <= 1.3 * expect,
                     f"{ratio:.3f} (expected {expect} +/- 30%)")
    return bool(ok), lines


def cmd_verify(args):
    cfg = bench.BPConfig(args.bp, args.degree, args.elems, _deform(args.deform), threads=args.threads)
    ok, lines = verify_config(cfg, tol=args.tol)
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok else EXIT_FAIL


def quadrature_report(max_q=10):
    """Worst monomial integration error for each rule; ``(ok, lines)``."""
    lines = []
    ok = True
    for kind, qmin, exact_deg in ((GAUSS_LEGENDRE, 1, lambda q: 2 * q - 1),
                                  (GAUSS_LOBATTO_LEGENDRE, 2, lambda q: 2 * q - 3)):
        for q in range(qmin, max_q + 1):
            rule = make_quadrature(kind, q)
            worst = 0.0
            for k in range(exact_deg(q) + 1):
                exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
                worst = max(worst, abs(np.dot(rule.weights, rule.points**k) - exact))
            good = worst <= 1e-13
            ok &= good
            lines.append(f"{'PASS' if good else 'FAIL'} {kind:8s} q={q:2d} degree<={exact_deg(q):2d} max err {worst:.2e}")
    return ok, lines


def cmd_quadcheck(args):
    ok, lines = quadrature_report(args.max_q)
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "quadcheck": cmd_quadcheck}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"matfree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
