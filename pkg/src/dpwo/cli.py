"""Command-line entry point: ``python -m dpwo <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import covariance, harness, lower_bound, mechanism, workload

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p, *names):
    opts = {
        "workload": (("--workload",), dict(metavar="PATH", help="query matrix (CSV or JSON)")),
        "n": (("--n",), dict(type=int, help="database size bound")),
        "epsilon": (("--epsilon",), dict(type=float, help="privacy parameter epsilon")),
        "delta": (("--delta",), dict(type=float, default=1e-6, help="privacy parameter delta")),
        "seed": (("--seed",), dict(type=int, default=0)),
        "trials": (("--trials",), dict(type=int, default=1000)),
        "max_iters": (("--max-iters",), dict(type=int, default=2000,
                                             help="dual ascent iteration cap")),
        "tol": (("--tol",), dict(type=float, default=1e-6,
                                 help="relative Frank-Wolfe gap for the dual ascent")),
        "out": (("--out",), dict(metavar="PATH", help="output file (stdout if omitted)")),
        "format": (("--format",), dict(choices=("json", "csv"), default="json")),
        "emit": (("--emit-intermediates",), dict(action="store_true",
                                                 help="include noise and projection vectors")),
    }
    for name in names:
        flags, kw = opts[name]
        p.add_argument(*flags, **kw)


def build_parser():
    parser = _Parser(prog="dpwo", description="Projection mechanism with an optimized noise covariance.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a workload or histogram")
    p.add_argument("--kind", choices=("intervals", "counting", "histogram"), required=True)
    p.add_argument("--universe", type=int, required=True)
    p.add_argument("--queries", type=int, help="number of queries (counting)")
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--n", type=int, help="histogram size")
    p.add_argument("--mode", choices=("uniform_random", "point_mass"), default="uniform_random")
    p.add_argument("--element", type=int, default=0, help="0-based element for point_mass")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"))

    p = sub.add_parser("optimize", help="optimize the noise covariance")
    _add_common(p, "workload", "n", "epsilon", "max_iters", "tol", "out")

    p = sub.add_parser("run", help="run a mechanism once on a histogram")
    _add_common(p, "workload", "n", "epsilon", "delta", "seed", "max_iters", "tol", "out", "emit")
    p.add_argument("--histogram", metavar="PATH", help="histogram CSV (one line of integers)")
    p.add_argument("--design", metavar="PATH", help="precomputed design JSON")
    p.add_argument("--mechanism", choices=("projection", "gaussian"), default="projection")

    p = sub.add_parser("bench", help="benchmark projection vs. plain Gaussian mechanism")
    _add_common(p, "workload", "n", "epsilon", "delta", "seed", "trials", "max_iters", "tol",
                "out", "format")
    p.add_argument("--lower-bound", choices=("auto", "bruteforce", "greedy", "none"), default="auto")
    p.add_argument("--timings", action="store_true", help="include wall-clock stage timings")

    p = sub.add_parser("lowerbound", help="spectral lower bound and dual certificate")
    _add_common(p, "workload", "n", "epsilon", "max_iters", "tol", "out")
    p.add_argument("--k", type=int, help="subset size (defaults to floor(epsilon n))")
    p.add_argument("--method", choices=("auto", "bruteforce", "greedy"), default="auto")
    p.add_argument("--design", metavar="PATH", help="design JSON for the certificate values")
    return parser


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required option(s) {flags}")


def _emit(text, out):
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _cmd_gen(args):
    if args.kind == "intervals":
        workload.save_matrix(workload.gen_interval_queries(args.universe), args.out, args.format)
    elif args.kind == "counting":
        _require(args, "queries")
        A = workload.gen_random_counting(args.queries, args.universe, args.density, args.seed)
        workload.save_matrix(A, args.out, args.format)
    else:
        _require(args, "n")
        x = workload.gen_histogram(args.universe, args.n, args.mode, element=args.element,
                                   seed=args.seed)
        workload.save_histogram(x, args.out)


def _load_design(args, A, k=None):
    if getattr(args, "design", None):
        design = covariance.CovarianceDesign.from_json(Path(args.design).read_text())
        slack = covariance.constraint_slack(A, design.sigma)
        if slack > 1.0 + 1e-9:
            raise ValueError(f"design violates the privacy constraint (slack {slack:.6g})")
        return design
    return covariance.optimize_covariance(A, args.n, args.epsilon, max_iters=args.max_iters,
                                          tol=args.tol, k=k)


def _cmd_optimize(args):
    _require(args, "workload", "n", "epsilon")
    A = workload.load_matrix(args.workload)
    _emit(_load_design(args, A).to_json(), args.out)


def _cmd_run(args):
    _require(args, "workload", "n", "epsilon")
    A = workload.load_matrix(args.workload)
    if args.histogram:
        x = workload.load_histogram(args.histogram, n=args.n)
    else:
        x = workload.gen_histogram(A.u, args.n, "uniform_random", seed=args.seed)
    pp = mechanism.PrivacyParams(args.epsilon, args.delta)
    if args.mechanism == "gaussian":
        out = mechanism.run_plain_gaussian(A, x, pp, args.seed)
    elif covariance.kyfan_k(args.n, args.epsilon) == 0:
        # epsilon * n < 1: keep no noise directions, regress everything; the
        # k = 1 design still supplies a feasible noise covariance
        out = mechanism.run_projection_mechanism(A, x, _load_design(args, A, k=1), pp, args.seed,
                                                 k=0)
    else:
        out = mechanism.run_projection_mechanism(A, x, _load_design(args, A), pp, args.seed)
    _emit(out.to_json(emit_intermediates=args.emit_intermediates), args.out)


def _cmd_bench(args):
    _require(args, "workload", "n", "epsilon")
    A = workload.load_matrix(args.workload)
    config = harness.BenchmarkConfig(workload=A, n=args.n, epsilon=args.epsilon, delta=args.delta,
                                     seed=args.seed, trials=args.trials, max_iters=args.max_iters,
                                     tol=args.tol, lower_bound=args.lower_bound)
    report = harness.run_benchmark(config)
    if args.format == "csv":
        text = harness.report_csv(report)
    else:
        text = harness.report_json(report, include_timings=args.timings)
    _emit(text, args.out)


def _cmd_lowerbound(args):
    _require(args, "workload")
    A = workload.load_matrix(args.workload)
    k = args.k
    if k is None:
        _require(args, "n", "epsilon")
        k = covariance.kyfan_k(args.n, args.epsilon)
    method = args.method
    if method == "auto":
        method = "bruteforce" if A.u <= lower_bound.MAX_BRUTEFORCE_UNIVERSE else "greedy"
    if method == "bruteforce":
        report = lower_bound.spec_lb_bruteforce(A, k)
    else:
        report = lower_bound.spec_lb_greedy(A, min(k, A.u))
    if args.design or (args.n is not None and args.epsilon is not None):
        design = _load_design(args, A)
        if args.n is not None and args.epsilon is not None:
            eps, n = args.epsilon, args.n
        else:
            eps, n = 1.0, design.k
        report = lower_bound.dual_certificate_bound(design, eps, n, A=A, spec_lb=report)
    _emit(report.to_json(), args.out)


COMMANDS = {"gen": _cmd_gen, "optimize": _cmd_optimize, "run": _cmd_run, "bench": _cmd_bench,
            "lowerbound": _cmd_lowerbound}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dpwo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"dpwo: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(cli_main())
