"""Command line front end.

Subcommands mirror the library layers: ``bridge solve`` and ``operators``
expose the population solve, ``estimate`` runs the exact statistic on one
sampled batch, ``chaos`` prints kernels or draws from the degenerate limit,
``mc`` runs the seeded replicate experiments, and ``verify`` runs the
deterministic identity battery.

Exit codes: 0 success, 1 a requested check failed (or the math refused the
input), 2 bad command line, 3 malformed configuration.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__, backend
from .chaos import (
    first_order_kernels,
    gamma_coefficients,
    second_order_kernels,
    simulate_second_order_limit,
)
from .errors import SchemaViolation, SchroChaosError
from .estimator import t_n_brute, t_n_permanent
from .fixtures import build_problem, fixture_names, resolve_eta
from .harness import (
    EXPERIMENTS,
    ExperimentConfig,
    run_experiment,
    run_identity_suite,
)
from .measures import sample_bridge, sample_product, stream

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_SCHEMA = 3

_CONFIG_FIELDS = (
    "experiment", "fixture", "eta", "n", "n_list", "replicates",
    "seed", "eps", "tol", "method", "source", "out_dir",
)


def load_config(source) -> ExperimentConfig:
    """Build a validated config from a JSON file path or a plain mapping.

    Unknown keys are rejected rather than ignored, so typos cannot silently
    change what an experiment runs.
    """
    if isinstance(source, dict):
        doc = dict(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaViolation("(document)", f"not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise SchemaViolation("(document)", "top level must be an object")
    for key in doc:
        if key not in _CONFIG_FIELDS:
            raise SchemaViolation(key, "unknown field")
    if "n_list" in doc:
        raw = doc["n_list"]
        if not isinstance(raw, (list, tuple)):
            raise SchemaViolation("n_list", "must be a list of ints")
        doc["n_list"] = tuple(raw)
    return ExperimentConfig(**doc)


def dump_config(config: ExperimentConfig) -> dict:
    """JSON-ready mapping; ``load_config`` of the result reproduces the config."""
    eta = config.eta if isinstance(config.eta, str) else [list(r) for r in config.eta]
    return {
        "experiment": config.experiment,
        "fixture": config.fixture,
        "eta": eta,
        "n": config.n,
        "n_list": list(config.n_list),
        "replicates": config.replicates,
        "seed": config.seed,
        "eps": config.eps,
        "tol": config.tol,
        "method": config.method,
        "source": config.source,
        "out_dir": config.out_dir,
    }


def _print_json(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True, indent=2))


def _matrix(rows: np.ndarray) -> list:
    return [list(map(float, row)) for row in np.asarray(rows, dtype=float)]


def _add_problem_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--fixture", default="sym2", choices=fixture_names(),
        help="named problem instance (default sym2)",
    )
    parser.add_argument("--eps", type=float, default=1.0, help="temperature (default 1)")
    parser.add_argument(
        "--tol", type=float, default=1e-12,
        help="marginal fitting tolerance (default 1e-12)",
    )


def _cmd_bridge_solve(args) -> int:
    problem = build_problem(args.fixture, eps=args.eps, tol=args.tol)
    doc = {
        "fixture": args.fixture,
        "eps": args.eps,
        "iterations": problem.report.iterations,
        "residual": problem.report.residual,
        "a": list(map(float, problem.kernel.a)),
        "b": list(map(float, problem.kernel.b)),
        "xi": _matrix(problem.kernel.xi),
        "mu": _matrix(problem.kernel.mu),
    }
    if args.json:
        _print_json(doc)
        return EXIT_OK
    print(f"fixture {args.fixture}  eps {args.eps:g}")
    print(f"converged in {doc['iterations']} iterations, residual {doc['residual']:.3e}")
    print("a:", " ".join(f"{v:+.12f}" for v in doc["a"]))
    print("b:", " ".join(f"{v:+.12f}" for v in doc["b"]))
    print("xi:")
    for row in doc["xi"]:
        print("  " + " ".join(f"{v:.12f}" for v in row))
    return EXIT_OK


def _cmd_operators(args) -> int:
    problem = build_problem(args.fixture, eps=args.eps, tol=args.tol)
    ops = problem.ops
    doc = {
        "fixture": args.fixture,
        "eps": args.eps,
        "singular_values": list(map(float, ops.s)),
        "spectral_gap": float(ops.gap),
        "alpha": _matrix(ops.alpha),
        "beta": _matrix(ops.beta),
    }
    if args.json:
        _print_json(doc)
        return EXIT_OK
    print(f"fixture {args.fixture}  eps {args.eps:g}")
    print("singular values:", " ".join(f"{v:.12f}" for v in doc["singular_values"]))
    print(f"spectral gap {doc['spectral_gap']:.12f}")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    problem = build_problem(args.fixture, eps=args.eps, tol=args.tol)
    eta = resolve_eta("cost", problem.cost)
    rng = stream(args.seed, (args.n << 32))
    if args.source == "bridge":
        batch = sample_bridge(problem.kernel.mu, args.n, rng, seed=args.seed)
    else:
        batch = sample_product(problem.rho0, problem.rho1, args.n, rng, seed=args.seed)
    ix, iy = batch.x_idx, batch.y_idx
    eta_sub = eta[np.ix_(ix, iy)]
    cost_sub = problem.cost[np.ix_(ix, iy)]
    pot = (problem.kernel.a[ix], problem.kernel.b[iy])
    doc = {
        "fixture": args.fixture,
        "n": args.n,
        "seed": args.seed,
        "source": args.source,
        "x_idx": list(map(int, ix)),
        "y_idx": list(map(int, iy)),
    }
    failed = False
    if args.method == "both":
        brute = t_n_brute(eta_sub, cost_sub, args.eps, potentials=pot)
        perm = t_n_permanent(eta_sub, cost_sub, args.eps, potentials=pot)
        diff = abs(brute.t_n - perm.t_n)
        doc.update(
            t_n_brute=brute.t_n, t_n_permanent=perm.t_n, diff=diff,
            l_n_brute=brute.l_n, l_n_permanent=perm.l_n,
        )
        failed = diff > 1e-12
    else:
        method = args.method
        if method == "auto":
            method = "brute" if args.n < 8 else "permanent"
        est = (t_n_brute if method == "brute" else t_n_permanent)(
            eta_sub, cost_sub, args.eps, potentials=pot
        )
        doc.update(t_n=est.t_n, l_n=est.l_n, method=est.method)
    if args.json:
        _print_json(doc)
    elif args.method == "both":
        print(f"t_n brute     {doc['t_n_brute']:.15f}")
        print(f"t_n permanent {doc['t_n_permanent']:.15f}")
        print(f"abs diff      {doc['diff']:.3e}")
    else:
        print(f"t_n {doc['t_n']:.15f}  l_n {doc['l_n']:.15f}  ({doc['method']})")
    if failed and args.strict:
        print("route disagreement exceeds 1e-12", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _cmd_chaos_kernels(args) -> int:
    problem = build_problem(args.fixture, eps=args.eps, tol=args.tol)
    eta = resolve_eta("cost", problem.cost)
    first = first_order_kernels(eta, problem.kernel, problem.ops)
    second = second_order_kernels(eta, problem.kernel, problem.ops, first)
    gamma = None
    if first.variance <= 1e-10:
        gamma = _matrix(gamma_coefficients(eta, problem.kernel, problem.ops, first))
    doc = {
        "fixture": args.fixture,
        "eps": args.eps,
        "theta": first.theta,
        "first_order_variance": first.variance,
        "second_order_constant": second.constant,
        "f": list(map(float, first.f)),
        "g": list(map(float, first.g)),
        "gamma": gamma,
        "singular_values": list(map(float, problem.ops.s)),
    }
    if args.json:
        _print_json(doc)
        return EXIT_OK
    print(f"fixture {args.fixture}  eps {args.eps:g}")
    print(f"theta                 {first.theta:.15f}")
    print(f"first-order variance  {first.variance:.15e}")
    print(f"second-order constant {second.constant:.15f}")
    if gamma is not None:
        print("gamma (degenerate case):")
        for row in gamma:
            print("  " + " ".join(f"{v:+.12f}" for v in row))
    return EXIT_OK


def _cmd_chaos_simulate(args) -> int:
    problem = build_problem(args.fixture, eps=args.eps, tol=args.tol)
    eta = resolve_eta("cost", problem.cost)
    first = first_order_kernels(eta, problem.kernel, problem.ops)
    gamma = gamma_coefficients(eta, problem.kernel, problem.ops, first)
    draws = simulate_second_order_limit(gamma, problem.ops.s, args.draws, args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("z\n")
            for v in draws:
                fh.write(repr(float(v)) + "\n")
    doc = {
        "fixture": args.fixture,
        "draws": int(draws.size),
        "seed": args.seed,
        "mean": float(draws.mean()),
        "var": float(draws.var(ddof=1)),
        "out": args.out,
    }
    if args.json:
        _print_json(doc)
    else:
        print(
            f"{doc['draws']} limit draws: mean {doc['mean']:+.6f}, "
            f"var {doc['var']:.6f}" + (f", wrote {args.out}" if args.out else "")
        )
    return EXIT_OK


def _mc_config(args) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
        if config.experiment != args.experiment:
            raise SchemaViolation(
                "experiment",
                f"config says {config.experiment!r} but the subcommand is {args.experiment!r}",
            )
        if args.out_dir is not None:
            config = ExperimentConfig(**{**dump_config(config), "out_dir": args.out_dir})
        return config
    kwargs = {
        "experiment": args.experiment,
        "fixture": args.fixture,
        "replicates": args.replicates,
        "seed": args.seed,
        "eps": args.eps,
        "tol": args.tol,
        "method": args.method,
        "source": args.source,
        "out_dir": args.out_dir if args.out_dir is not None else ".",
    }
    if args.experiment == "remainder":
        if args.n_list:
            kwargs["n_list"] = tuple(args.n_list)
    else:
        kwargs["n"] = args.n
    return ExperimentConfig(**kwargs)


def _cmd_mc(args) -> int:
    config = _mc_config(args)
    result = run_experiment(config)
    label = (
        "-".join(str(n) for n in result.n) if isinstance(result.n, tuple) else result.n
    )
    verdict = {True: "pass", False: "FAIL", None: "report"}[result.passed]
    print(
        f"{result.experiment} {result.fixture} n={label} "
        f"replicates={config.replicates} seed={config.seed}: {verdict}"
    )
    for key in sorted(result.summary):
        value = result.summary[key]
        if isinstance(value, float):
            print(f"  {key} = {value:.6g}")
        else:
            print(f"  {key} = {value}")
    print("  wrote " + " ".join(result.files))
    if args.strict and result.passed is False:
        return EXIT_FAILED
    return EXIT_OK


def _cmd_verify(args) -> int:
    checks = run_identity_suite(master_seed=args.seed, draws=args.draws)
    name_width = max(len(c.name) for c in checks)
    print(f"backend: {backend.NAME}")
    print(f"{'crit':>4}  {'check':<{name_width}}  {'residual':>10}  {'threshold':>10}  status")
    failures = 0
    for check in checks:
        status = "pass" if check.passed else "FAIL"
        failures += 0 if check.passed else 1
        print(
            f"{check.criterion:>4}  {check.name:<{name_width}}  "
            f"{check.residual:>10.3e}  {check.threshold:>10.1e}  {status}"
        )
        if args.verbose:
            print(f"      {check.detail}")
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_FAILED
    print("all checks passed")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schrochaos",
        description="exact entropic-transport statistics and their limit laws",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    bridge = sub.add_parser("bridge", help="population coupling solves")
    bridge_sub = bridge.add_subparsers(dest="bridge_command", required=True)
    solve = bridge_sub.add_parser("solve", help="fit the kernel and potentials")
    _add_problem_args(solve)
    solve.add_argument("--json", action="store_true", help="machine-readable output")
    solve.set_defaults(handler=_cmd_bridge_solve)

    operators = sub.add_parser("operators", help="singular system of the coupling")
    _add_problem_args(operators)
    operators.add_argument("--json", action="store_true")
    operators.set_defaults(handler=_cmd_operators)

    estimate = sub.add_parser("estimate", help="exact statistic on one sampled batch")
    _add_problem_args(estimate)
    estimate.add_argument("--n", type=int, default=6, help="batch size (default 6)")
    estimate.add_argument("--seed", type=int, default=0)
    estimate.add_argument(
        "--method", default="auto", choices=("auto", "brute", "permanent", "both")
    )
    estimate.add_argument("--source", default="product", choices=("product", "bridge"))
    estimate.add_argument("--json", action="store_true")
    estimate.add_argument(
        "--no-strict", dest="strict", action="store_false",
        help="report route disagreement without failing",
    )
    estimate.set_defaults(handler=_cmd_estimate, strict=True)

    chaos = sub.add_parser("chaos", help="expansion kernels and the degenerate limit")
    chaos_sub = chaos.add_subparsers(dest="chaos_command", required=True)
    kernels = chaos_sub.add_parser("kernels", help="first- and second-order kernels")
    _add_problem_args(kernels)
    kernels.add_argument("--json", action="store_true")
    kernels.set_defaults(handler=_cmd_chaos_kernels)
    simulate = chaos_sub.add_parser("simulate-limit", help="draw from the limit law")
    _add_problem_args(simulate)
    simulate.add_argument("--draws", type=int, default=10000)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out", default=None, help="write draws to this CSV file")
    simulate.add_argument("--json", action="store_true")
    simulate.set_defaults(handler=_cmd_chaos_simulate)

    mc = sub.add_parser("mc", help="seeded Monte Carlo experiments")
    mc_sub = mc.add_subparsers(dest="mc_command", required=True)
    for experiment in EXPERIMENTS:
        runner = mc_sub.add_parser(experiment, help=f"run the {experiment} experiment")
        runner.add_argument("--config", default=None, help="JSON config file")
        _add_problem_args(runner)
        if experiment == "remainder":
            runner.add_argument(
                "--n-list", dest="n_list", type=int, nargs="+", default=None,
                help="batch sizes (default 4 6 8 10 12)",
            )
        else:
            runner.add_argument("--n", type=int, default=12)
        runner.add_argument("--replicates", type=int, default=1000)
        runner.add_argument("--seed", type=int, default=0)
        runner.add_argument(
            "--method", default="auto", choices=("auto", "brute", "permanent")
        )
        runner.add_argument(
            "--source", default="auto", choices=("auto", "product", "bridge")
        )
        runner.add_argument("--out-dir", dest="out_dir", default=None)
        runner.add_argument(
            "--no-strict", dest="strict", action="store_false",
            help="never exit nonzero on a failed comparison",
        )
        runner.set_defaults(handler=_cmd_mc, experiment=experiment, strict=True)

    verify = sub.add_parser("verify", help="deterministic identity battery")
    verify.add_argument("--seed", type=int, default=20260814)
    verify.add_argument("--draws", type=int, default=100)
    verify.add_argument("--verbose", action="store_true", help="print check details")
    verify.set_defaults(handler=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except SchemaViolation as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SchroChaosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
