"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 runtime error, 3 (``check``
only) no requested certificate could guarantee convergence.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import __version__
from .certificates import ihler_condition, l1_condition_general
from .experiments import GridSpec, emit_csv, emit_phase_plot, generate_grid, run_sweep
from .factor_graph import (
    FactorGraphFormatError,
    StateSpaceTooLarge,
    brute_force_marginals,
    format_float,
    read_factor_graph,
    write_blocks,
    write_factor_graph,
)
from .lbp import LbpOptions, run
from .spectral import DEFAULT_TOL, spectral_condition

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _load(path):
    try:
        return read_factor_graph(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except FactorGraphFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", encoding="utf-8")


def cmd_check(args) -> int:
    g = _load(args.file)
    names = ["l1", "spectral", "ihler"] if args.condition == "all" else [args.condition]
    reports = []
    for name in names:
        if name == "l1":
            reports.append(l1_condition_general(g))
        elif name == "spectral":
            reports.append(spectral_condition(g, tol=args.tol))
        elif g.is_pairwise():
            reports.append(ihler_condition(g))
        elif args.condition == "ihler":
            raise RuntimeError("the dynamic-range (ihler) condition needs a pairwise factor graph")
    if args.json:
        payload = [r.to_dict() for r in reports]
        json.dump(payload[0] if len(payload) == 1 else payload, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        for r in reports:
            print(f"{r.condition}: value={format_float(r.value)} {r.verdict}")
    return EXIT_OK if any(r.passed for r in reports) else EXIT_INCONCLUSIVE


def cmd_run(args) -> int:
    g = _load(args.file)
    try:
        opts = LbpOptions(max_iters=args.max_iter, tol=args.tol, damping=args.damping, init=args.init, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = run(g, opts)
    print(f"converged: {'true' if res.converged else 'false'}")
    print(f"iterations: {res.iterations}")
    print(f"final_residual: {format_float(res.final_residual)}")
    print(f"init: {opts.init}")
    print(f"seed: {opts.seed}")
    print(f"damping: {format_float(opts.damping)}")
    if args.beliefs:
        blocks = [((v,), (g.cardinalities[v],), b) for v, b in enumerate(res.var_beliefs)]
        blocks += [(f.vars, f.cards, b) for f, b in zip(g.factors, res.factor_beliefs)]
        with _open_out(args.beliefs) as fh:
            fh.write(
                f"# beliefs: {g.num_vars} variable blocks, then {g.num_factors} factor blocks\n"
                f"# converged={'true' if res.converged else 'false'} damping={format_float(opts.damping)}\n"
            )
            write_blocks(fh, blocks)
    return EXIT_OK


def cmd_gen_grid(args) -> int:
    try:
        spec = GridSpec(args.rows, args.cols, args.periodic, args.j0, args.sigma, args.theta, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    g = generate_grid(spec)
    out = _open_out(args.output)
    try:
        write_factor_graph(g, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        specs = [
            GridSpec(args.rows, args.cols, args.periodic, j0, sigma, 0.0, args.seed)
            for j0 in args.j0_list
            for sigma in args.sigma_list
        ]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.instances < 1 or args.trials < 1:
        raise UsageError("--instances and --trials must be >= 1")
    rows = run_sweep(specs, args.instances, LbpOptions(), trials=args.trials)
    with _open_out(args.output) as fh:
        emit_csv(rows, fh)
    if args.svg:
        with open(args.svg, "w", encoding="utf-8") as fh:
            emit_phase_plot(rows, fh)
    return EXIT_OK


def cmd_oracle(args) -> int:
    g = _load(args.file)
    var_m, fac_m = brute_force_marginals(g)
    for v, m in enumerate(var_m):
        print(f"var {v}: " + " ".join(format_float(x) for x in m))
    for I, (f, m) in enumerate(zip(g.factors, fac_m)):
        print(f"factor {I} ({' '.join(map(str, f.vars))}): " + " ".join(format_float(x) for x in m))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lbpconv", description="Loopy belief propagation and its convergence certificates.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="evaluate sufficient conditions for convergence")
    c.add_argument("file")
    c.add_argument("--condition", choices=["l1", "spectral", "ihler", "all"], default="all")
    c.add_argument("--tol", type=float, default=DEFAULT_TOL, help="spectral radius tolerance")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="run parallel loopy belief propagation")
    r.add_argument("file")
    r.add_argument("--max-iter", type=int, default=10000)
    r.add_argument("--tol", type=float, default=1e-9)
    r.add_argument("--damping", type=float, default=0.0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--init", choices=["uniform", "random"], default="uniform")
    r.add_argument("--beliefs", metavar="OUT")
    r.set_defaults(func=cmd_run)

    gg = sub.add_parser("gen-grid", help="write a random Ising grid")
    _grid_flags(gg)
    gg.add_argument("--j0", type=float, default=0.0)
    gg.add_argument("--sigma", type=float, default=0.0)
    gg.add_argument("--theta", type=float, default=0.0)
    gg.add_argument("--seed", type=int, default=0)
    gg.add_argument("-o", "--output")
    gg.set_defaults(func=cmd_gen_grid)

    s = sub.add_parser("sweep", help="certificate versus empirical convergence sweep")
    _grid_flags(s)
    s.add_argument("--j0-list", type=_float_list, default=[0.0])
    s.add_argument("--sigma-list", type=_float_list, default=[round(0.1 * k, 1) for k in range(1, 13)])
    s.add_argument("--instances", type=int, default=40)
    s.add_argument("--trials", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--svg")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="exact marginals by enumeration")
    o.add_argument("file")
    o.set_defaults(func=cmd_oracle)
    return p


def _grid_flags(p):
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--periodic", type=_bool, nargs="?", const=True, default=True)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lbpconv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StateSpaceTooLarge as exc:
        print(f"lbpconv {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"lbpconv {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
