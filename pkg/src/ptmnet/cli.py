"""Command line interface.

Exit codes: 0 on success, 1 for user errors (bad arguments, malformed
files, breached fatal limits), 2 for internal failures.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from .builder import BuildError, Limits, build, export_network, network_from_json
from .evolution import (
    EvolutionConfig,
    Genotype,
    evolve,
    format_genotype,
    history_to_csv,
    parse_genotype,
)
from .execute import BitArray, ExecutionError, evaluate
from .fileformat import FormatError, format_machine, load_machine
from .lopro import LoproError, LowerError, build_highlevel, load_source, lower
from .lopro.elaborate import format_highlevel, parse_highlevel
from .machines import MachineError
from .tasks import TASKS, make_task


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(message)


def _limits(args) -> Limits:
    return Limits(
        max_nodes=args.max_nodes,
        max_depth=args.max_depth,
        max_fanout=args.max_fanout,
        fatal=getattr(args, "fatal", False),
    )


def _add_limit_flags(p) -> None:
    p.add_argument("--max-nodes", type=int, default=None, metavar="N")
    p.add_argument("--max-depth", type=int, default=None, metavar="N")
    p.add_argument("--max-fanout", type=int, default=None, metavar="N")
    p.add_argument("--fatal", action="store_true",
                   help="raise instead of returning a partial network")


def _load_buildable(path: str):
    """A machine file: raw text format, or elaborated JSON."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return parse_highlevel(text), build_highlevel
    return load_machine(path), build


def _build_network(path: str, limits: Limits):
    machine, builder = _load_buildable(path)
    return builder(machine, limits)


def cmd_build(args) -> int:
    net = _build_network(args.machine, _limits(args))
    Path(args.output).write_text(export_network(net, "structured"))
    r = net.report
    print(
        f"built {r['nodes']} nodes, {r['links']} links, depth {net.depth}"
        + (f", stopped by {r['stopped_by']}" if r["stopped_by"] else "")
    )
    return 0


def cmd_run(args) -> int:
    net = network_from_json(Path(args.network).read_text())
    size = math.prod(net.input_dims)
    if len(args.input) != size:
        raise UserError(
            f"expected {size} input bits for dims {net.input_dims},"
            f" got {len(args.input)}"
        )
    result = evaluate(net, BitArray.from_string(args.input, net.input_dims))
    print(result.to_string())
    return 0


def cmd_evolve(args) -> int:
    if args.task not in TASKS:
        raise UserError(
            f"unknown task {args.task!r} (available: {', '.join(sorted(TASKS))})"
        )
    task = make_task(args.task, args.n)
    cfg = EvolutionConfig(
        population=args.pop,
        generations=args.gens,
        tournament=args.tournament,
        elitism=args.elitism,
        max_len=args.max_len,
        init_len=args.init_len,
        seed=args.seed,
        stop_at=args.stop_at,
    )
    seeds = None
    if args.seed_genotype:
        seeds = [parse_genotype(Path(args.seed_genotype).read_text())]
    best, history = evolve(cfg, task, seed_population=seeds, workers=args.workers)

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    machine = replace(best.genotype.header, program=best.genotype.genes)
    (outdir / "best.ptm").write_text(format_machine(machine))
    (outdir / "history.csv").write_text(history_to_csv(history))
    from . import plots

    plots.save_fitness_figure(history, outdir / "fitness.png")
    print(
        f"best fitness {best.fitness:.6f} after {len(history)} generations;"
        f" wrote {outdir / 'best.ptm'}, {outdir / 'history.csv'},"
        f" {outdir / 'fitness.png'}"
    )
    return 0


def _parse_const(pairs) -> dict[str, int]:
    out: dict[str, int] = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise UserError(f"bad --const {pair!r}, expected name=value")
        try:
            out[name] = int(value)
        except ValueError:
            raise UserError(f"bad --const value {value!r}, expected an integer")
    return out


def cmd_compile(args) -> int:
    hlm = load_source(
        args.source,
        const_overrides=_parse_const(args.const),
        recycle=not args.no_recycle,
    )
    if args.lower:
        text = format_machine(lower(hlm))
    else:
        text = format_highlevel(hlm)
    if args.output:
        Path(args.output).write_text(text)
        print(
            f"compiled {args.source} -> {args.output}"
            f" ({hlm.num_states} states, {len(hlm.tapes)} tapes"
            + (", lowered" if args.lower else "")
            + ")"
        )
    else:
        sys.stdout.write(text)
    return 0


def cmd_inspect(args) -> int:
    if (args.network is None) == (args.machine is None):
        raise UserError("inspect needs exactly one of -n/--network or -m/--machine")
    if args.network:
        net = network_from_json(Path(args.network).read_text())
    else:
        net = _build_network(args.machine, _limits(args))
    r = net.report
    print(f"flavor:       {net.flavor}")
    print(f"input dims:   {net.input_dims}")
    print(f"output dims:  {net.output_dims}")
    print(f"nodes:        {r['nodes']}")
    print(f"links:        {r['links']}")
    print(f"cycle links skipped: {r['cycle_links_skipped']}")
    print(f"limit hits:   {r['limit_hits']}")
    print(f"stopped by:   {r['stopped_by']}")
    print(f"depth:        {net.depth}")
    return 0


def cmd_export(args) -> int:
    net = network_from_json(Path(args.network).read_text())
    fmt = "dot" if args.dot else "structured"
    text = export_network(net, fmt)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ptmnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="unroll a machine file into a network")
    p.add_argument("-m", "--machine", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_limit_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("run", help="evaluate a built network on an input")
    p.add_argument("-n", "--network", required=True)
    p.add_argument("--input", required=True,
                   help="bit string; leftmost character is the highest index")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evolve", help="run the genetic algorithm on a task")
    p.add_argument("--task", required=True,
                   help=f"one of: {', '.join(sorted(TASKS))}")
    p.add_argument("--n", type=int, required=True, help="input size")
    p.add_argument("--pop", type=int, default=100)
    p.add_argument("--gens", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tournament", type=int, default=3)
    p.add_argument("--elitism", type=int, default=1)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--init-len", type=int, default=8)
    p.add_argument("--stop-at", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed-genotype", default=None,
                   help="machine file whose genes seed the population")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("compile", help="compile a .lp source")
    p.add_argument("source")
    p.add_argument("--lower", action="store_true",
                   help="expand to raw instruction genes")
    p.add_argument("--const", action="append", metavar="NAME=VALUE",
                   help="override a declared constant")
    p.add_argument("--no-recycle", action="store_true",
                   help="disable work tape reuse")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("inspect", help="print a network's build report")
    p.add_argument("-n", "--network", default=None)
    p.add_argument("-m", "--machine", default=None)
    _add_limit_flags(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export", help="re-export a network file")
    p.add_argument("-n", "--network", required=True)
    p.add_argument("--dot", action="store_true", help="write graphviz dot")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_export)

    return parser


USER_ERRORS = (
    UserError,
    BuildError,
    ExecutionError,
    FormatError,
    LoproError,
    LowerError,
    MachineError,
    FileNotFoundError,
    ValueError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - internal failures
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
