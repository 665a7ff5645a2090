"""Command-line entry point.

Exit codes: 0 success, 1 validation failure (or "not equilibrium"),
2 input error, 3 internal assertion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import InvariantViolation
from .errors import ConfigError
from .export import (
    load_final_state,
    plot_metrics_svg,
    read_metrics_csv,
    write_events,
    write_metrics_csv,
    write_trajectory,
)
from .oracle import equilibrium_residual
from .scenario import (
    build_network_for,
    demo_text,
    generate_population,
    load_scenario,
    run_scenario,
    validate_scenario,
)

EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rhgame", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_args(p):
        p.add_argument("scenario_pos", nargs="?", metavar="SCENARIO",
                       help="scenario file ('-' reads standard input)")
        p.add_argument("--scenario", help="scenario file (alternative to the positional form)")
        p.add_argument("--seed", type=int, help="override the population seed")

    p = sub.add_parser("run", help="simulate a scenario and write metrics")
    scenario_args(p)
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--gamma", type=_positive_int, help="override sweeps per step")
    p.add_argument("--steps", type=_nonneg_int, help="override the number of steps")
    p.add_argument("--tol", type=_positive_float, default=1e-6, help="convergence tolerance")
    p.add_argument("--dump-trajectory", action="store_true",
                   help="also write trajectory.jsonl and events.jsonl")
    p.add_argument("--svg", action="store_true", help="also write metrics.svg")

    p = sub.add_parser("validate", help="check a scenario without running it")
    scenario_args(p)

    p = sub.add_parser("equilibrium-check", help="equilibrium residual of a dump's final plan")
    p.add_argument("dump", help="trajectory.jsonl written by 'run --dump-trajectory'")
    p.add_argument("--tol", type=_positive_float, default=1e-6,
                   help="tolerance relative to the mean per-agent cost (default 1e-6)")

    sub.add_parser("demo", help="print the shipped demo scenario")

    p = sub.add_parser("plot", help="render a metrics CSV to SVG")
    p.add_argument("metrics", help="metrics.csv written by 'run'")
    p.add_argument("--out", default=None, help="SVG path (default: next to the CSV)")
    return parser


def _load(args):
    src = args.scenario or args.scenario_pos
    if src is None:
        raise ConfigError("no scenario given (use --scenario PATH or '-' for stdin)")
    if src == "-":
        scn = load_scenario("<stdin>", sys.stdin.read())
    else:
        scn = load_scenario(src)
    return scn.with_overrides(seed=args.seed, gamma=getattr(args, "gamma", None),
                              steps=getattr(args, "steps", None))


def cmd_run(args) -> int:
    scn = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_scenario(scn, tol=args.tol, strict=True)
    write_metrics_csv(result.metrics, result.tracked, out / "metrics.csv")
    if args.dump_trajectory:
        write_trajectory(result.trajectory, out / "trajectory.jsonl")
        write_events(result.trajectory, out / "events.jsonl")
    if args.svg:
        plot_metrics_svg(read_metrics_csv(out / "metrics.csv"), out / "metrics.svg",
                         result.trajectory.event_times)
    summary = {
        "scenario": scn.name, "seed": scn.seed, "gamma": scn.gamma, "steps": scn.steps,
        "tracked": list(result.tracked),
        "segments": [vars(s) for s in result.segments],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"{scn.name}: {result.game.n_agents} agents, {scn.steps} steps, gamma={scn.gamma}")
    for seg in result.segments:
        print("  " + seg.text())
    print(f"wrote {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scn = _load(args)
    net = build_network_for(scn)
    issues = validate_scenario(scn, net)
    if not issues:
        agents = generate_population(scn, net)
        for a in agents:
            if a.demand > a.capacity * (1 + 1e-12):
                issues.append(f"agent {a.id} (group {a.group}): demand {a.demand:g} "
                              f"exceeds capacity {a.capacity:g}")
    if issues:
        for issue in issues:
            print(f"invalid: {issue}")
        return EXIT_INVALID
    print(f"{scn.name}: valid ({scn.n_agents} agents, {net.n_paths} paths, "
          f"{len(scn.events)} events)")
    return EXIT_OK


def cmd_equilibrium_check(args) -> int:
    game, x, theta, t = load_final_state(args.dump)
    report = equilibrium_residual(x, game, theta)
    ok = report.is_equilibrium(args.tol)
    verdict = "ε-equilibrium" if ok else "not equilibrium"
    print(f"t={t}: max residual {report.max_gap:.6g} (agent {report.argmax}), "
          f"bound {args.tol:g} x mean cost {report.scale:.6g}: {verdict}")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_demo(args) -> int:
    sys.stdout.write(demo_text())
    return EXIT_OK


def cmd_plot(args) -> int:
    columns = read_metrics_csv(args.metrics)
    out = Path(args.out) if args.out else Path(args.metrics).with_suffix(".svg")
    plot_metrics_svg(columns, out)
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "validate": cmd_validate,
    "equilibrium-check": cmd_equilibrium_check,
    "demo": cmd_demo,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
