"""Command-line experiment runner.

Subcommands: simulate (particle system), kinetic (grid solve), couple (one
coupled run), convergence (full study), oracle (reference checks), report
(SVG plots).  Exit codes: 0 success, 2 validation error, 3 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    ExperimentConfig,
    kinetic_solution,
    run_convergence,
    run_particle_simulation,
    run_single_coupled,
)
from .kinetic import density_to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    spec = json.loads(path.read_text(encoding="utf-8"))
    if args.seed is not None:
        spec["seed"] = args.seed
    return ExperimentConfig.from_json(spec)


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    trajectory = run_particle_simulation(config, _out_dir(args))
    print(f"simulated n={config.n} to t={config.horizon}: {trajectory.event_count} events")
    print(f"wrote {_out_dir(args) / 'events.csv'} and {_out_dir(args) / 'snapshots.csv'}")
    return EXIT_OK


def cmd_kinetic(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    solution = kinetic_solution(config, out)
    for t, snap in zip(solution.times, solution.snapshots):
        density_to_csv(snap, out / f"density_t{format(float(t), '.6g')}.csv")
    print(
        f"solved to t={config.horizon} on {config.nx}x{config.nv} grid; "
        f"{len(solution.times)} snapshots, accumulated drift {solution.drift_total:.3e}"
    )
    return EXIT_OK


def cmd_couple(args: argparse.Namespace) -> int:
    config = _load_config(args)
    record = run_single_coupled(config, _out_dir(args))
    print(
        f"coupled run n={config.n}: {record.event_count} events, "
        f"final decoupled fraction {record.d_n[-1]:.4f}"
    )
    return EXIT_OK


def cmd_convergence(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = run_convergence(config, _out_dir(args), threads=args.threads)
    for n in config.n_values:
        rows = [r for r in result.aggregate_rows if r[0] == n]
        final = rows[-1]
        print(
            f"n={n}: mean d_n({final[1]:g}) = {final[2]:.5f} +- {final[3]:.5f}"
            f" (bound {final[4]:.3g})"
        )
    if result.fit is not None:
        fit = result.fit
        print(
            f"rate fit: slope {fit.slope:.3f} [{fit.ci_low:.3f}, {fit.ci_high:.3f}],"
            f" r^2 {fit.r_squared:.4f}"
        )
    print(f"wrote {result.aggregate_file}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    from .oracle import run_oracle_suite

    results = run_oracle_suite(fast=args.fast)
    for result in results:
        print(result.line())
    if all(r.passed for r in results):
        print(f"oracle suite: {len(results)}/{len(results)} checks passed")
        return EXIT_OK
    failed = sum(1 for r in results if not r.passed)
    print(f"oracle suite: {failed} of {len(results)} checks FAILED")
    return EXIT_ORACLE


def cmd_report(args: argparse.Namespace) -> int:
    from .report import render_report

    written = render_report(_out_dir(args))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topolab",
        description="rank-interaction particle systems, their kinetic limit, and the coupling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        if needs_config:
            p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="trial worker count")

    common(sub.add_parser("simulate", help="run the particle jump process"))
    common(sub.add_parser("kinetic", help="solve the limit equation"))
    common(sub.add_parser("couple", help="one coupled trajectory"))
    common(sub.add_parser("convergence", help="full convergence study"))
    oracle_p = sub.add_parser("oracle", help="run the reference checks")
    common(oracle_p, needs_config=False)
    oracle_p.add_argument("--fast", action="store_true", help="reduced Monte-Carlo sizes")
    report_p = sub.add_parser("report", help="render SVG plots from CSVs")
    common(report_p, needs_config=False)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "kinetic": cmd_kinetic,
    "couple": cmd_couple,
    "convergence": cmd_convergence,
    "oracle": cmd_oracle,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
