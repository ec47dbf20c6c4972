"""Command-line entry point: ``mechtransduce <scenario> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import DomainError, ScenarioError
from .harness import SCENARIOS, load_config, run_scenario

HELP = {
    "thermal": "thermal calibration of both resonators (spring constants, Q, noise densities)",
    "fc-sweep": "drive frequency sweep with the pump tracking the conversion condition",
    "linearity": "detector amplitude versus target amplitude over a range of drive forces",
    "pump-sweep": "gain, transduced force and coupling estimates versus pump amplitude",
    "noise": "imprecision, back-action and total noise from seed ensembles",
    "proposal": "closed-form coupling window for a low-temperature force sensor",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mechtransduce",
        description="Simulate parametric transduction between two mechanical resonators.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="scenario", required=True, metavar="SCENARIO")
    for name in SCENARIOS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", metavar="PATH", help="YAML file overriding the bundled defaults")
        p.add_argument("--seed", type=int, metavar="N", help="master seed")
        p.add_argument("--out", metavar="DIR", help="output directory (default: ./runs/<scenario>)")
        p.add_argument("--fast", action="store_true",
                       help="Q's divided by 10, durations shortened, tolerances doubled")
        p.add_argument("--duration", type=float, metavar="S", help="duration of every run in seconds")
        p.add_argument("--dt", type=float, metavar="S", help="integration step in seconds")
        p.add_argument("--workers", type=int, metavar="N", help="threads for sweep points")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(
            args.scenario, args.config,
            seed=args.seed,
            fast=True if args.fast else None,
            workers=args.workers,
            **{"simulation.duration_override_s": args.duration, "simulation.dt_s": args.dt},
        )
        out = args.out or cfg.output_dir or f"runs/{args.scenario}"
        result = run_scenario(cfg, out, argv=sys.argv if argv is None else argv)
    except (DomainError, ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for check in result.checks:
        print(check.line())
    print(json.dumps({"scenario": result.scenario, "out": str(out), "passed": result.passed}))
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
