"""Command-line front end. One subcommand per experiment kind.

Exit codes: 0 success, 2 configuration error, 3 infeasible problem,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError
from .experiments import ENV_OUT_DIR, KINDS, run, validate_spec
from .qcqp import SolverNumericalError
from .scenario import ScenarioError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfisac",
        description="Cooperative bi-static ISAC network simulator and AP mode optimizer",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config or manifest path (default: built-in defaults)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", type=Path, default=None,
                       help=f"output directory (default: config, then ${ENV_OUT_DIR}, then ./cfisac_out)")
        p.add_argument("--threads", type=int, default=1, help="scenario-level worker threads")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        spec = validate_spec(text, kind=args.kind)
        if args.seed is not None:
            scenario = dataclasses.replace(spec.scenario, seed=args.seed)
            spec = dataclasses.replace(spec, scenario=scenario)
        summary = run(spec, out_dir=args.out, threads=args.threads)
    except (ConfigError, ScenarioError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverNumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if summary.get("status") == "infeasible":
        print(f"infeasible: outputs in {summary['output_dir']}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"done: outputs in {summary['output_dir']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
