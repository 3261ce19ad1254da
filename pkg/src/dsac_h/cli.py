"""Command line entry points: train, eval, and the hpi-solve debug tool.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .autodiff import NumericalError
from .harness import ConfigError, RunConfig, evaluate_checkpoint, run_training
from .harmonic import HpiProblem, solve_harmonic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _cmd_train(args) -> int:
    config = RunConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.iterations is not None:
        config.iterations = args.iterations
        config.validate()
    summary = run_training(config, args.out)
    print(json.dumps(summary))
    return EXIT_OK


def _cmd_eval(args) -> int:
    prefix = Path(args.ckpt)
    if prefix.suffix in (".bin", ".json"):
        prefix = prefix.with_suffix("")
    if not prefix.with_suffix(".json").exists():
        raise ConfigError(f"checkpoint manifest {prefix}.json not found")
    summary = evaluate_checkpoint(prefix, args.out, episodes=args.episodes)
    print(json.dumps(summary))
    return EXIT_OK


def _cmd_hpi_solve(args) -> int:
    try:
        doc = json.loads(Path(getattr(args, "in")).read_text())
        problem = HpiProblem(
            g_r=np.asarray(doc["g_r"], dtype=np.float64),
            g_c=np.asarray(doc["g_c"], dtype=np.float64),
            lam=float(doc.get("lambda", 1.0)),
            rho=float(doc.get("rho", 0.9)),
            max_iter=int(doc.get("max_iter", 20)),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad hpi-solve input: {e}") from e
    sol = solve_harmonic(problem)
    print(json.dumps(sol.to_dict()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsac-h", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train an agent from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--iterations", type=int, default=None)
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on held-out scenarios")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--episodes", type=int, default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=_cmd_eval)

    h = sub.add_parser("hpi-solve", help="solve one harmonic-gradient instance")
    h.add_argument("--in", required=True, dest="in")
    h.set_defaults(fn=_cmd_hpi_solve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
