"""Command-line front end: ``mimeticfd {identities,conservation,convergence,run}``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .errors import ConfigError, MimeticError
from .experiments import RUNNERS, ExperimentConfig

SUBCOMMANDS = {"identities": "identities", "conservation": "conservation",
               "convergence": "convergence", "run": "single-run"}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mimeticfd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config; defaults are used if omitted")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    return ap


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    experiment = SUBCOMMANDS[args.command]
    if data.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {data['experiment']!r} but the command is {args.command!r}")
    data["experiment"] = experiment
    if args.out is not None:
        data["out"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    return ExperimentConfig.from_dict(data)


def _summary(experiment, result) -> tuple[str, bool]:
    """One-line summary and whether any cell failed numerically."""
    if experiment == "identities":
        worst = max(r.worst for r in result)
        failed = any(r.errors for r in result)
        return f"{len(result)} audits, worst residual {worst:.3e}", failed
    if experiment == "single-run":
        return f"t = {result.t_end:.6g}, error {result.error:.3e}, losses {result.final.losses}", False
    failed = any(r.get("failure") for r in result)
    return f"{len(result)} rows{' with failures' if failed else ''}", failed


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        result = RUNNERS[cfg.experiment](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MimeticError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    line, failed = _summary(cfg.experiment, result)
    print(f"{args.command}: {line}")
    if cfg.experiment in ("convergence", "conservation"):
        for row in result:
            cells = {k: v for k, v in row.items() if k not in ("stats", "failure")}
            print("  " + ", ".join(f"{k}={_short(v)}" for k, v in cells.items()))
    return EXIT_NUMERICAL if failed else EXIT_OK


def _short(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.3e}"
    return "" if v is None else str(v)


if __name__ == "__main__":
    sys.exit(main())
