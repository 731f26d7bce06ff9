"""Command line entry point: ``spinqoc <scenario> --config FILE --out DIR``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import SCENARIOS, ConfigError, ExperimentConfig, load_config
from .scenarios import NumericalFailure, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _read(path: str, scenario: str) -> ExperimentConfig:
    # a manifest.json from an earlier run can stand in for its config
    if path.endswith(".json"):
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        if not isinstance(data, dict) or "config" not in data:
            raise ConfigError(f"{path} is not a run manifest")
        return ExperimentConfig.from_dict(data["config"], scenario)
    return load_config(path, scenario)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinqoc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML config, or a manifest.json to repeat a run")
        p.add_argument("--out", default=None, help="output directory (default: config out_dir or results/<scenario>)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent rows")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = _read(args.config, args.scenario).with_overrides(seed=args.seed)
        out = args.out or cfg.out_dir or Path("results") / args.scenario
        result = run(cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{args.scenario}: {len(result.rows)} rows written to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
