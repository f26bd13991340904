"""Command-line interface for panelbreak.

Usage:
    panelbreak run --config run.toml
    panelbreak synth --kind vecm_calibrated --seed 2015 --out panel.csv
    panelbreak config --write run.toml
    panelbreak dynamics --config run.toml --out dynamics-out
"""

import argparse
import logging
import sys
if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from pathlib import Path
from typing import Any, Optional

from panelbreak.engine.api_ingest import write_long_csv
from panelbreak.engine.api_synth import DGP_KINDS, DgpSpec, generate
from panelbreak.engine.config import (
    RunConfig,
    config_from_mapping,
    default_config,
    load_config,
    write_config,
)
from panelbreak.engine.errors import InvalidSpec, PanelError
from panelbreak.engine.pipeline import run_pipeline
from panelbreak.engine.registry import STAGES, stage_names


def parse_override(text: str) -> tuple[str, Any]:
    """KEY=VALUE where VALUE is a TOML value; bare words are taken as strings."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise InvalidSpec(f"override must look like KEY=VALUE, got {text!r}")
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = dict(parse_override(s) for s in args.set or [])
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.config is not None:
        return load_config(args.config, overrides)
    if not overrides:
        return default_config()
    data: dict[str, Any] = {} if "input" in overrides else {"synth_kind": "vecm_calibrated"}
    data.update(overrides)
    return config_from_mapping(data, base_dir=Path.cwd())


def print_summary(decisions: list[tuple[str, str]]) -> None:
    width = max(len(k) for k, _ in decisions)
    for key, value in decisions:
        print(f"  {key:<{width}}  {value}")


def cmd_run(args: argparse.Namespace, stages: Optional[list[str]] = None) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    bundle = run_pipeline(cfg, stages, out_dir=out)
    print(f"Report bundle written to {out}")
    print_summary([tuple(row) for row in bundle.table("summary").rows])  # type: ignore[misc]
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = DgpSpec(
        kind=args.kind,
        seed=args.seed,
        n_entities=args.entities,
        n_periods=args.periods,
        start_year=args.start_year,
    )
    path = write_long_csv(generate(spec, workers=args.workers), args.out)
    print(f"Wrote {args.kind} panel ({args.entities} entities, {args.periods} years) to {path}")
    return 0


def cmd_config(args: argparse.Namespace) -> int:
    path = write_config(default_config(), args.write)
    print(f"Wrote default configuration to {path}")
    return 0


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="Flat TOML run configuration (default: calibrated synthetic panel)",
    )
    parser.add_argument(
        "--out",
        dest="output_dir",
        default=None,
        help="Output directory for the report bundle (overrides output_dir)",
    )
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Override one configuration key; may be repeated",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelbreak",
        description="Panel cointegration and VECM analysis with a policy structural-break dummy",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  panelbreak run --config tests/calibrated.toml
  panelbreak run --set synth_kind=independent_walks --out walks-out
  panelbreak synth --kind cointegrated --seed 7 --out panel.csv
  panelbreak cointegration --config run.toml

Exit codes: 0 success, 2 validation error, 3 numerical failure.
        """,
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Debug logging (per-entity lags, bandwidths, condition numbers)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run every stage and write the report bundle")
    _add_run_options(run)

    synth = sub.add_parser("synth", help="Write a synthetic panel as long CSV")
    synth.add_argument("--kind", choices=DGP_KINDS, required=True, help="Data-generating process")
    synth.add_argument("--seed", type=int, required=True, help="Root seed")
    synth.add_argument("--out", type=Path, required=True, help="Output CSV path")
    synth.add_argument("--entities", type=int, default=40, help="Number of entities (default: 40)")
    synth.add_argument("--periods", type=int, default=43, help="Number of years (default: 43)")
    synth.add_argument("--start-year", type=int, default=1980, help="First year (default: 1980)")
    synth.add_argument("--workers", type=int, default=1, help="Worker threads (default: 1)")

    config = sub.add_parser("config", help="Write the default run configuration")
    config.add_argument("--write", type=Path, required=True, help="Destination TOML path")

    for name in stage_names():
        stage_parser = sub.add_parser(
            name,
            help=f"{STAGES[name].description} (runs the stages it depends on first)",
        )
        _add_run_options(stage_parser)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "config":
            return cmd_config(args)
        return cmd_run(args, [args.command])
    except PanelError as e:
        print(f"Error: {e.message}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
