"""Command-line interface.

Every subcommand reads the same configuration (JSON file plus flag
overrides), writes its tables as CSV into the output directory, and
always leaves a ``<subcommand>_manifest.json`` recording the resolved
configuration, input digests, output row counts, and success or
failure. Exit codes: 0 success, 1 input error, 2 computation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, entropy, reports, synth
from .config import RunConfig, load_config
from .errors import ComputationError, InputError

SUBCOMMANDS = {
    "validate": reports.build_validate,
    "metrics": reports.build_metrics,
    "classify": reports.build_classify,
    "fit": reports.build_fit,
    "fit-daily": reports.build_fit_daily,
    "entropy": reports.build_entropy,
    "cohort": reports.build_cohort,
    "transitions": reports.build_transitions,
    "daily": reports.build_daily,
    "onn": reports.build_onn,
    "spatial": reports.build_spatial,
    "activity": reports.build_activity,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridmob",
        description="Batch mobility-behavior analytics over gridded trajectories",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--data", help="trajectory CSV (header uid,d,t,x,y)")
    common.add_argument("--poi", help="POI CSV (header x,y,POI_count)")
    common.add_argument("--out", help="output directory (default 'out')")
    common.add_argument("--period", help="restrict the run to one configured period")
    common.add_argument("--k", type=int, help="top-k size for classification")
    common.add_argument("--threads", type=int, help="worker threads for per-user loops")
    common.add_argument("--seed", type=int, help="seed for generators")
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} analysis")
    gen = sub.add_parser("synth", parents=[common], help="generate a synthetic population")
    gen.add_argument("--scenario", help="scenario JSON (defaults to the built-in scenario)")
    gen.add_argument("--users-per-group", type=int, default=25)
    return parser


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _input_digests(config: RunConfig, extra: dict[str, str | None] | None = None) -> dict:
    paths = {"data": config.data, "poi": config.poi}
    paths.update(extra or {})
    out = {}
    for name, value in paths.items():
        if value is None:
            continue
        p = Path(value)
        out[name] = {"path": str(p), "sha256": _sha256(p) if p.exists() else None}
    return out


def _write_manifest(
    out_dir: Path,
    subcommand: str,
    config: RunConfig,
    inputs: dict,
    outputs: dict,
    notes: dict,
    status: str,
    error: str | None,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "inputs": inputs,
        "outputs": outputs,
        "notes": notes,
        "status": status,
        "error": error,
        "metadata": {
            "timestamp_utc": datetime.now(timezone.utc).isoformat(),
            "gridmob_version": __version__,
            "entropy_kernel": entropy.KERNEL,
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{subcommand.replace('-', '_')}_manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2))


def _write_tables(out_dir: Path, tables: dict) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for name in sorted(tables):
        filename = f"{name}.csv"
        tables[name].to_csv(out_dir / filename, index=False)
        outputs[filename] = {"rows": int(len(tables[name]))}
    return outputs


def _load_scenario(args: argparse.Namespace, config: RunConfig) -> synth.ScenarioSpec:
    if args.scenario:
        path = Path(args.scenario)
        if not path.exists():
            raise InputError(f"scenario file not found: {path}")
        payload = json.loads(path.read_text())
        if args.seed is not None:
            payload["seed"] = args.seed
        return synth.scenario_from_dict(payload)
    return synth.default_scenario(seed=config.seed, users_per_group=args.users_per_group)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in ("data", "poi", "out", "k", "threads", "seed")
        if getattr(args, key, None) is not None
    }
    try:
        config = load_config(args.config, overrides)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(config.out)
    notes: dict = {}
    outputs: dict = {}
    extra_inputs = {"scenario": getattr(args, "scenario", None)}
    try:
        if args.subcommand == "synth":
            scenario = _load_scenario(args, config)
            bundle = reports.build_synth(config, scenario)
            outputs = _write_tables(out_dir, bundle.tables)
            truth_path = out_dir / "ground_truth.json"
            truth_path.write_text(
                json.dumps(bundle.notes.pop("ground_truth"), sort_keys=True, indent=1)
            )
            outputs["ground_truth.json"] = {"rows": bundle.notes["n_users"]}
            notes = bundle.notes
        else:
            builder = SUBCOMMANDS[args.subcommand]
            ws = reports.Workspace(config)
            if args.subcommand == "onn":
                poi = None
                if config.poi is not None:
                    from .onn import POIGrid

                    poi = POIGrid.from_csv(config.poi)
                bundle = builder(ws, args.period, poi)
            else:
                bundle = builder(ws, args.period)
            outputs = _write_tables(out_dir, bundle.tables)
            notes = bundle.notes
    except InputError as exc:
        _write_manifest(
            out_dir, args.subcommand, config, _input_digests(config, extra_inputs),
            outputs, notes, "failed", str(exc),
        )
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ComputationError as exc:
        _write_manifest(
            out_dir, args.subcommand, config, _input_digests(config, extra_inputs),
            outputs, notes, "failed", str(exc),
        )
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_manifest(
        out_dir, args.subcommand, config, _input_digests(config, extra_inputs),
        outputs, notes, "ok", None,
    )
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
