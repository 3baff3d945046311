"""Command-line front end: `jcas run <config>`, `jcas validate <config>`
and `jcas defaults`.

Exit codes: 0 success, 2 configuration error, 3 runtime error. The
worker count comes from the JCAS_WORKERS environment variable. Each run
writes one CSV per result family plus a manifest; on failure partial
outputs are removed.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_config, serialize_config, config_hash
from .errors import ConfigError, JcasError
from .harness import run_experiment, worker_count

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def _percentiles(values):
    arr = np.asarray(values, dtype=float)
    return [float(np.percentile(arr, p)) for p in (5, 50, 95)]


def _print_summary(result):
    print(f"{result.name}: {len(result.rows)} rows")
    if result.name == "rates":
        cols = {c: i for i, c in enumerate(result.columns)}
        groups = {}
        for row in result.rows:
            key = (
                row[cols["channel_model"]], row[cols["estimator"]],
                row[cols["radar_kind"]], row[cols["rcr_db"]],
            )
            groups.setdefault(key, []).append(row[cols["rate_bps_hz"]])
        for key in sorted(groups):
            p05, p50, p95 = _percentiles(groups[key])
            print(
                "  model=%s est=%s radar=%s rcr=%gdB  rate p05/p50/p95 = "
                "%.3f/%.3f/%.3f b/s/Hz" % (key + (p05, p50, p95))
            )
    elif result.name == "detection":
        cols = {c: i for i, c in enumerate(result.columns)}
        for row in result.rows:
            print(
                "  range=%gm radar=%s rcr=%gdB  P_D=%.3f [%.3f, %.3f]"
                % (
                    row[cols["range_m"]], row[cols["radar_kind"]],
                    row[cols["rcr_db"]], row[cols["pd"]],
                    row[cols["ci_low"]], row[cols["ci_high"]],
                )
            )
    elif result.name == "calibration":
        cols = {c: i for i, c in enumerate(result.columns)}
        for row in result.rows:
            print(
                "  radar=%s rcr=%gdB  threshold=%.4e measured_pfa=%.4f"
                % (
                    row[cols["radar_kind"]], row[cols["rcr_db"]],
                    row[cols["threshold"]], row[cols["measured_pfa"]],
                )
            )


def run_command(config_path: str) -> int:
    try:
        cfg = parse_config(Path(config_path).read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        results = run_experiment(cfg)  # pure; nothing written on failure
        for result in results:
            path = out_dir / f"{result.name}.csv"
            write_csv(path, result.columns, result.rows)
            written.append(path)
        manifest = {
            "version": f"jcas-{__version__}+cfg.{config_hash(cfg)[:8]}",
            "seed": cfg.seed,
            "kind": cfg.kind,
            "config_sha256": config_hash(cfg),
            "config": serialize_config(cfg),
            "files": {
                result.name: {
                    "path": f"{result.name}.csv",
                    "columns": list(result.columns),
                    "rows": len(result.rows),
                }
                for result in results
            },
        }
        manifest_path = out_dir / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        written.append(manifest_path)
        for result in results:
            _print_summary(result)
        print(f"wrote {len(written)} files to {out_dir} (workers={worker_count()})")
        return EXIT_OK
    except JcasError as exc:
        for path in written:
            path.unlink(missing_ok=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # partial outputs must not survive
        for path in written:
            path.unlink(missing_ok=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def validate_command(config_path: str) -> int:
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"OK: {cfg.kind} experiment, seed {cfg.seed}, "
          f"{len(serialize_config(cfg).splitlines())} canonical lines")
    return EXIT_OK


def defaults_command() -> int:
    print(serialize_config(ExperimentConfig()), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="jcas",
        description="Joint communication and sensing experiment runner",
    )
    parser.add_argument("--version", action="version", version=f"jcas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    sub.add_parser("defaults", help="print the default configuration")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_command(args.config)
    if args.command == "validate":
        return validate_command(args.config)
    return defaults_command()


if __name__ == "__main__":
    sys.exit(main())
