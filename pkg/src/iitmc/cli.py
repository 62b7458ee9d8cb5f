"""Command line: ``iitmc {sample,exact,experiment} --config PATH --out DIR``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .core import IITError, ResourceError
from .experiment import ExperimentAborted, run_exact, run_experiment, run_sample
from .spectral import DEFAULT_CAP

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_sample(cfg, text: str, out: Path, args) -> int:
    target, chain, funcs, report, caught = run_sample(cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    chain.to_csv(out / cfg.outputs.chain_csv, target, funcs)
    report["config"] = text
    _write_json(out / cfg.outputs.report_json, report)
    return EXIT_OK


def cmd_exact(cfg, text: str, out: Path, args) -> int:
    result = run_exact(cfg, args.cap)
    result["config"] = text
    result["cap"] = args.cap
    _write_json(out / cfg.outputs.exact_json, result)
    return EXIT_OK


SUMMARY_COLUMNS = ["sampler", "functional", "var", "ess_mean", "evals", "mean", "se", "exact"]


def cmd_experiment(cfg, text: str, out: Path, args) -> int:
    try:
        rows, details = run_experiment(cfg, args.workers)
    except ExperimentAborted as exc:
        _write_json(out / cfg.outputs.details_json,
                    {"status": "partial", "error": str(exc), "completed_replicates": exc.completed, "config": text})
        (out / (cfg.outputs.summary_csv + ".partial")).write_text(f"aborted: {exc}\n")
        raise
    with open(out / cfg.outputs.summary_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    details["status"] = "complete"
    details["config"] = text
    _write_json(out / cfg.outputs.details_json, details)
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "exact": cmd_exact, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iitmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--workers", type=int, default=1, help="worker processes for replicates")
        p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="state-space cap for dense computations")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, text, args.out, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (IITError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
