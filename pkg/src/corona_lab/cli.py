"""``corona-lab <subcommand> --config <path> [--out <dir>] [--threads N]``

Exit status: 0 when every asserted check passes, 1 when a check fails
(witnesses go to stderr), 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .config import EXPERIMENTS, load_config
from .errors import ConfigError, CoronaLabError, InputError
from .experiments import run
from .spaces import SCHEMA_VERSION


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "item"):
        return fmt(v.item())
    if isinstance(v, (list, tuple)):
        return " ".join(fmt(x) for x in v)
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("CORONA_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"CORONA_LAB_THREADS must be an integer, got {env!r}") from exc
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="corona-lab", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", default=None, help="output directory (default out/<subcommand>)")
    ap.add_argument("--threads", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand)
        threads = _threads(args.threads)
        result = run(cfg, threads)
    except (ConfigError, InputError) as exc:
        print(f"corona-lab: config error: {exc}", file=sys.stderr)
        return 2
    except CoronaLabError as exc:
        print(f"corona-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    out = Path(args.out or Path("out") / args.subcommand)
    out.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in sorted(result.tables.items()):
        write_csv(out / f"{name}.csv", header, rows)
    summary = {"schema_version": SCHEMA_VERSION, "config_hash": cfg.hash,
               "experiment": cfg.experiment, "passed": result.passed,
               "failures": result.failures, **result.summary}
    (out / "summary.json").write_text(
        json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n")
    if not result.passed:
        for f in result.failures:
            print(f"corona-lab: check {f['check']} failed; witness: "
                  f"{json.dumps(_jsonable(f['witness']))}", file=sys.stderr)
        return 1
    print(f"{cfg.experiment}: all checks passed ({out})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
