"""Command line entry point: ``argsym run|report|list-presets``.

Exit codes: 0 ok, 1 an acceptance check failed (a statistical test came
out the wrong way, or a report found failures or tampering), 2 usage or
validation error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .presets import list_presets
from .runner import ConfigError, run_experiment, validate

EXIT_OK, EXIT_REJECT, EXIT_USAGE = 0, 1, 2
OUTPUT_FILES = ("results.csv", "verdict.json", "config.json")


class UsageError(Exception):
    pass


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def shipped_configs() -> dict:
    root = resources.files("argsym") / "configs"
    return {p.name[:-5]: p for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".json")}


def _load_config(spec: str) -> dict:
    path = Path(spec)
    if not path.exists():
        shipped = shipped_configs()
        if spec in shipped:
            return json.loads(shipped[spec].read_text())
        raise UsageError(f"config not found: {spec}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{spec}: invalid JSON ({exc})") from exc


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def run(config: str, out: str | None = None, workers: int | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    raw = _load_config(config)
    cfg = validate(raw)
    out_dir = Path(out) if out else Path("runs") / cfg.name
    if out_dir.exists() and any(out_dir.iterdir()) and not (out_dir / "manifest.json").exists():
        raise UsageError(f"{out_dir} exists and is not a run directory; refusing to overwrite")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.tmp-", dir=out_dir.parent))
    try:
        t0 = time.perf_counter()
        result = run_experiment(cfg, workers)
        wall = time.perf_counter() - t0
        bodies = {
            "results.csv": result.csv_text(),
            "verdict.json": _json_text({"name": cfg.name, "kind": cfg.kind, **result.verdict}),
            "config.json": _json_text(raw),
        }
        for name, text in bodies.items():
            (tmp / name).write_text(text)
        manifest = {
            "name": cfg.name,
            "kind": cfg.kind,
            "master_seed": cfg.master_seed,
            "config_sha256": sha256_bytes(_canonical(raw)),
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "workers": workers,
            "wall_time_s": round(wall, 3),
            "passed": result.passed,
            "files": {name: sha256_file(tmp / name) for name in OUTPUT_FILES},
        }
        (tmp / "manifest.json").write_text(_json_text(manifest))
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    status = "PASS" if result.passed else "FAIL"
    print(f"{status} {cfg.name} ({cfg.kind}) -> {out_dir}", file=stream)
    for c in result.verdict["checks"]:
        print(f"  [{'ok' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']} {c['op']} {c['threshold']}",
              file=stream)
    return EXIT_OK if result.passed else EXIT_REJECT


def _find_manifests(root: Path) -> list[Path]:
    if (root / "manifest.json").exists():
        return [root / "manifest.json"]
    return sorted(p for p in root.rglob("manifest.json") if not p.parent.name.startswith("."))


def inspect_run(manifest_path: Path) -> dict:
    """Status of one run directory: intact/tampered/corrupt plus its verdict."""
    run_dir = manifest_path.parent
    row = {"run": str(run_dir), "kind": "", "status": "ok", "passed": False, "checks": ""}
    try:
        manifest = json.loads(manifest_path.read_text())
        files = manifest["files"]
        row["kind"] = manifest["kind"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        row["status"] = f"corrupt manifest ({exc.__class__.__name__})"
        return row
    bad = [name for name, digest in files.items()
           if not (run_dir / name).exists() or sha256_file(run_dir / name) != digest]
    if bad:
        row["status"] = "checksum mismatch: " + ", ".join(bad)
        return row
    verdict = json.loads((run_dir / "verdict.json").read_text())
    row["passed"] = bool(verdict["passed"])
    row["checks"] = "; ".join(f"{c['name']}={c['value']} {c['op']} {c['threshold']}" for c in verdict["checks"])
    return row


def report(run_dir: str, stream=None) -> int:
    stream = stream or sys.stdout
    root = Path(run_dir)
    if not root.is_dir():
        raise UsageError(f"not a directory: {run_dir}")
    manifests = _find_manifests(root)
    if not manifests:
        print(f"no runs found in {run_dir}", file=stream)
        return EXIT_USAGE
    rows = [inspect_run(m) for m in manifests]
    cols = ["run", "kind", "status", "passed", "checks"]
    with open(root / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    width = max(len(Path(r["run"]).name) for r in rows)
    for r in rows:
        mark = "PASS" if r["passed"] and r["status"] == "ok" else "FAIL"
        print(f"{mark}  {Path(r['run']).name:<{width}}  {r['kind']:<20} {r['status']}", file=stream)
        if r["checks"]:
            print(f"      {r['checks']}", file=stream)
    if any(r["status"].startswith("corrupt") for r in rows):
        return EXIT_USAGE
    return EXIT_OK if all(r["passed"] and r["status"] == "ok" for r in rows) else EXIT_REJECT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="argsym", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config (path or shipped config name)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default runs/<name>)")
    r.add_argument("--workers", type=int, default=None,
                   help="worker threads (default from ARGSYM_WORKERS, else 1)")
    rep = sub.add_parser("report", help="summarize and verify run directories")
    rep.add_argument("run_dir")
    sub.add_parser("list-presets", help="print preset names and shipped configs")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "run":
            if args.workers is not None and args.workers < 1:
                raise UsageError("--workers must be >= 1")
            return run(args.config, args.out, args.workers)
        if args.command == "report":
            return report(args.run_dir)
        print(json.dumps({**list_presets(), "shipped_configs": list(shipped_configs())}, indent=2))
        return EXIT_OK
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, RuntimeError) as exc:
        # software-side failure; partial outputs were already removed
        print(f"run failed: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
