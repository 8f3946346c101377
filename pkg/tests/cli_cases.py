"""CLI invocations with golden outputs; shared by the CLI tests and the determinism check."""
from __future__ import annotations

import hashlib
import os
import subprocess
import sys
from pathlib import Path

from conftest import DATA, GOLDEN

INLINE_LIMIT = 64 * 1024
SMALL = ["--counts", "1M-10M=40,100M-1G=12", "--total-bytes", "6000000000"]

# name -> argument list; "{out}" is replaced by a per-run output directory
CASES = {
    "gen-dataset-reference": ["gen-dataset", "--preset", "petascale-reference", "--seed", "42", "--calibrate", "-o", "{out}/m.tsv"],
    "gen-dataset-empty": ["gen-dataset", "--empty"],
    "gen-dataset-small": ["gen-dataset", *SMALL, "--seed", "7"],
    "transfer-small": ["transfer", "--topology", "end-state", "--src", "ALCF", "--dst", "NERSC", *SMALL,
                       "--format", "structured", "-o", "{out}"],
    "transfer-corrupt": ["transfer", "--topology", str(DATA / "two-site.json"), *SMALL, "--corruption", "0.05",
                         "-o", "{out}"],
    "mesh-start-small": ["mesh", "--topology", "start-state", *SMALL, "--format", "csv", "-o", "{out}"],
    "mesh-trap-diagnose": ["mesh", "--topology", "integration-trap", "--sites", "ALCF,NCSA,OLCF", *SMALL,
                           "--diagnose", "-o", "{out}"],
    "components-end": ["components", "--topology", "end-state", "--format", "csv"],
    "components-trap": ["components", "--topology", "integration-trap", "--sites", "OLCF", "--format", "structured"],
    "diagnose-start-rates": ["diagnose", "--topology", "start-state", "--matrix", str(DATA / "start-rates.csv"), "--format", "structured"],
    "render-start-rates": ["render", "--matrix", str(DATA / "start-rates.csv")],
    "render-end-rates-csv": ["render", "--matrix", str(DATA / "end-rates.csv"), "--format", "csv", "-o", "{out}"],
}


def run_cli(args, out_dir: Path, env=None):
    argv = [a.replace("{out}", str(out_dir)) for a in args]
    full_env = dict(os.environ)
    full_env.pop("PDTN_FIXTURES", None)
    full_env.update(env or {})
    return subprocess.run([sys.executable, "-m", "pdtn", *argv], capture_output=True, text=True, env=full_env)


def snapshot(proc, out_dir: Path) -> str:
    """stdout, exit code and every file written, as one text blob."""
    parts = [f"# exit {proc.returncode}\n", "# stdout\n", proc.stdout, "# stderr\n", proc.stderr]
    if out_dir.exists():
        for path in sorted(p for p in out_dir.rglob("*") if p.is_file()):
            data = path.read_bytes()
            if len(data) > INLINE_LIMIT:
                parts.append(f"# file {path.relative_to(out_dir)} sha256={hashlib.sha256(data).hexdigest()}\n")
            else:
                parts.append(f"# file {path.relative_to(out_dir)}\n")
                parts.append(data.decode("utf-8"))
    return "".join(parts).replace(str(out_dir), "{out}")


def golden_path(name: str) -> Path:
    return GOLDEN / f"{name}.txt"
