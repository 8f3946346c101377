"""Rewrite tests/golden/ from the current CLI output. Review the diff before committing."""
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from cli_cases import CASES, golden_path, run_cli, snapshot  # noqa: E402


def main() -> None:
    for name, args in CASES.items():
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "out"
            blob = snapshot(run_cli(args, out), out)
        golden_path(name).write_text(blob, encoding="utf-8")
        print(f"{name}: {len(blob)} bytes")


if __name__ == "__main__":
    main()
