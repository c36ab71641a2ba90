"""Run every experiment configuration in configs/ and print the summaries.

    python3 scripts/run_experiments.py [--out out] [configs/*.ini ...]
"""
import argparse
import sys
from pathlib import Path

from crossdiff.cli import main as cli_main
from crossdiff.config import parse_config

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--out", type=Path, default=ROOT / "out")
    args = ap.parse_args(argv)
    configs = args.configs or sorted((ROOT / "configs").glob("*.ini"))
    failed = []
    for path in configs:
        has_experiment = bool(parse_config(path).experiment)
        command = "experiment" if has_experiment else "run"
        print(f"== {path.name} ({command})")
        code = cli_main([command, "--config", str(path), "--out", str(args.out / path.stem),
                         "--no-header-time"])
        print(f"exit {code}\n")
        if code:
            failed.append(path.name)
    if failed:
        print("failed: " + ", ".join(failed))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
