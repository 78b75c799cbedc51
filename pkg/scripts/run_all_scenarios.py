"""Run `finsler-em check` on every scenario in a directory and tabulate the summaries.

    python3 scripts/run_all_scenarios.py [scenarios/] [--threads N]
"""
import argparse
import contextlib
import io
import sys
from pathlib import Path

from finsler_em import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("directory", nargs="?", default=str(Path(__file__).parent.parent / "scenarios"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    worst = 0
    print(f"{'scenario':24s} exit  summary")
    for path in sorted(Path(args.directory).glob("*.y*ml")):
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = cli.main(["check", "--scenario", str(path), "--threads", str(args.threads)])
        last = buf.getvalue().rstrip().splitlines()[-1] if buf.getvalue() else ""
        print(f"{path.stem:24s} {code:4d}  {last.removeprefix('# summary ')}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
