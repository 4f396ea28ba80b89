"""Run every CLI experiment in ``scripts/configs`` and collect the reports.

Each config runs into ``results/<config name>/``; a one-line summary per
run is printed.  Pass config names to run a subset.
"""

import argparse
import json
import sys
from pathlib import Path

from censored_bernstein.cli import main as cli_main

HERE = Path(__file__).resolve().parent


def summarize(report):
    r = report.get("result")
    if r is None:
        return f"error: {report['error']['message']}"
    cmd = report["command"]
    if cmd == "kernels":
        return f"q={r['q']:.10f} sonine_deviation={r['sonine_deviation']:.2e}"
    if cmd == "classify":
        return f"row={r['row']} a*={r['a_star']} b*={r['b_star']}"
    if cmd == "solve":
        return f"terms={r['terms_used']} residual={r['residual']:.2e} tail={r['tail_bound']:.1e}"
    if cmd == "simulate":
        lm = r["lifetime_mean"]
        return f"E tau={lm['estimate']:.4f}+-{lm['stderr']:.4f} terminated={r['terminated_fraction']:.4f}"
    return "; ".join(f"{c['identity']}: z={c['z_score']:+.2f} adj={c['z_after_allowance']:.2f} "
                     f"{'pass' if c['pass'] else 'FAIL'}" for c in r["comparisons"])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help="config names without .json (default: all)")
    ap.add_argument("--results", default="results")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    configs = sorted((HERE / "configs").glob("*.json"))
    if args.names:
        configs = [c for c in configs if c.stem in args.names]
    status = 0
    for path in configs:
        command = json.loads(path.read_text())["command"]
        out = Path(args.results) / path.stem
        code = cli_main([command, "--config", str(path), "--out", str(out), "--threads", str(args.threads)])
        report = out / f"{command}.json"
        line = summarize(json.loads(report.read_text())) if report.exists() else "no report"
        print(f"{path.stem:24s} exit={code} {line}", flush=True)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
