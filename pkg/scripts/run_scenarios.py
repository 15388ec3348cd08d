"""Validate every scenario in ``configs/`` and compute the Perron eigenpair where possible.

Usage::

    python scripts/run_scenarios.py [--configs configs] [--out runs] [--grid-n 256]

Each scenario gets its own output directory.  Scenarios whose verdict is
``none`` are only validated unless ``--override-verdict`` is given.
"""
from __future__ import annotations

import argparse
import io
import json
from pathlib import Path

from gfrag.cli_io import load_config, run


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--configs", default="configs")
    p.add_argument("--out", default="runs")
    p.add_argument("--grid-n", type=int, default=None)
    p.add_argument("--override-verdict", action="store_true")
    args = p.parse_args()

    print(f"{'scenario':<28} {'verdict':<20} {'eigen exit':>10} {'lambda*':>14}")
    worst = 0
    for cfg in sorted(Path(args.configs).glob("*.ini")):
        out = Path(args.out) / cfg.stem
        common = ["--config", str(cfg), "--out", str(out)]
        if args.grid_n is not None:
            common += ["--grid-n", str(args.grid_n)]
        buf = io.StringIO()
        if run(["validate", *common], stdout=buf) != 0:
            print(f"{cfg.stem:<28} {'invalid':<20}")
            worst = max(worst, 2)
            continue
        verdict = json.loads(buf.getvalue())["applicability"]["verdict"]
        lam = ""
        code = "skipped"
        if verdict != "none" or args.override_verdict:
            extra = ["--override-verdict"] if args.override_verdict else []
            rc = run(["eigen", *common, *extra], stdout=io.StringIO())
            code = str(rc)
            worst = max(worst, rc)
            if rc == 0:
                lam = f"{json.loads((out / 'eigen.json').read_text())['result']['eigen']['lambda_star']:.10f}"
        print(f"{load_config(cfg).name:<28} {verdict:<20} {code:>10} {lam:>14}")
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
