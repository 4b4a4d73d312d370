"""Degree of the nodes each method befriends, in selection order.

    python3 scripts/insights.py [--config scripts/configs/survival.json]
"""

import argparse
import json
import sys
from pathlib import Path

from acorn.cli import run
from acorn.config import load_config

HERE = Path(__file__).resolve().parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(HERE / "configs" / "survival.json"))
    args = ap.parse_args()
    code = run(["insights", "--config", args.config])
    if code == 0:
        summary = json.loads((Path(load_config(args.config).out_dir) / "insights" / "summary.json").read_text())
        for s in summary:
            print(f"{s['method']:10s} median degree first 10%: {s['median_degree_first_10pct']:6.1f}  "
                  f"all: {s['median_degree_all']:6.1f}  ({s['n_selections']} selections)")
    sys.exit(code)
