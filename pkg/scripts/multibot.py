"""One bot per disjoint sub-graph; aggregate influence over the union.

Needs trained bundles under the config's out_dir (see survival_vs_influence.py).

    python3 scripts/multibot.py [--config scripts/configs/survival.json]
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
    code = run(["multibot", "--config", args.config])
    if code == 0:
        rep = json.loads((Path(load_config(args.config).out_dir) / "multibot" / "aggregate.json").read_text())
        print(f"{rep['n_graphs']} bots, aggregate influence ratio {rep['aggregate_influence_ratio']:.3f}")
    sys.exit(code)
