"""Per-selection wall time of CELF and AgentII against budget and p.

    python3 scripts/bench_runtime.py [--config CFG] [--bundle PREFIX]
"""

import argparse
from collections import defaultdict

from acorn import harness as H
from acorn.config import load_config
from acorn.policy import PolicyBundle


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--bundle", help="trained bundle prefix (random weights time the same)")
    args = ap.parse_args()
    cfg = load_config(args.config)
    rows = H.bench_runtime(cfg, PolicyBundle.load(args.bundle) if args.bundle else None)
    table = defaultdict(dict)
    for r in rows:
        table[(r["method"], r["p"])][r["budget"]] = r["per_selection_s"] * 1e3
    budgets = sorted({r["budget"] for r in rows})
    print("per-selection ms".ljust(16) + "".join(f"{b:>9d}" for b in budgets))
    for (m, p), vals in sorted(table.items()):
        print(f"{m:8s} p={p:<5}" + "".join(f"{vals[b]:9.3f}" for b in budgets))


if __name__ == "__main__":
    main()
