"""Train ACORN and AgentI*, evaluate every method on held-out 200-node graphs,
and print survival / full-budget influence next to AgentI+H.

    python3 scripts/survival_vs_influence.py [--config scripts/configs/survival.json]

Stages already on disk (detector, bundles, eval) are reused.
"""

import argparse
import sys
from pathlib import Path

from acorn import harness as H
from acorn.cli import run
from acorn.config import load_config

HERE = Path(__file__).resolve().parent


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(HERE / "configs" / "survival.json"))
    ap.add_argument("--force-eval", action="store_true", help="rerun evaluation even if episodes exist")
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(cfg.out_dir)
    for stage in ("train-detector", "train"):
        if stage == "train-detector" and (out / "detector.json").exists():
            continue
        if run([stage, "--config", args.config, "-v"]) != 0:
            return 2
    episodes = out / "eval" / "episodes.jsonl"
    if args.force_eval or not episodes.exists():
        if run(["eval", "--config", args.config, "-v"]) != 0:
            return 2
    eps = H.read_episodes(episodes)
    rows = []
    for m in cfg.methods:
        if m != "AgentI+H":
            rows += H.compare_methods(eps, m, "AgentI+H")
    H.write_csv(out / "eval" / "vs_degree.csv", list(rows[0]), rows)
    print(f"{'method':10s} {'p':>5s} {'survival':>9s} {'base':>7s} {'U p-val':>8s} {'ratio':>6s} {'base':>6s}")
    for r in rows:
        print(f"{r['method']:10s} {r['p']:5.2f} {r['survival_mean']:9.0f} {r['baseline_survival_mean']:7.0f} "
              f"{r['survival_pvalue']:8.2g} {r['ratio_mean']:6.3f} {r['baseline_ratio_mean']:6.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
