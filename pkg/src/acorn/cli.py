"""Command-line entry point: ``acorn <command> [--config PATH] [--seed N] [--out DIR] [--dry-run]``.

Exit codes: 0 success, 1 usage or configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness as H
from .config import ConfigError, ExperimentConfig, load_config
from .embedding import save_embeddings_bin, save_embeddings_csv
from .graph import load_edge_list, load_graph_npz
from .policy import PolicyBundle

log = logging.getLogger("acorn")

COMMANDS = ("gen-graph", "embed", "train-detector", "train", "eval", "bench-runtime", "multibot",
            "insights", "pipeline")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="acorn", description="Adversarial socialbot learning experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config document (defaults used when omitted)")
    ap.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--dry-run", action="store_true", help="print the resolved plan and write nothing")
    ap.add_argument("--input", help="graph file or directory (embed) / episodes file (insights)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out:
        cfg.out_dir = args.out
    return cfg.validate()


# ---------------------------------------------------------------------------
# stage helpers


def _detector(cfg: ExperimentConfig, out: Path):
    path = out / "detector.json"
    if cfg.detector.path is None and path.exists():
        return H.RandomForest.load(path)
    forest, report = H.build_detector(cfg.detector)
    forest.save(path)
    H.write_json(out / "detector_report.json", report)
    return forest


def _bundles(cfg: ExperimentConfig, out: Path, detector, train_missing: bool) -> dict[int, dict]:
    if cfg.bundle:
        shared = {"ACORN": PolicyBundle.load(cfg.bundle),
                  "AgentI*": PolicyBundle.load(cfg.independent_bundle or cfg.bundle)}
        return {s: shared for s in cfg.seeds}
    result = {}
    train_seeds = cfg.seeds if cfg.train_per_seed else cfg.seeds[:1]
    for s in train_seeds:
        paths = H.bundle_paths(out, s)
        if all(Path(f"{p}.json").exists() for p in paths.values()):
            result[s] = {k: PolicyBundle.load(p) for k, p in paths.items()}
        elif train_missing:
            result[s] = H.train_agents(cfg, detector, s, out)
        else:
            raise FileNotFoundError(f"no trained bundles for seed {s} under {out / 'bundles'}")
    if not cfg.train_per_seed:
        result = {s: result[train_seeds[0]] for s in cfg.seeds}
    return result


def _load_graphs(path: Path):
    files = sorted(path.glob("*")) if path.is_dir() else [path]
    out = []
    for f in files:
        if f.suffix == ".npz":
            out.append((f.stem, load_graph_npz(f)))
        elif f.suffix in (".txt", ".edges"):
            out.append((f.stem, load_edge_list(f)))
    if not out:
        raise FileNotFoundError(f"no graph files in {path}")
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_gen_graph(cfg, out):
    cases = H.build_suite(cfg)
    paths = H.save_suite(cases, out / "graphs")
    return {"graphs": paths}


def cmd_embed(cfg, out, input_path):
    graphs = _load_graphs(Path(input_path)) if input_path else [(c.name, c.graph) for c in H.build_suite(cfg)]
    (out / "embeddings").mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (name, g) in enumerate(graphs):
        emb = H.embed(cfg, g, cfg.walk.rng_seed + i)
        save_embeddings_bin(emb, out / "embeddings" / f"{name}.bin")
        save_embeddings_csv(emb, out / "embeddings" / f"{name}.csv")
        paths.append(str(out / "embeddings" / f"{name}.bin"))
    return {"embeddings": paths}


def cmd_train_detector(cfg, out):
    forest, report = H.build_detector(cfg.detector)
    forest.save(out / "detector.json")
    H.write_json(out / "detector_report.json", report)
    return {"detector": str(out / "detector.json"), "report": report}


def cmd_train(cfg, out):
    detector = _detector(cfg, out)
    _bundles(cfg, out, detector, train_missing=True)
    return {"bundles": sorted(str(p) for p in (out / "bundles").glob("*.json"))}


def cmd_eval(cfg, out):
    detector = _detector(cfg, out)
    bundles = _bundles(cfg, out, detector, train_missing=False)
    suite = H.build_suite(cfg)
    results = H.evaluate(cfg, suite, bundles, detector)
    return H.write_eval_outputs(out / "eval", cfg, results)


def cmd_bench_runtime(cfg, out):
    bundle = PolicyBundle.load(cfg.bundle) if cfg.bundle else None
    if bundle is None:
        p = H.bundle_paths(out, cfg.seeds[0])["ACORN"]
        if Path(f"{p}.json").exists():
            bundle = PolicyBundle.load(p)
    rows = H.bench_runtime(cfg, bundle)
    (out / "bench").mkdir(parents=True, exist_ok=True)
    H.write_csv(out / "bench" / "runtime.csv", ["method", "p", "budget", "per_selection_s", "evaluations"], rows)
    return {"runtime": str(out / "bench" / "runtime.csv")}


def cmd_multibot(cfg, out):
    detector = _detector(cfg, out)
    bundles = _bundles(cfg, out, detector, train_missing=False)
    spec = cfg.multibot
    graphs = H.synthetic_graphs(spec.profile, spec.n_graphs, spec.rng_seed)
    cases = [H.GraphCase(f"sub_{i:03d}", g, H.embed(cfg, g, spec.rng_seed + i)) for i, g in enumerate(graphs)]
    seed = cfg.seeds[0]
    report = H.multibot(cfg, cases, bundles[seed], detector, seed)
    (out / "multibot").mkdir(parents=True, exist_ok=True)
    H.write_json(out / "multibot" / "aggregate.json", report)
    return {"multibot": str(out / "multibot" / "aggregate.json")}


def cmd_insights(cfg, out, input_path):
    src = Path(input_path) if input_path else out / "eval" / "episodes.jsonl"
    if not src.exists():
        raise FileNotFoundError(f"episode file {src} not found")
    rows, summary = H.insights(H.read_episodes(src))
    (out / "insights").mkdir(parents=True, exist_ok=True)
    H.write_csv(out / "insights" / "selection_degrees.csv", H.INSIGHT_FIELDS, rows)
    H.write_json(out / "insights" / "summary.json", summary)
    return {"insights": str(out / "insights" / "selection_degrees.csv")}


PIPELINE = ("train-detector", "train", "eval", "insights", "bench-runtime")


def plan(cfg: ExperimentConfig, command: str) -> dict:
    stages = list(PIPELINE) if command == "pipeline" else [command]
    return {"command": command, "stages": stages, "out_dir": cfg.out_dir, "config": cfg.to_dict()}


def cmd_pipeline(cfg, out):
    manifest_path = out / "manifest.json"
    manifest = {"stages": {}}
    if cfg.detector.path is not None and not Path(cfg.detector.path).exists():
        raise H.StageError("train-detector", FileNotFoundError(f"detector source {cfg.detector.path} missing"))
    for stage in PIPELINE:
        try:
            if stage == "train-detector":
                det = _detector(cfg, out)
                res = {"detector": str(out / "detector.json")}
            elif stage == "train":
                _bundles(cfg, out, det, train_missing=True)
                res = {"bundles": sorted(str(p) for p in (out / "bundles").glob("*.json"))}
            elif stage == "eval":
                res = cmd_eval(cfg, out)
            elif stage == "insights":
                res = cmd_insights(cfg, out, None)
            else:
                res = cmd_bench_runtime(cfg, out)
        except Exception as exc:  # noqa: BLE001 - stage name is the diagnostic
            raise H.StageError(stage, exc) from exc
        manifest["stages"][stage] = res
        H.write_json(manifest_path, manifest)
    return manifest


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
    except UsageError as exc:
        print(f"acorn: usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"acorn: config error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.dry_run:
        print(json.dumps(plan(cfg, args.command), indent=2, sort_keys=True))
        return 0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    H.write_json(out / "resolved_config.json", cfg.to_dict())
    handlers = {
        "gen-graph": lambda: cmd_gen_graph(cfg, out),
        "embed": lambda: cmd_embed(cfg, out, args.input),
        "train-detector": lambda: cmd_train_detector(cfg, out),
        "train": lambda: cmd_train(cfg, out),
        "eval": lambda: cmd_eval(cfg, out),
        "bench-runtime": lambda: cmd_bench_runtime(cfg, out),
        "multibot": lambda: cmd_multibot(cfg, out),
        "insights": lambda: cmd_insights(cfg, out, args.input),
        "pipeline": lambda: cmd_pipeline(cfg, out),
    }
    try:
        result = handlers[args.command]()
    except H.StageError as exc:
        print(f"acorn: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"acorn: stage {args.command!r} failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


def main() -> None:
    sys.exit(run())
