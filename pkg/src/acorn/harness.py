"""Experiment orchestration: detector training, policy training, evaluation, reports.

Every command writes into an output directory and returns the paths it
produced. Metric files are deterministic given config and seeds; wall-clock
timings go to separate ``timing`` files so reruns can be compared byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import mannwhitneyu

from .baselines import (CelfEpisodeSelector, CelfSelector, DegreeSelector, LearnedActivityAgent,
                        LearnedSelector, MonteCarloGain, run_baseline_episode)
from .config import ConfigError, DetectorSpec, ExperimentConfig
from .detector import (ActivityProfile, RandomForest, f1_score, generate_labeled_corpus, train_forest)
from .diffusion import LiveEdgeWorlds
from .embedding import node2vec_embed, save_embeddings_bin
from .env import EnvConfig, EpisodeRecord, ObservationII, SocialBotEnv
from .graph import (SocialGraph, generate_synthetic, load_edge_list, load_graph_npz, save_edge_list,
                    save_graph_npz)
from .policy import CURVE_FIELDS, PolicyBundle, train

log = logging.getLogger(__name__)

METRICS_SCHEMA = "acorn.metrics/1"
METRIC_FIELDS = ["schema", "method", "p", "budget_fraction", "budget", "n_episodes",
                 "influence_ratio_mean", "influence_ratio_std", "survival_steps_mean",
                 "survival_steps_std", "reach_rate"]
TIMING_FIELDS = ["method", "p", "n_selections", "runtime_per_selection"]
INSIGHT_FIELDS = ["method", "p", "seed", "episode", "index", "node", "out_degree"]


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in fields})


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 12))
    return v


def _seed(*parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(x) for x in parts])


def _rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(_seed(*parts))


# ---------------------------------------------------------------------------
# detector


def build_detector(spec: DetectorSpec) -> tuple[RandomForest, dict]:
    if spec.path:
        if not os.path.exists(spec.path):
            raise FileNotFoundError(f"detector file {spec.path} not found")
        return RandomForest.load(spec.path), {"source": spec.path}
    ds = generate_labeled_corpus([ActivityProfile.from_dict(d) for d in spec.humans],
                                 [ActivityProfile.from_dict(d) for d in spec.bots],
                                 spec.n_per_class, spec.max_length, spec.rng_seed, spec.min_length)
    train_ds, test_ds = ds.split(spec.test_fraction, np.random.default_rng(spec.rng_seed))
    forest = train_forest(train_ds.X, train_ds.y, spec.forest)
    f1 = f1_score(test_ds.y, (forest.predict_proba(test_ds.X) >= 0.5).astype(int))
    return forest, {"source": "synthetic", "n_train": len(train_ds), "n_test": len(test_ds), "test_f1": f1}


# ---------------------------------------------------------------------------
# graphs


@dataclass
class GraphCase:
    name: str
    graph: SocialGraph
    embeddings: np.ndarray


def embed(cfg: ExperimentConfig, g: SocialGraph, seed: int) -> np.ndarray:
    return node2vec_embed(g, cfg.embed_dim, replace(cfg.walk, rng_seed=seed))


def synthetic_graphs(profile, n: int, seed: int) -> list[SocialGraph]:
    rng = np.random.default_rng(seed)
    return [generate_synthetic(profile.sample(rng)) for _ in range(n)]


def build_suite(cfg: ExperimentConfig) -> list[GraphCase]:
    spec = cfg.suite
    if spec.edge_list_dir:
        paths = sorted(Path(spec.edge_list_dir).glob("*"))
        paths = [p for p in paths if p.suffix in (".txt", ".edges", ".npz")]
        if not paths:
            raise FileNotFoundError(f"no graphs found in {spec.edge_list_dir}")
        graphs = [(p.stem, load_graph_npz(p) if p.suffix == ".npz" else load_edge_list(p)) for p in paths]
    else:
        graphs = [(f"synthetic_{i:03d}", g)
                  for i, g in enumerate(synthetic_graphs(spec.profile, spec.n_graphs, spec.rng_seed))]
    return [GraphCase(name, g, embed(cfg, g, spec.rng_seed + i)) for i, (name, g) in enumerate(graphs)]


class TrainingGraphs:
    """Synthetic graph (and its embedding) for each training episode.

    With ``train_graph_pool == 0`` every episode gets a freshly generated
    graph. Otherwise a pool of that many graphs is drawn once from
    ``pool_seed`` and episodes sample from it, which avoids re-embedding a
    new graph every episode.
    """

    def __init__(self, cfg: ExperimentConfig, pool_seed: int = 0):
        self.cfg = cfg
        self.pool: list[tuple[SocialGraph, np.ndarray]] = []
        if cfg.train_graph_pool > 0:
            prng = _rng(pool_seed, 3)
            for _ in range(cfg.train_graph_pool):
                g = generate_synthetic(cfg.train_profile.sample(prng))
                self.pool.append((g, embed(cfg, g, int(prng.integers(2**31 - 1)))))

    def __call__(self, rng: np.random.Generator):
        if self.pool:
            return self.pool[int(rng.integers(len(self.pool)))]
        g = generate_synthetic(self.cfg.train_profile.sample(rng))
        return g, embed(self.cfg, g, int(rng.integers(2**31 - 1)))


# ---------------------------------------------------------------------------
# training


def bundle_paths(out: Path, seed: int) -> dict[str, Path]:
    return {"ACORN": out / "bundles" / f"acorn_seed{seed}", "AgentI*": out / "bundles" / f"independent_seed{seed}"}


def train_agents(cfg: ExperimentConfig, detector, seed: int, out: Path, resume: bool = True) -> dict[str, PolicyBundle]:
    """Train the co-trained bundle and the independently trained AgentI for one seed."""
    paths = bundle_paths(out, seed)
    (out / "bundles").mkdir(parents=True, exist_ok=True)
    result = {}
    graphs = TrainingGraphs(cfg, pool_seed=seed)
    for tag, co in (("ACORN", True), ("AgentI*", False)):
        prefix = paths[tag]
        if resume and Path(f"{prefix}.json").exists():
            result[tag] = PolicyBundle.load(prefix)
            continue
        tcfg = replace(cfg.train, co_train=co, rng_seed=seed)
        final, best, curve = train(tcfg, cfg.env, detector, graphs, cfg.embed_dim)
        write_csv(out / "bundles" / f"{prefix.name}_curve.csv", CURVE_FIELDS, curve)
        final.save(f"{prefix}_final", {"seed": seed, "co_train": co})
        best.save(prefix, {"seed": seed, "co_train": co})
        result[tag] = best
    return result


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EpisodeResult:
    method: str
    p: float
    seed: int
    episode: int
    graph: str
    record: EpisodeRecord
    ratios: list[float]                 # influence ratio at each budget checkpoint
    budgets: list[int]
    selection_time: float = 0.0
    n_selections: int = 0

    def to_dict(self) -> dict:
        rec = self.record
        return {"method": self.method, "p": self.p, "seed": self.seed, "episode": self.episode,
                "graph": self.graph, "n_nodes": rec.n_nodes, "survival_steps": rec.survival_steps,
                "terminal_reason": rec.terminal_reason.value, "T_star": rec.T_star,
                "n_followers": len(rec.followers), "budgets": self.budgets, "ratios": self.ratios,
                "followers": rec.followers, "selected_degrees": rec.selected_degrees,
                "kind_counts": rec.kind_counts}


def budgets_for(n: int, fractions) -> list[int]:
    return [max(1, math.ceil(f * n - 1e-9)) for f in fractions]


def influence_curve(worlds: LiveEdgeWorlds, followers: list[int], budgets: list[int]) -> list[float]:
    """Influence ratio of each follower prefix (capped at the followers actually acquired)."""
    n = worlds.g.n_nodes
    reach = np.zeros((worlds.n_worlds, n), dtype=bool)
    out, done = [], 0
    for b in budgets:
        b = min(b, len(followers))
        if b == n:
            out.append(1.0)
            continue
        new = followers[done:b]
        if new:
            reach |= worlds.reach(new, blocked=reach)
            done = b
        out.append(float(reach.sum(axis=1).mean()) / n)
    return out


class _TimedSelector:
    def __init__(self, inner):
        self.inner = inner
        self.elapsed = 0.0
        self.calls = 0

    def reset(self, env):
        self.inner.reset(env)

    def select(self, env, obs2):
        t0 = time.perf_counter()
        u = self.inner.select(env, obs2)
        self.elapsed += time.perf_counter() - t0
        self.calls += 1
        return u


def make_method(method: str, bundles: dict[str, PolicyBundle], cfg: ExperimentConfig, seed_seq):
    """Activity agent and selector for one of the evaluated methods."""
    a_seed, s_seed = (int(s.generate_state(1)[0]) for s in seed_seq.spawn(2))
    agent_bundle = bundles["AgentI*"] if method.startswith("AgentI*") else bundles["ACORN"]
    agent = LearnedActivityAgent(agent_bundle, a_seed, greedy=cfg.greedy_eval)
    if method == "ACORN":
        sel = LearnedSelector(bundles["ACORN"], s_seed, greedy=cfg.greedy_eval)
    elif method.endswith("+C"):
        sel = CelfEpisodeSelector(n_sims=cfg.celf_sims, seed=s_seed)
    elif method.endswith("+H"):
        sel = DegreeSelector()
    else:
        raise ConfigError(f"unknown method {method!r}")
    return agent, sel


def run_eval_episode(method: str, case: GraphCase, p: float, seed: int, episode: int, p_index: int,
                     bundles, detector, cfg: ExperimentConfig, worlds: LiveEdgeWorlds) -> EpisodeResult:
    g = case.graph
    # the bot keeps running after acquiring everyone, so survival is measured
    # up to detection or the long evaluation horizon
    env_cfg = replace(cfg.env, p=p, T=cfg.eval_horizon_factor * g.n_nodes, stop_when_all_acquired=False)
    env = SocialBotEnv(g, detector, env_cfg, case.embeddings)
    ss = _seed(seed, episode, p_index)
    env_seed = int(ss.generate_state(1)[0])
    agent, sel = make_method(method, bundles, cfg, _seed(seed, episode, p_index, 1))
    timed = _TimedSelector(sel)
    rec = run_baseline_episode(env, agent, timed, seed=env_seed)
    budgets = budgets_for(g.n_nodes, cfg.budget_fractions)
    ratios = influence_curve(worlds, rec.followers, budgets)
    return EpisodeResult(method, p, seed, episode, case.name, rec, ratios, budgets, timed.elapsed, timed.calls)


def eval_worlds(cfg: ExperimentConfig, case_index: int, case: GraphCase, p_index: int, p: float) -> LiveEdgeWorlds:
    return LiveEdgeWorlds(case.graph, p, cfg.eval_sims, _rng(cfg.suite.rng_seed, case_index, p_index, 7))


def evaluate(cfg: ExperimentConfig, suite: list[GraphCase], bundles_by_seed: dict[int, dict], detector,
             methods=None) -> list[EpisodeResult]:
    methods = list(methods or cfg.methods)
    results: list[EpisodeResult] = []
    if cfg.episodes_per_cell == 0:
        log.warning("episodes_per_cell is 0: nothing to evaluate")
        return results
    for pi, p in enumerate(cfg.p_values):
        worlds = {}
        for seed in cfg.seeds:
            for ep in range(cfg.episodes_per_cell):
                ci = ep % len(suite)
                if ci not in worlds:
                    worlds[ci] = eval_worlds(cfg, ci, suite[ci], pi, p)
                for m in methods:
                    results.append(run_eval_episode(m, suite[ci], p, seed, ep, pi, bundles_by_seed[seed],
                                                    detector, cfg, worlds[ci]))
            log.info("p=%.2f seed=%d done", p, seed)
    return results


def metrics_table(results: list[EpisodeResult], fractions) -> list[dict]:
    rows = []
    keys = sorted({(r.method, r.p) for r in results}, key=lambda k: (k[1], k[0]))
    for method, p in keys:
        cell = [r for r in results if r.method == method and r.p == p]
        steps = np.array([r.record.survival_steps for r in cell], dtype=float)
        for j, f in enumerate(fractions):
            ratios = np.array([r.ratios[j] for r in cell])
            reached = np.mean([len(r.record.followers) >= r.budgets[j] for r in cell])
            rows.append({"schema": METRICS_SCHEMA, "method": method, "p": p, "budget_fraction": f,
                         "budget": int(np.median([r.budgets[j] for r in cell])), "n_episodes": len(cell),
                         "influence_ratio_mean": float(ratios.mean()), "influence_ratio_std": float(ratios.std()),
                         "survival_steps_mean": float(steps.mean()), "survival_steps_std": float(steps.std()),
                         "reach_rate": float(reached)})
    return rows


def timing_table(results: list[EpisodeResult]) -> list[dict]:
    rows = []
    for method, p in sorted({(r.method, r.p) for r in results}, key=lambda k: (k[1], k[0])):
        cell = [r for r in results if r.method == method and r.p == p]
        n = sum(r.n_selections for r in cell)
        t = sum(r.selection_time for r in cell)
        rows.append({"method": method, "p": p, "n_selections": n, "runtime_per_selection": t / n if n else 0.0})
    return rows


def write_eval_outputs(out: Path, cfg: ExperimentConfig, results: list[EpisodeResult]) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    rows = metrics_table(results, cfg.budget_fractions)
    write_csv(out / "metrics.csv", METRIC_FIELDS, rows)
    write_json(out / "metrics.json", {"schema": METRICS_SCHEMA, "rows": rows})
    with open(out / "episodes.jsonl", "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    write_csv(out / "timing.csv", TIMING_FIELDS, timing_table(results))
    return {"metrics_csv": str(out / "metrics.csv"), "metrics_json": str(out / "metrics.json"),
            "episodes": str(out / "episodes.jsonl"), "timing": str(out / "timing.csv")}


def compare_methods(episodes: list[dict], method: str, baseline: str, alpha: float = 0.05) -> list[dict]:
    """Per-``p`` survival rank test and full-budget influence comparison.

    ``episodes`` are episode dicts (as in ``episodes.jsonl``). Survival uses a
    one-sided Mann-Whitney U test of ``method > baseline``; influence compares
    the mean ratio at the largest budget checkpoint.
    """
    rows = []
    for p in sorted({e["p"] for e in episodes}):
        a = [e for e in episodes if e["p"] == p and e["method"] == method]
        b = [e for e in episodes if e["p"] == p and e["method"] == baseline]
        if not a or not b:
            continue
        sa = np.array([e["survival_steps"] for e in a], dtype=float)
        sb = np.array([e["survival_steps"] for e in b], dtype=float)
        ra = float(np.mean([e["ratios"][-1] for e in a]))
        rb = float(np.mean([e["ratios"][-1] for e in b]))
        test = mannwhitneyu(sa, sb, alternative="greater")
        pval = float(test.pvalue)
        rows.append({"p": p, "method": method, "baseline": baseline, "n_method": len(a),
                     "n_baseline": len(b), "survival_mean": float(sa.mean()),
                     "baseline_survival_mean": float(sb.mean()), "survival_u": float(test.statistic),
                     "survival_pvalue": pval, "ratio_mean": ra, "baseline_ratio_mean": rb,
                     "survival_better": bool(sa.mean() > sb.mean() and pval < alpha),
                     "ratio_not_worse": bool(ra >= rb)})
    return rows


def read_episodes(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# insights


def insights(episodes: list[dict]) -> tuple[list[dict], list[dict]]:
    """Selected-node degree by selection order, plus a per-method summary."""
    rows = []
    for e in episodes:
        for i, (u, d) in enumerate(zip(e["followers"], e["selected_degrees"])):
            rows.append({"method": e["method"], "p": e["p"], "seed": e["seed"], "episode": e["episode"],
                         "index": i, "node": u, "out_degree": d})
    summary = []
    for method in sorted({e["method"] for e in episodes}):
        firsts, alls = [], []
        for e in episodes:
            if e["method"] != method:
                continue
            degs = e["selected_degrees"]
            k = max(1, math.ceil(0.1 * e["n_nodes"]))
            firsts.extend(degs[:k])
            alls.extend(degs)
        hist = np.bincount(np.asarray(alls, dtype=np.int64)).tolist() if alls else []
        summary.append({"method": method, "n_selections": len(alls),
                        "median_degree_first_10pct": float(np.median(firsts)) if firsts else float("nan"),
                        "median_degree_all": float(np.median(alls)) if alls else float("nan"),
                        "degree_histogram": hist})
    return rows, summary


# ---------------------------------------------------------------------------
# runtime benchmark


def bench_runtime(cfg: ExperimentConfig, bundle: PolicyBundle | None = None) -> list[dict]:
    """Per-selection wall time of CELF and AgentII as the follower set grows."""
    spec = cfg.bench
    rng = np.random.default_rng(spec.rng_seed)
    profile = replace(cfg.train_profile, n_nodes=(spec.n_nodes, spec.n_nodes))
    g = generate_synthetic(profile.sample(rng))
    emb = embed(cfg, g, spec.rng_seed)
    bundle = bundle or PolicyBundle(cfg.embed_dim, cfg.train, seed=spec.rng_seed)
    budgets = sorted(set(budgets_for(g.n_nodes, spec.budget_fractions)))
    if not budgets:
        return []
    n = g.n_nodes
    rows = []
    for p in spec.p_values:
        # CELF: time every selection of a full lazy-greedy run
        times = []
        for _ in range(spec.repeats):
            t0 = time.perf_counter()
            sel = CelfSelector(g, p, MonteCarloGain(g, p, spec.celf_sims, np.random.default_rng(spec.rng_seed)))
            t_init = time.perf_counter() - t0
            t_run = []
            for _b in range(budgets[-1]):
                t1 = time.perf_counter()
                sel.next_node()
                t_run.append(time.perf_counter() - t1)
            t_run[0] += t_init  # the initial gain pass belongs to the first pick
            times.append(t_run)
        times = np.median(np.array(times), axis=0)
        order = list(rng.permutation(n))
        obs = []
        for b in budgets:
            rows.append({"method": "CELF", "p": p, "budget": b,
                         "per_selection_s": float(times[:b].mean()), "evaluations": int(sel.evaluations)})
            # AgentII: one forward pass on the state with b-1 followers
            in_s = np.zeros(n, dtype=bool)
            in_s[order[:b - 1]] = True
            member = np.where(in_s, 0.0, (1.0 + in_s.sum()) / (1.0 + g.out_degree))
            obs.append(ObservationII(emb, np.full(4, 0.25), member, ~in_s))
        # sub-millisecond calls: interleave budgets and keep the fastest rep
        arng = np.random.default_rng(0)
        best = np.full(len(budgets), np.inf)
        for _ in range(max(100, 5 * spec.repeats)):
            for i, obs2 in enumerate(obs):
                t0 = time.perf_counter()
                bundle.act2(obs2, arng)
                best[i] = min(best[i], time.perf_counter() - t0)
        for b, t in zip(budgets, best):
            rows.append({"method": "AgentII", "p": p, "budget": b, "per_selection_s": float(t), "evaluations": 0})
    return rows


# ---------------------------------------------------------------------------
# multi-bot


def multibot(cfg: ExperimentConfig, cases: list[GraphCase], bundles, detector, seed: int) -> dict:
    """One independent bot per sub-graph; influence aggregated over the union."""
    if not cases:
        raise ValueError("multibot needs at least one sub-graph")
    spec = cfg.multibot
    per_graph = []
    for i, case in enumerate(cases):
        worlds = eval_worlds(cfg, i, case, 0, spec.p)
        r = run_eval_episode(spec.method, case, spec.p, seed, i, 0, bundles, detector, cfg, worlds)
        n = case.graph.n_nodes
        ratio = influence_curve(worlds, r.record.followers, [n])[0]
        per_graph.append({"graph": case.name, "n_nodes": n, "spread": ratio * n,
                          "influence_ratio": ratio, "survival_steps": r.record.survival_steps,
                          "terminal_reason": r.record.terminal_reason.value})
    total = sum(x["n_nodes"] for x in per_graph)
    agg = sum(x["spread"] for x in per_graph) / total
    return {"method": spec.method, "p": spec.p, "n_graphs": len(cases), "total_nodes": total,
            "aggregate_influence_ratio": agg, "per_graph": per_graph}


# ---------------------------------------------------------------------------
# graph suite I/O


def save_suite(cases: list[GraphCase], out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in cases:
        save_graph_npz(c.graph, out / f"{c.name}.npz")
        save_edge_list(c.graph, out / f"{c.name}.edges")
        save_embeddings_bin(c.embeddings, out / f"{c.name}.emb.bin")
        paths.append(str(out / f"{c.name}.npz"))
    return paths
