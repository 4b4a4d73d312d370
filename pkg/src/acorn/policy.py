"""Hierarchical actor-critic agents trained with PPO.

AgentI (``pi1``) maps the 5-real activity summary to one of four activity
kinds; AgentII (``pi2``) scores every node of the current graph and samples
a follower among the unmasked ones. Each agent has its own critic.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .env import (EnvConfig, FollowerPhaseRequest, ObservationII, SocialBotEnv, StepOutcome,
                  episode_objective)
from .nn import (MLP, Adam, NodeNet, clip_grad_norm, load_checkpoint, log_softmax, masked_softmax,
                 sample_categorical, save_checkpoint)

log = logging.getLogger(__name__)

AGENT_I, AGENT_II = 0, 1
FOLLOWER_SCALE = 5.0
MEMBERSHIP_CLIP = 5.0


@dataclass
class TrainConfig:
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    gamma_step: float = 0.99
    gamma_delayed: float = 0.99
    epochs: int = 4
    minibatch_size: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4
    max_grad_norm: float = 0.5
    episodes_per_update: int = 16
    total_updates: int = 100
    co_train: bool = True
    reward_scale: str = "nodes"       # divide rewards by |V| ("nodes") or leave raw ("none")
    hidden: int = 64
    channels: tuple[int, int] = (32, 16)
    kernel: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        for g in (self.gamma_step, self.gamma_delayed):
            if not 0.0 < g <= 1.0:
                raise ValueError("discounts must lie in (0, 1]")
        if self.reward_scale not in ("nodes", "none"):
            raise ValueError("reward_scale must be 'nodes' or 'none'")
        self.channels = tuple(self.channels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


# ---------------------------------------------------------------------------
# observation preprocessing


def features1(obs1: np.ndarray) -> np.ndarray:
    """Activity frequencies plus a log-compressed follower count."""
    out = np.array(obs1, dtype=float)
    out[4] = math.log1p(out[4]) / FOLLOWER_SCALE
    return out


def features2(obs2: ObservationII) -> tuple[np.ndarray, np.ndarray]:
    """Per-node ``[embedding, log membership]`` rows and the activity snapshot.

    ``log membership`` is >= 0 exactly when a node can be acquired with a
    single interaction; acquired nodes (membership 0) get 0 and are masked.
    """
    m = obs2.membership
    logm = np.zeros_like(m)
    pos = m > 0
    logm[pos] = np.clip(np.log(m[pos]), -MEMBERSHIP_CLIP, MEMBERSHIP_CLIP)
    nodes = np.concatenate([obs2.embeddings, logm[:, None]], axis=1)
    return nodes, np.asarray(obs2.snapshot, dtype=float)


# ---------------------------------------------------------------------------
# bundle


class PolicyBundle:
    def __init__(self, embed_dim: int, cfg: TrainConfig | None = None, seed: int | None = None):
        self.cfg = cfg or TrainConfig()
        self.embed_dim = embed_dim
        rng = np.random.default_rng(self.cfg.rng_seed if seed is None else seed)
        h = self.cfg.hidden
        self.pi1 = MLP([5, h, h, 4], rng)
        self.critic1 = MLP([5, h, h, 1], rng)
        kw = dict(channels=self.cfg.channels, trunk=h, kernel=self.cfg.kernel)
        self.pi2 = NodeNet(embed_dim + 1, 4, rng, head="policy", **kw)
        self.critic2 = NodeNet(embed_dim + 1, 4, rng, head="value", **kw)

    def networks(self) -> dict:
        return {"pi1": self.pi1, "critic1": self.critic1, "pi2": self.pi2, "critic2": self.critic2}

    # -- acting ----------------------------------------------------------

    def dist1(self, obs1: np.ndarray) -> np.ndarray:
        return masked_softmax(self.pi1.forward(features1(obs1)[None], record=False))[0]

    def act1(self, obs1: np.ndarray, rng: np.random.Generator, greedy: bool = False):
        x = features1(obs1)
        logits = self.pi1.forward(x[None], record=False)[0]
        lp = log_softmax(logits)
        a = int(np.argmax(lp)) if greedy else sample_categorical(np.exp(lp), rng)
        v = float(self.critic1.forward(x[None], record=False)[0, 0])
        return a, float(lp[a]), v, x

    def dist2(self, obs2: ObservationII) -> np.ndarray:
        nodes, snap = features2(obs2)
        logits = self.pi2.forward(nodes[None], snap[None], record=False)[0]
        return masked_softmax(logits, obs2.mask)

    def act2(self, obs2: ObservationII, rng: np.random.Generator, greedy: bool = False):
        nodes, snap = features2(obs2)
        logits = self.pi2.forward(nodes[None], snap[None], record=False)[0]
        lp = log_softmax(logits, obs2.mask)
        probs = np.exp(lp)
        u = int(np.argmax(lp)) if greedy else sample_categorical(probs, rng)
        v = float(self.critic2.forward(nodes[None], snap[None], record=False)[0, 0])
        return u, float(lp[u]), v, (nodes, snap, obs2.mask.copy())

    # -- persistence -----------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for name, net in self.networks().items():
            for k, v in net.named_params():
                out[f"{name}/{k}"] = v.copy()
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, net in self.networks().items():
            net.load_state_dict({k.split("/", 1)[1]: v for k, v in state.items() if k.startswith(name + "/")})

    def save(self, prefix, extra_meta: dict | None = None) -> None:
        meta = {"embed_dim": self.embed_dim, "train_config": self.cfg.to_dict()}
        meta.update(extra_meta or {})
        save_checkpoint(prefix, self.state(), meta)

    @classmethod
    def load(cls, prefix) -> "PolicyBundle":
        tensors, meta = load_checkpoint(prefix)
        tc = meta["train_config"]
        tc["channels"] = tuple(tc["channels"])
        b = cls(meta["embed_dim"], TrainConfig(**tc))
        b.load_state(tensors)
        return b

    def clone(self) -> "PolicyBundle":
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# rollouts


@dataclass
class Transition:
    agent: int
    episode: int
    obs: object               # features1 vector, or (nodes, snap, mask)
    action: int
    logp: float
    value: float
    r_step: float = 0.0
    r_delayed: float = 0.0
    done: bool = False
    advantage: float = 0.0
    ret: float = 0.0


@dataclass
class RolloutBuffer:
    transitions: list[Transition] = field(default_factory=list)
    records: list = field(default_factory=list)      # EpisodeRecord per finished episode
    complete: set = field(default_factory=set)

    def agent(self, a: int) -> list[Transition]:
        return [t for t in self.transitions if t.agent == a]

    def __len__(self) -> int:
        return len(self.transitions)


def random_node(obs2: ObservationII, rng: np.random.Generator) -> int:
    valid = np.flatnonzero(obs2.mask)
    return int(valid[int(rng.random() * valid.size)])


def run_episode(bundle: PolicyBundle, env: SocialBotEnv, rng: np.random.Generator, episode: int,
                buffer: RolloutBuffer | None = None, co_train: bool = True,
                activity_policy: Callable | None = None, reward_scale: float = 1.0):
    """Play one episode, appending transitions for the trained agents.

    ``activity_policy`` (obs1 -> kind) replaces pi1 when given; then no AgentI
    transitions are recorded.
    """
    obs1, _ = env.reset(seed=int(rng.integers(2**31 - 1)))
    last = {AGENT_I: None, AGENT_II: None}
    while True:
        t1 = None
        if activity_policy is None:
            a, lp, v, x = bundle.act1(obs1, rng)
            t1 = Transition(AGENT_I, episode, x, a, lp, v)
        else:
            a = int(activity_policy(obs1))
        out = env.step_activity(a)
        t2 = None
        if isinstance(out, FollowerPhaseRequest):
            if co_train:
                u, lp2, v2, x2 = bundle.act2(out.obs2, rng)
                t2 = Transition(AGENT_II, episode, x2, u, lp2, v2)
            else:
                u = random_node(out.obs2, rng)
            out = env.step_follower(u)
        delayed = env.delayed_reward if out.terminated else 0.0
        r_step = (out.reward - delayed) * reward_scale
        r_del = delayed * reward_scale
        for t in (t1, t2):
            if t is not None:
                t.r_step, t.r_delayed, t.done = r_step, r_del, out.terminated
                last[t.agent] = t
                if buffer is not None:
                    buffer.transitions.append(t)
        if out.terminated:
            # the delayed reward also closes the other agent's trajectory
            for t in last.values():
                if t is not None:
                    t.done = True
                    t.r_delayed = r_del
            break
        obs1 = out.obs1
    rec = env.record()
    if buffer is not None:
        buffer.records.append(rec)
        buffer.complete.add(episode)
    return rec


class GraphSource:
    """Yields ``(graph, embeddings)`` pairs for training episodes."""

    def __call__(self, rng: np.random.Generator):
        raise NotImplementedError


def collect_rollouts(bundle: PolicyBundle, env_cfg: EnvConfig, detector, graph_source: Callable,
                     n_episodes: int, rng: np.random.Generator, co_train: bool = True,
                     reward_scale: str = "nodes", activity_policy: Callable | None = None) -> RolloutBuffer:
    buf = RolloutBuffer()
    for ep in range(n_episodes):
        g, emb = graph_source(rng)
        env = SocialBotEnv(g, detector, env_cfg, emb)
        scale = 1.0 / g.n_nodes if reward_scale == "nodes" else 1.0
        run_episode(bundle, env, rng, ep, buf, co_train=co_train,
                    activity_policy=activity_policy, reward_scale=scale)
    return buf


# ---------------------------------------------------------------------------
# advantages


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """GAE over one trajectory (the last step must be terminal)."""
    adv = np.zeros_like(rewards)
    running = 0.0
    for j in range(rewards.size - 1, -1, -1):
        nonterm = 0.0 if dones[j] else 1.0
        next_v = values[j + 1] if j + 1 < values.size else 0.0
        delta = rewards[j] + gamma * next_v * nonterm - values[j]
        running = delta + gamma * lam * nonterm * running
        adv[j] = running
    return adv


def compute_advantages(buffer: RolloutBuffer, gamma_step: float = 0.99, lam: float = 0.95,
                       gamma_delayed: float | None = None, normalize: bool = True) -> RolloutBuffer:
    """Per-agent, per-episode GAE; returns are advantages plus values.

    The delayed reward paid at the end of a trajectory of length ``J`` is
    spread back as ``gamma_delayed^(J-1-j)`` per step ``j`` via telescoping
    shaping terms, so with ``gamma_delayed == gamma_step`` it reduces to a
    plain terminal reward.
    """
    gamma_delayed = gamma_step if gamma_delayed is None else gamma_delayed
    for agent in (AGENT_I, AGENT_II):
        by_ep: dict[int, list[Transition]] = {}
        for t in buffer.agent(agent):
            by_ep.setdefault(t.episode, []).append(t)
        for ep, traj in by_ep.items():
            if ep not in buffer.complete or not traj[-1].done:
                raise ValueError(f"episode {ep} is incomplete")
            J = len(traj)
            R_d = traj[-1].r_delayed
            d = np.array([R_d * gamma_delayed ** (J - 1 - j) for j in range(J)] + [0.0])
            r = np.array([t.r_step for t in traj]) + d[:-1] - gamma_step * d[1:]
            v = np.array([t.value for t in traj])
            dones = np.array([t.done for t in traj])
            adv = gae(r, v, dones, gamma_step, lam)
            for t, a in zip(traj, adv):
                t.advantage = float(a)
                t.ret = float(a + t.value)
        if normalize:
            ts = buffer.agent(agent)
            if len(ts) > 1:
                a = np.array([t.advantage for t in ts])
                mu, sd = a.mean(), a.std()
                for t in ts:
                    t.advantage = float((t.advantage - mu) / (sd + 1e-8))
    return buffer


# ---------------------------------------------------------------------------
# PPO


def _pad_nodes(batch: list[Transition]):
    n_max = max(t.obs[0].shape[0] for t in batch)
    c = batch[0].obs[0].shape[1]
    X = np.zeros((len(batch), n_max, c))
    S = np.stack([t.obs[1] for t in batch])
    M = np.zeros((len(batch), n_max), dtype=bool)
    V = np.zeros((len(batch), n_max), dtype=bool)
    for i, t in enumerate(batch):
        n = t.obs[0].shape[0]
        X[i, :n] = t.obs[0]
        M[i, :n] = t.obs[2]
        V[i, :n] = True
    return X, S, M, V


def policy_loss_grad(logits: np.ndarray, mask: np.ndarray | None, actions: np.ndarray,
                     old_logp: np.ndarray, adv: np.ndarray, clip_eps: float, entropy_coef: float):
    """Clipped-surrogate loss with entropy bonus and its gradient wrt logits."""
    B = actions.size
    lp_all = log_softmax(logits, mask)
    probs = np.exp(lp_all)
    lp_safe = np.where(probs > 0, lp_all, 0.0)
    logp = lp_all[np.arange(B), actions]
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps)
    surr = np.minimum(ratio * adv, clipped * adv)
    entropy = -(probs * lp_safe).sum(axis=-1)
    loss = -surr.mean() - entropy_coef * entropy.mean()
    active = ~(((adv > 0) & (ratio > 1 + clip_eps)) | ((adv < 0) & (ratio < 1 - clip_eps)))
    d_logp = -(ratio * adv * active) / B
    onehot = np.zeros_like(probs)
    onehot[np.arange(B), actions] = 1.0
    d_logits = d_logp[:, None] * (onehot - probs)
    d_entropy = -probs * (lp_safe + entropy[:, None])
    d_logits -= entropy_coef / B * d_entropy
    stats = {"policy_loss": float(-surr.mean()), "entropy": float(entropy.mean()),
             "approx_kl": float((old_logp - logp).mean()), "clip_frac": float((~active).mean())}
    return loss, d_logits, stats


class AgentOptimizers:
    def __init__(self, bundle: PolicyBundle, lr: float):
        self.opt = {name: Adam(net.params(), lr=lr) for name, net in bundle.networks().items()}


def ppo_minibatch_step(policy, critic, opt_pi: Adam, opt_v: Adam, batch: list[Transition], cfg: TrainConfig,
               node_obs: bool) -> dict:
    actions = np.array([t.action for t in batch])
    old_logp = np.array([t.logp for t in batch])
    adv = np.array([t.advantage for t in batch])
    ret = np.array([t.ret for t in batch])
    if node_obs:
        X, S, M, V = _pad_nodes(batch)
        logits = policy.forward(X, S)
        mask = M
    else:
        X = np.stack([t.obs for t in batch])
        logits = policy.forward(X)
        mask = None
    loss, d_logits, stats = policy_loss_grad(logits, mask, actions, old_logp, adv,
                                             cfg.clip_eps, cfg.entropy_coef)
    values = (critic.forward(X, S, V) if node_obs else critic.forward(X))[:, 0]
    v_err = values - ret
    v_loss = float((v_err ** 2).mean())
    total = loss + cfg.value_coef * v_loss
    if not math.isfinite(total):
        raise FloatingPointError(f"non-finite PPO loss (policy={loss}, value={v_loss})")
    policy.zero_grad()
    policy.backward(d_logits)
    critic.zero_grad()
    critic.backward((2.0 * cfg.value_coef * v_err / len(batch))[:, None])
    g_pi, g_v = policy.grads(), critic.grads()
    stats["grad_norm_pi"] = clip_grad_norm(g_pi, cfg.max_grad_norm)
    clip_grad_norm(g_v, cfg.max_grad_norm)
    opt_pi.step(g_pi)
    opt_v.step(g_v)
    stats["value_loss"] = v_loss
    return stats


def ppo_update(bundle: PolicyBundle, buffer: RolloutBuffer, cfg: TrainConfig, opts: AgentOptimizers,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate PPO epochs over shuffled minibatches, per agent."""
    summary: dict[str, float] = {}
    specs = [(AGENT_I, "pi1", "critic1", False), (AGENT_II, "pi2", "critic2", True)]
    for agent, pname, vname, node_obs in specs:
        data = buffer.agent(agent)
        if not data:
            continue
        acc: dict[str, list[float]] = {}
        for _ in range(cfg.epochs):
            order = rng.permutation(len(data))
            for start in range(0, len(data), cfg.minibatch_size):
                batch = [data[i] for i in order[start:start + cfg.minibatch_size]]
                st = ppo_minibatch_step(getattr(bundle, pname), getattr(bundle, vname), opts.opt[pname],
                                opts.opt[vname], batch, cfg, node_obs)
                for k, v in st.items():
                    acc.setdefault(k, []).append(v)
        tag = "I" if agent == AGENT_I else "II"
        for k, v in acc.items():
            summary[f"{k}_{tag}"] = float(np.mean(v))
    return summary


# ---------------------------------------------------------------------------
# training loop


CURVE_FIELDS = ["update", "mean_R_star", "mean_T_star", "mean_influence_ratio", "mean_survival_steps",
                "mean_followers", "policy_loss_I", "value_loss_I", "entropy_I",
                "policy_loss_II", "value_loss_II", "entropy_II"]


def summarize_records(records) -> dict:
    return {
        "mean_R_star": float(np.mean([episode_objective(r) for r in records])),
        "mean_T_star": float(np.mean([r.T_star for r in records])),
        "mean_influence_ratio": float(np.mean([r.influence_ratio for r in records])),
        "mean_survival_steps": float(np.mean([r.survival_steps for r in records])),
        "mean_followers": float(np.mean([len(r.followers) for r in records])),
    }


def train(cfg: TrainConfig, env_cfg: EnvConfig, detector, graph_source: Callable, embed_dim: int,
          bundle: PolicyBundle | None = None, callback: Callable | None = None):
    """Alternate rollouts and PPO updates; returns ``(final, best, curve)``.

    ``best`` is a copy of the bundle at the update with the highest mean
    episode objective averaged over the trailing 10 updates.
    With ``co_train=False`` AgentII is replaced by a uniform random node
    picker and only AgentI and its critic learn.
    """
    bundle = bundle or PolicyBundle(embed_dim, cfg)
    rng = np.random.default_rng(cfg.rng_seed + 1)
    opts = AgentOptimizers(bundle, cfg.lr)
    curve: list[dict] = []
    best, best_score = bundle.clone(), -np.inf
    window: list[float] = []
    for update in range(cfg.total_updates):
        buf = collect_rollouts(bundle, env_cfg, detector, graph_source, cfg.episodes_per_update, rng,
                               co_train=cfg.co_train, reward_scale=cfg.reward_scale)
        compute_advantages(buf, cfg.gamma_step, cfg.gae_lambda, cfg.gamma_delayed)
        stats = ppo_update(bundle, buf, cfg, opts, rng)
        row = {"update": update, **summarize_records(buf.records)}
        for k in CURVE_FIELDS[6:]:
            row[k] = stats.get(k, float("nan"))
        curve.append(row)
        window = (window + [row["mean_R_star"]])[-10:]
        score = float(np.mean(window))
        if len(window) == 10 and score > best_score:
            best_score, best = score, bundle.clone()
        if callback is not None:
            callback(update, row, bundle)
        log.info("update %d: R*=%.1f T*=%.2f ratio=%.3f", update, row["mean_R_star"],
                 row["mean_T_star"], row["mean_influence_ratio"])
    if best_score == -np.inf:
        best = bundle.clone()
    return bundle, best, curve
