"""Black-box bot detector: activity features and a from-scratch random forest.

The environment only ever calls :func:`predict` (or a detector's
``__call__``); nothing outside this module reads tree internals.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1

FEATURE_NAMES = (
    "n_tweets", "n_replies", "n_retweets",
    "avg_tweets", "avg_replies", "avg_retweets",
    "retweet_ratio", "replies_ratio", "retweet_replies_ratio", "mentions_ratio",
)
N_FEATURES = len(FEATURE_NAMES)


class ActivityKind(IntEnum):
    TWEET = 0
    RETWEET = 1
    REPLY = 2
    MENTION = 3


@dataclass(frozen=True)
class Activity:
    kind: ActivityKind
    target: int | None
    timestep: int

    def __post_init__(self):
        if (self.kind == ActivityKind.TWEET) != (self.target is None):
            raise ValueError("TWEET carries no target; interactions need one")


class ActivitySequence:
    """Ordered activity log with running per-kind counts."""

    def __init__(self, items: Iterable[Activity] = ()):
        self.items: list[Activity] = []
        self.counts = np.zeros(4, dtype=np.int64)
        self.mention_targets: set[int] = set()
        for a in items:
            self.append(a)

    def append(self, a: Activity) -> None:
        self.items.append(a)
        self.counts[a.kind] += 1
        if a.kind == ActivityKind.MENTION:
            self.mention_targets.add(a.target)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def n_unique_mentions(self) -> int:
        return len(self.mention_targets)


def features_from_counts(counts: Sequence[int], n_unique_mentions: int, elapsed: int) -> np.ndarray:
    """Table of detector features; ``counts`` ordered as :class:`ActivityKind`."""
    if elapsed < 1:
        raise ValueError("elapsed_timesteps must be >= 1")
    tw, rt, rp = float(counts[ActivityKind.TWEET]), float(counts[ActivityKind.RETWEET]), float(counts[ActivityKind.REPLY])
    return np.array([
        tw, rp, rt,
        tw / elapsed, rp / elapsed, rt / elapsed,
        rt / max(1.0, tw), rp / max(1.0, tw), rt / max(1.0, rp),
        n_unique_mentions / max(1.0, tw),
    ])


def extract_features(seq: ActivitySequence, elapsed_timesteps: int) -> np.ndarray:
    return features_from_counts(seq.counts, seq.n_unique_mentions, elapsed_timesteps)


# ---------------------------------------------------------------------------
# forest


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    min_leaf: int = 2
    features_per_split: int = math.ceil(math.sqrt(N_FEATURES))
    bootstrap: bool = True
    rng_seed: int = 0


@dataclass
class DecisionTree:
    """Array-encoded binary tree; ``feature[i] == -1`` marks a leaf.

    Samples with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    proba: np.ndarray  # (n_nodes, 2) class probabilities

    def leaf_proba(self, x: np.ndarray) -> np.ndarray:
        i = 0
        feat, thr, lft, rgt = self.feature, self.threshold, self.left, self.right
        while feat[i] >= 0:
            i = lft[i] if x[feat[i]] <= thr[i] else rgt[i]
        return self.proba[i]

    def leaf_proba_batch(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.proba[node]

    @classmethod
    def stump(cls, feature: int, threshold: float, low_p1: float, high_p1: float) -> "DecisionTree":
        return cls(np.array([feature, -1, -1]), np.array([threshold, 0.0, 0.0]),
                   np.array([1, -1, -1]), np.array([2, -1, -1]),
                   np.array([[0.5, 0.5], [1 - low_p1, low_p1], [1 - high_p1, high_p1]]))

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "proba": self.proba.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["proba"], dtype=float).reshape(-1, 2))


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    params: ForestParams = field(default_factory=ForestParams)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.leaf_proba_batch(X)[:, 1]
        return acc / len(self.trees)

    def __call__(self, fv: np.ndarray) -> int:
        return predict(self, fv).label

    def to_json(self) -> str:
        return json.dumps({"format": "acorn-random-forest", "version": FORMAT_VERSION,
                           "params": asdict(self.params),
                           "trees": [t.to_dict() for t in self.trees]})

    @classmethod
    def from_json(cls, text: str) -> "RandomForest":
        d = json.loads(text)
        if d.get("format") != "acorn-random-forest":
            raise ValueError("not a random-forest document")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest version {d.get('version')}")
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], ForestParams(**d["params"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "RandomForest":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class Prediction:
    label: int
    probability: float


def predict(model: RandomForest, fv: np.ndarray) -> Prediction:
    """Mean leaf probability of class 1; a tie at 0.5 is labelled bot."""
    x = np.asarray(fv, dtype=float)
    prob = sum(float(t.leaf_proba(x)[1]) for t in model.trees) / len(model.trees)
    return Prediction(int(prob >= 0.5), prob)


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    n = y.size
    total_pos = y.sum()
    best = (np.inf, -1, 0.0)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        left_n = np.arange(1, n)
        left_pos = np.cumsum(ys)[:-1]
        right_n = n - left_n
        right_pos = total_pos - left_pos
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        pl, pr = left_pos / left_n, right_pos / right_n
        gini = (left_n * 2 * pl * (1 - pl) + right_n * 2 * pr * (1 - pr)) / n
        gini = np.where(valid, gini, np.inf)
        i = int(np.argmin(gini))
        if gini[i] < best[0] - 1e-15:
            best = (float(gini[i]), int(f), float(0.5 * (xs[i] + xs[i + 1])))
    return best


def _grow(X, y, params: ForestParams, rng: np.random.Generator) -> DecisionTree:
    feat, thr, lft, rgt, proba = [], [], [], [], []

    def node(idx: np.ndarray, depth: int) -> int:
        me = len(feat)
        p1 = float(y[idx].mean())
        feat.append(-1); thr.append(0.0); lft.append(-1); rgt.append(-1); proba.append((1 - p1, p1))
        if depth >= params.max_depth or p1 in (0.0, 1.0) or idx.size < 2 * params.min_leaf:
            return me
        k = min(params.features_per_split, X.shape[1])
        cand = rng.choice(X.shape[1], size=k, replace=False)
        gini, f, t = _best_split(X[idx], y[idx], cand, params.min_leaf)
        parent = 2 * p1 * (1 - p1)
        if f < 0 or gini >= parent - 1e-12:
            return me
        go_left = X[idx, f] <= t
        feat[me], thr[me] = f, t
        lft[me] = node(idx[go_left], depth + 1)
        rgt[me] = node(idx[~go_left], depth + 1)
        return me

    node(np.arange(y.size), 0)
    return DecisionTree(np.array(feat, dtype=np.int64), np.array(thr), np.array(lft, dtype=np.int64),
                        np.array(rgt, dtype=np.int64), np.array(proba, dtype=float))


def train_forest(X: np.ndarray, y: np.ndarray, params: ForestParams | None = None) -> RandomForest:
    """Bootstrap-aggregated Gini trees with a random feature subset per split."""
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2 or X.shape[0] != y.size:
        raise ValueError("need at least two labelled examples")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    rng = np.random.default_rng(params.rng_seed)
    trees = []
    for _ in range(params.n_trees):
        idx = rng.integers(0, y.size, y.size) if params.bootstrap else np.arange(y.size)
        trees.append(_grow(X[idx], y[idx], params, rng))
    return RandomForest(trees, params)


# ---------------------------------------------------------------------------
# labelled data


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return int(self.y.size)

    def split(self, test_fraction: float, rng: np.random.Generator) -> tuple["LabeledDataset", "LabeledDataset"]:
        idx = rng.permutation(len(self))
        cut = int(round(len(self) * (1 - test_fraction)))
        a, b = idx[:cut], idx[cut:]
        return LabeledDataset(self.X[a], self.y[a]), LabeledDataset(self.X[b], self.y[b])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(FEATURE_NAMES) + ["label"])
            for row, lab in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in row] + [int(lab)])


@dataclass
class ActivityProfile:
    """Per-timestep activity mix of one account class.

    ``rates`` are relative weights for (tweet, retweet, reply, mention).
    Each synthetic account draws its own mix from a Dirichlet centred on the
    normalized rates with the given ``concentration`` (``None``: no jitter).
    ``mention_diversity`` is the chance that a mention targets a new account.
    """

    rates: tuple[float, float, float, float]
    mention_diversity: float = 0.5
    concentration: float | None = 30.0

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.shape != (4,) or (r < 0).any():
            raise ValueError("rates must be four non-negative weights")
        if r.sum() <= 0:
            raise ValueError("profile has zero total activity rate")
        if not 0.0 <= self.mention_diversity <= 1.0:
            raise ValueError("mention_diversity must lie in [0, 1]")

    @property
    def probs(self) -> np.ndarray:
        r = np.asarray(self.rates, dtype=float)
        return r / r.sum()

    @classmethod
    def from_dict(cls, d: dict) -> "ActivityProfile":
        return cls(tuple(d["rates"]), d.get("mention_diversity", 0.5), d.get("concentration", 30.0))


HUMAN_PROFILE = ActivityProfile((0.40, 0.40, 0.12, 0.08), mention_diversity=0.5, concentration=30.0)
# bots surround the human mix: amplifiers, reply/mention spammers, broadcasters
BOT_PROFILES = (
    ActivityProfile((0.15, 0.70, 0.08, 0.07), mention_diversity=0.5, concentration=30.0),
    ActivityProfile((0.25, 0.20, 0.25, 0.30), mention_diversity=0.9, concentration=30.0),
    ActivityProfile((0.80, 0.10, 0.05, 0.05), mention_diversity=0.5, concentration=30.0),
)


def sample_account(profile: ActivityProfile, length: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Per-kind counts and unique-mention count of one scripted account."""
    probs = profile.probs
    if profile.concentration is not None:
        alpha = np.maximum(probs * profile.concentration, 1e-6)
        probs = rng.dirichlet(alpha)
    kinds = rng.choice(4, size=length, p=probs)
    counts = np.bincount(kinds, minlength=4)
    n_mentions = int(counts[ActivityKind.MENTION])
    unique = 0
    if n_mentions:
        unique = 1 + int(rng.binomial(n_mentions - 1, profile.mention_diversity))
    return counts, unique


def _as_profiles(p) -> list[ActivityProfile]:
    return [p] if isinstance(p, ActivityProfile) else list(p)


def generate_labeled_corpus(human, bot, n_per_class: int, episode_length: int, rng_seed: int = 0,
                            min_length: int = 1) -> LabeledDataset:
    """Scripted accounts of random length in ``[min_length, episode_length]``.

    ``human`` and ``bot`` are a profile or a list of profiles; each account
    draws its profile uniformly from its class's list. Features are taken at
    the end of each account's activity log with elapsed time equal to its
    length (one activity per timestep).
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if not 1 <= min_length <= episode_length:
        raise ValueError("need 1 <= min_length <= episode_length")
    classes = [(0, _as_profiles(human)), (1, _as_profiles(bot))]
    if any(not profs for _, profs in classes):
        raise ValueError("each class needs at least one profile")
    rng = np.random.default_rng(rng_seed)
    rows, labels = [], []
    for label, profs in classes:
        for _ in range(n_per_class):
            prof = profs[int(rng.integers(len(profs)))] if len(profs) > 1 else profs[0]
            length = int(rng.integers(min_length, episode_length + 1))
            counts, unique = sample_account(prof, length, rng)
            rows.append(features_from_counts(counts, unique, length))
            labels.append(label)
    return LabeledDataset(np.array(rows), np.array(labels, dtype=np.int64))


class CSVSchemaError(ValueError):
    pass


def load_labeled_csv(source) -> LabeledDataset:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return load_labeled_csv(io.StringIO(fh.read()))
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CSVSchemaError("empty file: missing header row") from None
    missing = [c for c in list(FEATURE_NAMES) + ["label"] if c not in header]
    if missing:
        raise CSVSchemaError(f"missing column(s): {', '.join(missing)}")
    cols = [header.index(c) for c in FEATURE_NAMES]
    lab_col = header.index("label")
    rows, labels = [], []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        vals = []
        for name, c in zip(list(FEATURE_NAMES) + ["label"], cols + [lab_col]):
            try:
                v = float(row[c])
            except (ValueError, IndexError):
                raise CSVSchemaError(f"row {row_no}, column {name!r}: non-numeric value") from None
            if not math.isfinite(v) or v < 0:
                raise CSVSchemaError(f"row {row_no}, column {name!r}: value must be finite and >= 0")
            vals.append(v)
        if vals[-1] not in (0.0, 1.0):
            raise CSVSchemaError(f"row {row_no}, column 'label': expected 0 or 1")
        rows.append(vals[:-1])
        labels.append(int(vals[-1]))
    X = np.array(rows, dtype=float).reshape(-1, N_FEATURES)
    return LabeledDataset(X, np.array(labels, dtype=np.int64))


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    tp = float(((y_true == 1) & (y_pred == 1)).sum())
    fp = float(((y_true == 0) & (y_pred == 1)).sum())
    fn = float(((y_true == 1) & (y_pred == 0)).sum())
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
