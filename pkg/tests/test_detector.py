import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acorn.detector import (BOT_PROFILES, HUMAN_PROFILE, Activity, ActivityKind, ActivityProfile,
                            ActivitySequence, CSVSchemaError, DecisionTree, ForestParams,
                            LabeledDataset, RandomForest, extract_features, f1_score,
                            generate_labeled_corpus, load_labeled_csv, predict, train_forest)

T, RT, RP, M = ActivityKind.TWEET, ActivityKind.RETWEET, ActivityKind.REPLY, ActivityKind.MENTION


def _seq(*kinds, target=1):
    return ActivitySequence(Activity(k, None if k == T else target, i) for i, k in enumerate(kinds))


def test_empty_sequence_features_are_zero():
    assert np.array_equal(extract_features(ActivitySequence(), 10), np.zeros(10))


def test_hand_computed_feature_vector():
    fv = extract_features(_seq(T, T, RT, RP), 4)
    assert fv.tolist() == [2, 1, 1, 0.5, 0.25, 0.25, 0.5, 0.5, 1.0, 0.0]


def test_repeated_mention_without_tweets():
    seq = ActivitySequence(Activity(M, 5, t) for t in range(3))
    assert seq.n_unique_mentions == 1
    assert extract_features(seq, 3)[9] == 1.0


def test_activity_target_invariant():
    with pytest.raises(ValueError):
        Activity(T, 3, 0)
    with pytest.raises(ValueError):
        Activity(RP, None, 0)


def test_elapsed_must_be_positive():
    with pytest.raises(ValueError):
        extract_features(ActivitySequence(), 0)


kinds = st.lists(st.tuples(st.sampled_from(list(ActivityKind)), st.integers(0, 6)), max_size=40)


@given(kinds, kinds, st.integers(1, 100))
def test_append_then_extract_equals_extract_of_longer(a, b, elapsed):
    acts = [Activity(k, None if k == T else t, i) for i, (k, t) in enumerate(a + b)]
    grown = ActivitySequence(acts[:len(a)])
    prev = grown.counts.copy()
    for x in acts[len(a):]:
        grown.append(x)
        assert (grown.counts >= prev).all()
        prev = grown.counts.copy()
    full = ActivitySequence(acts)
    assert np.array_equal(extract_features(grown, elapsed), extract_features(full, elapsed))
    assert grown.counts.tolist() == [sum(1 for x in acts if x.kind == k) for k in ActivityKind]
    fv = extract_features(full, elapsed)
    assert np.all(fv >= 0) and np.all(np.isfinite(fv))


def _toy(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 3))
    return X, (X[:, 0] > 0.5).astype(int)


def test_forest_learns_threshold_toy():
    X, y = _toy(200, 0)
    forest = train_forest(X, y, ForestParams(n_trees=25, rng_seed=1))
    Xt, yt = _toy(500, 1)
    acc = (np.array([predict(forest, x).label for x in Xt]) == yt).mean()
    assert acc >= 0.95


def test_forest_single_class_rejected():
    with pytest.raises(ValueError):
        train_forest(np.zeros((5, 10)), np.zeros(5))
    with pytest.raises(ValueError):
        train_forest(np.zeros((1, 10)), np.ones(1))


def test_conflicting_duplicates_train_and_return_majority():
    X = np.ones((3, 10))
    y = np.array([1, 1, 0])
    forest = train_forest(X, y, ForestParams(n_trees=1, bootstrap=False))
    pred = predict(forest, X[0])
    assert pred.probability == pytest.approx(2 / 3) and pred.label == 1


def test_forest_is_deterministic_given_seed():
    X, y = _toy(120, 3)
    a = train_forest(X, y, ForestParams(n_trees=10, rng_seed=4))
    b = train_forest(X, y, ForestParams(n_trees=10, rng_seed=4))
    assert a.to_json() == b.to_json()


def test_leaf_probabilities_sum_to_one():
    X, y = _toy(150, 5)
    for t in train_forest(X, y, ForestParams(n_trees=10)).trees:
        assert np.allclose(t.proba.sum(axis=1), 1.0)


def test_stump_prediction_and_tie_rule():
    forest = RandomForest([DecisionTree.stump(0, 10.0, 0.0, 1.0)])
    hi = np.zeros(10); hi[0] = 20
    assert predict(forest, hi).label == 1
    assert predict(forest, np.zeros(10)).label == 0
    tie = RandomForest([DecisionTree.stump(0, 10.0, 0.5, 0.5)])
    assert predict(tie, np.zeros(10)) == predict(tie, hi)
    assert predict(tie, np.zeros(10)).label == 1


def test_label_matches_probability_and_tree_order_irrelevant():
    X, y = _toy(150, 6)
    forest = train_forest(X, y, ForestParams(n_trees=15, rng_seed=2))
    rev = RandomForest(forest.trees[::-1], forest.params)
    rng = np.random.default_rng(0)
    probe = rng.random((1000, 3))
    batch = forest.predict_proba(probe)
    for x, pb in zip(probe, batch):
        p = predict(forest, x)
        assert p.label == int(p.probability >= 0.5)
        assert p.probability == pytest.approx(pb, abs=1e-12)
        assert predict(rev, x).probability == pytest.approx(p.probability, abs=1e-12)


def test_forest_json_roundtrip(tmp_path):
    X, y = _toy(80, 8)
    forest = train_forest(X, y, ForestParams(n_trees=5))
    forest.save(tmp_path / "f.json")
    back = RandomForest.load(tmp_path / "f.json")
    assert np.array_equal(back.predict_proba(X), forest.predict_proba(X))
    with pytest.raises(ValueError):
        RandomForest.from_json('{"format": "other"}')


def _heldout_f1(data, seed=0):
    train, test = data.split(0.2, np.random.default_rng(seed))
    forest = train_forest(train.X, train.y, ForestParams(n_trees=40, rng_seed=seed))
    return f1_score(test.y, (forest.predict_proba(test.X) >= 0.5).astype(int))


def test_retweet_heavy_bots_are_detected():
    human = ActivityProfile((0.5, 0.05, 0.3, 0.15))
    bot = ActivityProfile((0.5, 0.5, 0.3, 0.15))
    data = generate_labeled_corpus(human, bot, 400, 200, rng_seed=1, min_length=20)
    assert _heldout_f1(data) >= 0.85


def test_default_profiles_are_separable():
    data = generate_labeled_corpus(HUMAN_PROFILE, BOT_PROFILES, 400, 500, rng_seed=2, min_length=20)
    assert _heldout_f1(data) >= 0.85


def test_identical_profiles_are_indistinguishable():
    data = generate_labeled_corpus(HUMAN_PROFILE, HUMAN_PROFILE, 400, 200, rng_seed=3, min_length=20)
    assert abs(_heldout_f1(data) - 0.5) <= 0.1


def test_corpus_errors_and_determinism():
    with pytest.raises(ValueError):
        generate_labeled_corpus(HUMAN_PROFILE, BOT_PROFILES, 0, 10)
    with pytest.raises(ValueError):
        ActivityProfile((0, 0, 0, 0))
    a = generate_labeled_corpus(HUMAN_PROFILE, BOT_PROFILES, 20, 50, rng_seed=9)
    b = generate_labeled_corpus(HUMAN_PROFILE, BOT_PROFILES, 20, 50, rng_seed=9)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


HEADER = "n_tweets,n_replies,n_retweets,avg_tweets,avg_replies,avg_retweets,retweet_ratio,replies_ratio,retweet_replies_ratio,mentions_ratio,label\n"


def test_csv_two_rows():
    data = load_labeled_csv(io.StringIO(HEADER + "1,0,0,1,0,0,0,0,0,0,0\n2,1,1,.5,.25,.25,.5,.5,1,0,1\n"))
    assert len(data) == 2 and data.y.tolist() == [0, 1]


def test_csv_missing_label_column():
    with pytest.raises(CSVSchemaError, match="label"):
        load_labeled_csv(io.StringIO(HEADER.replace(",label", "") + "1,0,0,1,0,0,0,0,0,0\n"))


def test_csv_negative_and_non_numeric_cells():
    with pytest.raises(CSVSchemaError, match="row 2"):
        load_labeled_csv(io.StringIO(HEADER + "-1,0,0,1,0,0,0,0,0,0,0\n"))
    with pytest.raises(CSVSchemaError, match="n_replies"):
        load_labeled_csv(io.StringIO(HEADER + "1,x,0,1,0,0,0,0,0,0,0\n"))


def test_csv_roundtrip(tmp_path):
    data = generate_labeled_corpus(HUMAN_PROFILE, BOT_PROFILES, 5, 30, rng_seed=0)
    data.to_csv(tmp_path / "d.csv")
    back = load_labeled_csv(tmp_path / "d.csv")
    assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)


def test_f1_edge_cases():
    assert f1_score([0, 0], [0, 0]) == 0.0
    assert f1_score([1, 0, 1], [1, 0, 1]) == 1.0
