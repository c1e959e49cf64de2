import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occforecast.core import OccupancyLevel as L
from occforecast.forest import (
    ForestConfig,
    ForestModel,
    Tree,
    best_split,
    gini,
    importance,
    importance_csv,
    model_from_json,
    model_to_json,
    predict,
    predict_batch,
    train_forest,
    train_tree,
    vote_counts,
)

from oracles import best_split_oracle, tree_oracle

FOUR_X = [[1.0], [2.0], [8.0], [9.0]]
FOUR_Y = [L.EMPTY, L.EMPTY, L.FULL, L.FULL]


def as_tuple(tree: Tree, i: int = 0):
    if tree.feature[i] < 0:
        return ("leaf", int(tree.leaf_class[i]))
    return (
        "split", int(tree.feature[i]), float(tree.threshold[i]),
        as_tuple(tree, int(tree.left[i])), as_tuple(tree, int(tree.right[i])),
    )


def oracle_tuple(node):
    if node[0] == "leaf":
        return node
    _, f, thr, left, right = node
    return ("split", f, float(thr), oracle_tuple(left), oracle_tuple(right))


def leaf_tree(level: int) -> Tree:
    counts = np.zeros((1, 5), dtype=np.int64)
    counts[0, level] = 3
    neg = np.array([-1])
    return Tree(neg, np.zeros(1), neg, neg, counts, np.zeros(1))


def model_of(trees, names=("x",)):
    return ForestModel(tuple(trees), 1, tuple(names), np.zeros(len(names)), ForestConfig(n_trees=len(trees)))


def test_gini_examples():
    assert gini([10, 10, 0, 0, 0]) == pytest.approx(0.5)
    assert gini([7, 0, 0, 0, 0]) == 0.0
    assert gini([4, 4, 4, 0, 0]) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        gini([0, 0, 0, 0, 0])


def test_best_split_examples():
    split = best_split(FOUR_X, FOUR_Y, [0])
    assert split.predictor_index == 0
    assert split.threshold == 5.0
    assert split.gini_decrease == pytest.approx(0.5)
    oracle = best_split_oracle(FOUR_X, [int(v) for v in FOUR_Y], [0])
    assert (oracle[0], float(oracle[1]), float(oracle[2])) == (0, 5.0, 0.5)
    assert best_split(FOUR_X, [L.FULL] * 4, [0]) is None
    assert best_split([[3.0]], [L.FULL], [0]) is None


def test_best_split_tie_breaks_to_lower_predictor_and_threshold():
    X = [[1, 1], [2, 2], [3, 3], [4, 4]]
    y = [0, 4, 4, 0]
    split = best_split(X, y, [0, 1])
    oracle = best_split_oracle(X, y, [0, 1])
    assert (split.predictor_index, split.threshold) == (oracle[0], float(oracle[1])) == (0, 1.5)


def test_tree_examples():
    rng = np.random.default_rng(0)
    pure = train_tree(FOUR_X, [L.AVAILABLE] * 4, 1, rng)
    assert pure.n_nodes == 1 and pure.node().level is L.AVAILABLE
    tree = train_tree(FOUR_X, FOUR_Y, 1, np.random.default_rng(0), min_node_size=1)
    assert as_tuple(tree) == ("split", 0, 5.0, ("leaf", 0), ("leaf", 4))
    assert tree.depth() == 1
    assert tree.node().threshold == 5.0


def test_tree_deterministic_for_same_stream():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 10, (200, 4)).astype(float)
    y = rng.integers(0, 5, 200)
    a = train_tree(X, y, 2, np.random.default_rng(9))
    b = train_tree(X, y, 2, np.random.default_rng(9))
    assert a.to_dict() == b.to_dict()


def test_leaf_class_ties_to_lower_level():
    tree = train_tree([[1.0], [1.0]], [L.FULL, L.EMPTY], 1, np.random.default_rng(0), min_node_size=1)
    assert tree.node().level is L.EMPTY


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_depth_two_trees_match_exhaustive_search(data):
    n = data.draw(st.integers(1, 12))
    p = data.draw(st.integers(1, 2))
    X = [[data.draw(st.integers(0, 5)) for _ in range(p)] for _ in range(n)]
    y = [data.draw(st.integers(0, 4)) for _ in range(n)]
    tree = train_tree(X, y, p, np.random.default_rng(0), min_node_size=1, max_depth=2)
    assert as_tuple(tree) == oracle_tuple(tree_oracle(X, y, min_node_size=1, max_depth=2))


def test_single_tree_forest_without_bootstrap_equals_train_tree():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 20, (60, 3)).astype(float)
    y = rng.integers(0, 5, 60)
    config = ForestConfig(n_trees=1, mtry=3, bootstrap=False, seed=2)
    model = train_forest(X, y, ["a", "b", "c"], config)
    direct = train_tree(X, y, 3, np.random.default_rng(0), 5)
    assert model.trees[0].to_dict() == direct.to_dict()


def time_signal(n=1500, seed=0):
    rng = np.random.default_rng(seed)
    minute = rng.integers(0, 1440, n)
    noise = rng.normal(size=(n, 3))
    y = np.where(minute < 480, 4, np.where(minute < 1000, 0, 2))
    return np.column_stack([minute, noise]).astype(float), y


def test_time_of_day_signal_dominates_importance():
    X, y = time_signal()
    names = ["minute_of_day", "n1", "n2", "n3"]
    model = train_forest(X, y, names, ForestConfig(n_trees=50, seed=1))
    ranked = list(importance(model))
    assert ranked[0] == "minute_of_day"
    imp = importance(model)
    assert imp["minute_of_day"] > max(imp["n1"], imp["n2"], imp["n3"])
    assert importance_csv(model).splitlines()[:2] == ["predictor,importance", f"minute_of_day,{imp['minute_of_day']!r}"]


def test_importance_is_mean_of_tree_decreases():
    X, y = time_signal(400, 2)
    model = train_forest(X, y, ["m", "a", "b", "c"], ForestConfig(n_trees=20, seed=3))
    per_tree = np.array([t.importance(4) for t in model.trees])
    assert np.allclose(per_tree.mean(axis=0), model.importance)
    assert (model.importance >= 0).all()


def test_importance_examples():
    tree = train_tree(np.column_stack([FOUR_X, [0, 0, 0, 0]]), FOUR_Y, 2, np.random.default_rng(0), 1)
    model = ForestModel((tree,), 2, ("x", "z"), tree.importance(2), ForestConfig(n_trees=1))
    assert importance(model) == {"x": pytest.approx(0.5), "z": 0.0}


def test_vote_examples():
    assert predict(model_of([leaf_tree(L.FULL)]), {"x": 3.0}) is L.FULL
    three = model_of([leaf_tree(L.EMPTY), leaf_tree(L.EMPTY), leaf_tree(L.FULL)])
    assert predict(three, {"x": 0.0}) is L.EMPTY
    two = model_of([leaf_tree(L.EMPTY), leaf_tree(L.FULL)])
    assert predict_batch(two, np.zeros((3, 1))) == [L.EMPTY] * 3
    with pytest.raises(KeyError, match="x"):
        predict(two, {"y": 1.0})


def test_votes_sum_to_tree_count():
    X, y = time_signal(300, 4)
    model = train_forest(X, y, ["m", "a", "b", "c"], ForestConfig(n_trees=15, seed=1))
    votes = vote_counts(model, X[:50])
    assert (votes.sum(axis=1) == 15).all()


def test_out_of_bag_rows_exist():
    from occforecast.core import derive_rng

    n, config = 120, ForestConfig(n_trees=60, seed=8)
    for i in range(config.n_trees):
        pick = derive_rng(config.seed, i).integers(0, n, n)
        oob = n - len(np.unique(pick))
        assert oob > 0
        assert 0.2 < oob / n < 0.55


def test_separable_data_fits_exactly():
    rng = np.random.default_rng(0)
    X = rng.permutation(200).reshape(100, 2).astype(float)
    y = (X[:, 0] > 100).astype(int) * 4
    model = train_forest(X, y, ["a", "b"], ForestConfig(n_trees=1, mtry=2, min_node_size=1, bootstrap=False))
    assert [int(v) for v in predict_batch(model, X)] == y.tolist()


def test_single_class_warns_but_predicts():
    with pytest.warns(UserWarning):
        model = train_forest(np.arange(20.0).reshape(-1, 1), [2] * 20, ["x"], ForestConfig(n_trees=3))
    assert predict(model, {"x": 100.0}) is L.AVAILABLE


def test_training_preconditions():
    with pytest.raises(ValueError):
        train_forest(np.zeros((5, 1)), [0] * 5, ["x"])
    with pytest.raises(ValueError):
        train_forest(np.zeros((20, 1)), [7] * 20, ["x"])


def test_serialization_and_parallel_training_are_exact():
    X, y = time_signal(500, 6)
    names = ["m", "a", "b", "c"]
    config = ForestConfig(n_trees=12, seed=5)
    serial = train_forest(X, y, names, config, {"station_id": 3})
    parallel = train_forest(X, y, names, config, {"station_id": 3}, jobs=2)
    text = model_to_json(serial)
    assert text == model_to_json(parallel)
    loaded = model_from_json(text)
    assert model_to_json(loaded) == text
    assert loaded.train_meta == {"station_id": 3}
    assert np.array_equal(vote_counts(loaded, X), vote_counts(serial, X))
    other = train_forest(X, y, names, ForestConfig(n_trees=12, seed=6))
    assert model_to_json(other) != text
    with pytest.raises(ValueError):
        model_from_json('{"format": "other"}')
