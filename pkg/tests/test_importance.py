import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpnnas.importance import (Forest, RegressionTree, analyze_log, decode_operations, decompose,
                               decompose_tree, encode_operations, fit_forest, fit_tree,
                               importance, operation_names, rank)
from mpnnas.space import DEFAULT_TABLE, Architecture, MpnnCellConfig, decode, encode, sample_uniform
from mpnnas.training import FAILED_REWARD, EvaluationRecord

NAMES = operation_names()
IDX = {n: i for i, n in enumerate(NAMES)}


def worked_tree():
    """Root -0.52; dim(32)[cell1] present (+0.08); attn(gat)[cell1] absent (+0.18);
    act(elu)[cell1] present (-0.07)."""
    f = [IDX["dim(32)[cell1]"], -1, IDX["attn(gat)[cell1]"], IDX["act(elu)[cell1]"], -1, -1, -1]
    absent = [1, -1, 3, 5, -1, -1, -1]
    present = [2, -1, 4, 6, -1, -1, -1]
    value = [-0.52, -0.60, -0.44, -0.26, -0.50, -0.20, -0.33]
    n = [7, 3, 4, 2, 2, 1, 1]
    return RegressionTree(*(np.array(v) for v in (f, absent, present, value, n)))


def worked_vector():
    cell = MpnnCellConfig(32, "gcn", 1, "sum", "elu", "gru", 2)
    arch = Architecture((cell,) * 3, {a: False for a in decode((0,) * 10).skips}, "gather-sum")
    return encode_operations(encode(arch))


def random_log(n, seed, fn=None):
    rng = np.random.default_rng(seed)
    ps = [sample_uniform(seed=rng) for _ in range(n)]
    fn = fn or (lambda p, r: -1.0 + 0.3 * (p[3] == 1) - 0.1 * (p[9] % 3) + 0.05 * r.normal())
    return [EvaluationRecord(p=p, reward=fn(p, rng), t_finish=float(i)) for i, p in enumerate(ps)]


def test_operation_count():
    per_cell = 4 + 7 + 4 + 3 + 8 + 2 + 6
    assert per_cell == 34
    assert len(NAMES) == 3 * per_cell + 6 * 2 + 11 == 125
    assert len(set(NAMES)) == 125


def test_named_coordinates():
    a = encode_operations((32256 - 1,) + (0,) * 9)  # cell1 dim=32
    assert a[IDX["dim(32)[cell1]"]] == 1
    assert all(a[IDX[f"dim({d})[cell1]"]] == -1 for d in (4, 8, 16))
    assert "skip(input->cell2)" in IDX and "noskip(input->cell2)" in IDX
    assert NAMES[-1] == "gather(flatten)"


@settings(max_examples=200)
@given(st.tuples(*[st.integers(0, n - 1) for n in DEFAULT_TABLE.sizes]))
def test_one_hot_blocks_and_round_trip(p):
    a = encode_operations(p)
    assert set(np.unique(a)) <= {-1.0, 1.0}
    assert int((a > 0).sum()) == 3 * 7 + 6 + 1
    assert decode_operations(a) == p


def test_leaf_value_is_region_mean():
    X = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], dtype=float)
    y = np.array([1.0, 3.0, 10.0, 12.0])
    t = fit_tree(X, y)
    leaves = np.flatnonzero(t.feature < 0)
    for leaf in leaves:
        hits = [i for i in range(4) if t.path(X[i])[-1] == leaf]
        assert t.value[leaf] == pytest.approx(y[hits].mean())


def test_constant_response():
    X = np.array([encode_operations(sample_uniform(seed=s)) for s in range(30)])
    f = fit_forest(X, np.full(30, 0.3), n_trees=10)
    np.testing.assert_allclose(f.predict(X), 0.3)
    c = decompose(f, X[0])
    assert c.bias == pytest.approx(0.3) and not c.contrib.any()


def test_tree_count():
    X = np.array([encode_operations(sample_uniform(seed=s)) for s in range(20)])
    assert len(fit_forest(X, np.arange(20.0), n_trees=100).trees) == 100


def test_depth_zero_forest_predicts_global_mean():
    rng = np.random.default_rng(0)
    X = rng.choice([-1.0, 1.0], size=(40, 6))
    y = rng.normal(size=40)
    f = fit_forest(X, y, n_trees=5, max_depth=0, bootstrap=False)
    np.testing.assert_allclose(f.predict(X), y.mean(), rtol=0, atol=1e-15)


def test_single_coordinate_response_dominates():
    rng = np.random.default_rng(1)
    X = rng.choice([-1.0, 1.0], size=(200, 12))
    f = fit_forest(X, X[:, 5], n_trees=20, seed=2)
    imp = importance(f, X)
    assert int(np.argmax(np.abs(imp.values))) == 5


def test_worked_tree_path_credits():
    t = worked_tree()
    a = worked_vector()
    c = decompose_tree(t, a, len(NAMES))
    assert c.bias == -0.52
    credits = {NAMES[i]: round(v, 12) for i, v in enumerate(c.contrib) if v}
    assert credits == {"dim(32)[cell1]": 0.08, "attn(gat)[cell1]": 0.18, "act(elu)[cell1]": -0.07}
    assert c.prediction == pytest.approx(t.predict_one(a), abs=1e-12)


def test_single_leaf_tree():
    t = RegressionTree(*(np.array([v]) for v in (-1, -1, -1, 0.7, 5)))
    c = decompose_tree(t, np.ones(3), 3)
    assert c.bias == 0.7 and not c.contrib.any()


@pytest.mark.parametrize("seed", [0, 1])
def test_decomposition_is_additive(seed):
    log = random_log(80, seed)
    X = np.array([encode_operations(r.p) for r in log])
    f = fit_forest(X, np.array([r.reward for r in log]), n_trees=30, seed=seed)
    rng = np.random.default_rng(seed + 10)
    for _ in range(100):
        a = encode_operations(sample_uniform(seed=rng))
        assert abs(decompose(f, a).prediction - f.predict(a)[0]) <= 1e-10


def test_importance_definition():
    t = RegressionTree(np.array([0, -1, -1]), np.array([1, -1, -1]), np.array([2, -1, -1]),
                       np.array([0.0, 0.0, 0.2]), np.array([2, 1, 1]))
    f = Forest([t], 2)
    imp = importance(f, [[1.0, -1.0]])
    np.testing.assert_allclose(imp.values, [0.2, 0.0])
    np.testing.assert_allclose(rank(np.array([0.2, -0.3])).top_negative, [(1, -0.3)])
    assert rank(np.array([0.2, -0.3])).top_positive == [(0, 0.2)]


def test_zero_contributions_zero_importance():
    f = Forest([RegressionTree(*(np.array([v]) for v in (-1, -1, -1, 1.0, 3)))], 4)
    assert not importance(f, np.ones((3, 4))).values.any()


def test_importance_ignores_sample_order():
    log = random_log(60, 5)
    X = np.array([encode_operations(r.p) for r in log])
    f = fit_forest(X, np.array([r.reward for r in log]), n_trees=10, seed=1)
    perm = np.random.default_rng(0).permutation(len(X))
    np.testing.assert_allclose(importance(f, X[perm]).values, importance(f, X).values,
                               rtol=0, atol=1e-14)


def test_skip_oracle_ranks_first():
    log = random_log(200, 7, lambda p, r: -1.0 + 0.5 * (p[3] == 1))
    _, imp = analyze_log(log, n_trees=50, seed=0)
    first = imp.top_positive[0][0]
    assert NAMES[first] == "skip(input->cell2)"
    others = np.delete(np.abs(imp.values), first)
    assert imp.values[first] >= 2 * others.max()


def test_failed_records_excluded():
    log = random_log(30, 3)
    log += [EvaluationRecord(p=(0,) * 10, reward=FAILED_REWARD, status="failed")] * 5
    forest, _ = analyze_log(log, n_trees=5)
    assert all(t.n_samples[0] == 30 for t in forest.trees)


def test_too_few_records():
    with pytest.raises(ValueError, match="at least 10"):
        analyze_log(random_log(9, 0))
