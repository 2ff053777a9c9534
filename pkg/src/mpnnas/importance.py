"""Operation importance from a random forest fitted on search results.

Each architecture is expanded into a +/-1 operation vector (one coordinate
per node/operation pair; MPNN cells expand per factor). A bagged CART forest
regresses reward on that vector, and each prediction is decomposed along its
decision paths into a bias plus per-operation contributions.
"""

from dataclasses import dataclass

import numpy as np

from .space import DEFAULT_TABLE


def operation_names(table=DEFAULT_TABLE):
    names = []
    for node in table:
        for key, label, levels in node.factors:
            for level in levels:
                if node.kind == "skip":
                    anchor = node.name[node.name.index("("):]
                    names.append(("skip" if level == "identity" else "noskip") + anchor)
                elif node.kind == "gather":
                    names.append(f"gather({level})")
                else:
                    names.append(f"{label}({level})[{node.name}]")
    return names


def encode_operations(p, table=DEFAULT_TABLE):
    """+1 for each operation present in ``p``, -1 for every other operation."""
    p = table.validate(p)
    out = []
    for node, x in zip(table, p):
        for (_, _, levels), d in zip(node.factors, node.digits(x)):
            block = -np.ones(len(levels))
            block[d] = 1.0
            out.append(block)
    return np.concatenate(out)


def decode_operations(a, table=DEFAULT_TABLE):
    a = np.asarray(a)
    p, pos = [], 0
    for node in table:
        digits = []
        for _, _, levels in node.factors:
            block = a[pos:pos + len(levels)]
            hits = np.flatnonzero(block > 0)
            if len(hits) != 1:
                raise ValueError(f"{node.name}: expected exactly one +1 entry, got {len(hits)}")
            digits.append(int(hits[0]))
            pos += len(levels)
        p.append(node.index(digits))
    if pos != len(a):
        raise ValueError(f"operation vector has {len(a)} entries, table needs {pos}")
    return tuple(p)


@dataclass
class RegressionTree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf.

    Samples with ``a[feature] > 0`` go to ``present[i]``, the rest to
    ``absent[i]``. ``value[i]`` is the mean response of the node's region.
    """

    feature: np.ndarray
    absent: np.ndarray
    present: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def path(self, a):
        i, out = 0, [0]
        while self.feature[i] >= 0:
            i = self.present[i] if a[self.feature[i]] > 0 else self.absent[i]
            out.append(i)
        return out

    def predict_one(self, a):
        return self.value[self.path(a)[-1]]

    def predict(self, X):
        return np.array([self.predict_one(a) for a in np.atleast_2d(X)])


def _best_split(X, y, min_leaf):
    """Variance-reduction split over +/-1 features; ties go to the later feature."""
    pos = X > 0
    n = len(y)
    n_pos = pos.sum(axis=0)
    n_neg = n - n_pos
    s_pos = y @ pos
    s_neg = y @ ~pos
    ok = (n_pos >= min_leaf) & (n_neg >= min_leaf)
    if not ok.any():
        return -1
    with np.errstate(divide="ignore", invalid="ignore"):
        score = s_pos ** 2 / n_pos + s_neg ** 2 / n_neg
    score = np.where(ok, score, -np.inf)
    best = score.max()
    base = y.sum() ** 2 / n
    if best - base <= 1e-12 * max(1.0, abs(base)):
        return -1
    return int(np.flatnonzero(score >= best - 1e-12 * abs(best))[-1])


def fit_tree(X, y, min_samples_leaf=2, max_depth=None):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    feature, absent, present, value, count = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        absent.append(-1)
        present.append(-1)
        value.append(float(np.mean(y[idx])))
        count.append(len(idx))
        return len(value) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        if (max_depth is not None and depth >= max_depth) or len(idx) < 2 * min_samples_leaf \
                or np.all(ys == ys[0]):
            continue
        k = _best_split(X[idx], ys, min_samples_leaf)
        if k < 0:
            continue
        mask = X[idx, k] > 0
        lo, hi = idx[~mask], idx[mask]
        feature[node] = k
        absent[node] = new_node(lo)
        present[node] = new_node(hi)
        stack.append((present[node], hi, depth + 1))
        stack.append((absent[node], lo, depth + 1))
    return RegressionTree(np.array(feature), np.array(absent), np.array(present),
                          np.array(value), np.array(count))


@dataclass
class Forest:
    trees: list
    n_features: int

    def predict(self, X):
        X = np.atleast_2d(X)
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def fit_forest(X, y, n_trees=100, seed=0, min_samples_leaf=2, max_depth=None, bootstrap=True):
    """Bagged regression trees, each grown on a bootstrap resample of the data."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) != len(y):
        raise ValueError(f"fit_forest: {len(X)} vectors but {len(y)} rewards")
    if len(y) < 10:
        raise ValueError(f"fit_forest: need at least 10 samples, got {len(y)}")
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        if bootstrap:
            idx = np.random.default_rng(child).integers(len(y), size=len(y))
        else:
            idx = np.arange(len(y))
        trees.append(fit_tree(X[idx], y[idx], min_samples_leaf, max_depth))
    return Forest(trees, X.shape[1])


@dataclass
class ContributionVector:
    bias: float
    contrib: np.ndarray

    @property
    def prediction(self):
        return self.bias + float(np.sum(self.contrib))


def decompose_tree(tree, a, n_features):
    contrib = np.zeros(n_features)
    path = tree.path(a)
    for parent, child in zip(path[:-1], path[1:]):
        contrib[tree.feature[parent]] += tree.value[child] - tree.value[parent]
    return ContributionVector(float(tree.value[0]), contrib)


def decompose(forest, a):
    """Forest prediction for ``a`` split into averaged bias and contributions."""
    parts = [decompose_tree(t, a, forest.n_features) for t in forest.trees]
    return ContributionVector(float(np.mean([c.bias for c in parts])),
                              np.mean([c.contrib for c in parts], axis=0))


@dataclass
class Importance:
    values: np.ndarray
    top_positive: list  # [(index, value)]
    top_negative: list


def importance(forest, X, top=5):
    """Mean over samples of ``a * contrib(a)`` (elementwise)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    values = np.mean([a * decompose(forest, a).contrib for a in X], axis=0)
    return rank(values, top)


def rank(values, top=5):
    order = np.argsort(-values, kind="stable")
    pos = [(int(i), float(values[i])) for i in order if values[i] > 0][:top]
    neg = [(int(i), float(values[i])) for i in order[::-1] if values[i] < 0][:top]
    return Importance(values, pos, neg)


def analyze_log(log, table=DEFAULT_TABLE, n_trees=100, seed=0):
    """Fit a forest on the successful records of a search log and rank operations."""
    good = [r for r in log if r.ok]
    if len(good) < 10:
        raise ValueError(f"need at least 10 successful records, got {len(good)}")
    X = np.array([encode_operations(r.p, table) for r in good])
    y = np.array([r.reward for r in good])
    forest = fit_forest(X, y, n_trees=n_trees, seed=seed)
    return forest, importance(forest, X)
