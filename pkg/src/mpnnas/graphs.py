"""Graph records, augmentation, padded batching, splits and synthetic tasks.

Dataset files are UTF-8 JSON lines. Each record looks like::

    {"nodes": [[...], ...], "edges": [{"src": 0, "dst": 1, "f": [...]}], "y": [...]}

An optional first line ``{"meta": {"n_max": .., "e_max": .., "task_names": [..]}}``
pins padding sizes. ``e_max`` counts directed edges *after* augmentation
(both directions plus one self-loop per node).
"""

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

DEFAULT_NODE_FEATURES = 75
DEFAULT_EDGE_FEATURES = 14


class DatasetError(ValueError):
    pass


@dataclass
class GraphRecord:
    node_features: np.ndarray  # (n, F_n)
    edges: list  # [(src, dst, features)]
    targets: np.ndarray  # (K,)
    edge_width: int = None  # edge feature width, needed when ``edges`` is empty

    @property
    def edge_feature_width(self):
        return self.edges[0][2].shape[0] if self.edges else self.edge_width

    @property
    def n_nodes(self):
        return self.node_features.shape[0]

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_pairs(self):
        return [(s, d) for s, d, _ in self.edges]


@dataclass
class DatasetMeta:
    n_max: int = None
    e_max: int = None
    task_names: list = field(default_factory=list)


def _parse_record(obj, lineno):
    try:
        nodes = np.asarray(obj["nodes"], dtype=np.float64)
        y = np.asarray(obj["y"], dtype=np.float64).reshape(-1)
        raw_edges = obj["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"line {lineno}: malformed record ({exc})") from None
    if nodes.ndim != 2 or nodes.shape[0] == 0:
        raise DatasetError(f"line {lineno}: 'nodes' must be a non-empty list of float lists")
    edges = []
    for e in raw_edges:
        try:
            s, d = int(e["src"]), int(e["dst"])
            f = np.asarray(e["f"], dtype=np.float64).reshape(-1)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"line {lineno}: malformed edge ({exc})") from None
        n = nodes.shape[0]
        if not (0 <= s < n and 0 <= d < n):
            raise DatasetError(f"line {lineno}: edge ({s}, {d}) index out of range "
                               f"for {n} nodes")
        edges.append((s, d, f))
    return GraphRecord(nodes, edges, y)


def check_widths(records):
    """Return dataset-wide ``(F_n, F_e, K)``; raise if any record disagrees."""
    if not records:
        raise DatasetError("no records")
    fn = records[0].node_features.shape[1]
    k = records[0].targets.shape[0]
    fe = None
    for i, r in enumerate(records):
        if r.node_features.shape[1] != fn:
            raise DatasetError(f"record {i}: node feature width {r.node_features.shape[1]} != {fn}")
        if r.targets.shape[0] != k:
            raise DatasetError(f"record {i}: target count {r.targets.shape[0]} != {k}")
        widths = [f.shape[0] for _, _, f in r.edges] or (
            [] if r.edge_width is None else [r.edge_width])
        for w in widths:
            if fe is None:
                fe = w
            elif w != fe:
                raise DatasetError(f"record {i}: edge feature width {w} != {fe}")
    return fn, (0 if fe is None else fe), k


def load_dataset(path, with_meta=False):
    """Read a JSON-lines dataset file into validated :class:`GraphRecord` objects."""
    path = Path(path)
    records = []
    meta = DatasetMeta()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DatasetError(f"line {lineno}: expected an object")
            if "meta" in obj:
                if records:
                    raise DatasetError(f"line {lineno}: 'meta' must be the first line")
                m = obj["meta"]
                meta = DatasetMeta(m.get("n_max"), m.get("e_max"), list(m.get("task_names", [])))
                continue
            records.append(_parse_record(obj, lineno))
    _, fe, _ = check_widths(records)
    for r in records:
        r.edge_width = fe
    return (records, meta) if with_meta else records


def record_to_json(r):
    return {
        "nodes": r.node_features.tolist(),
        "edges": [{"src": int(s), "dst": int(d), "f": f.tolist()} for s, d, f in r.edges],
        "y": r.targets.tolist(),
    }


def save_dataset(path, records, meta=None):
    with Path(path).open("w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": {"n_max": meta.n_max, "e_max": meta.e_max,
                                          "task_names": meta.task_names}}) + "\n")
        for r in records:
            fh.write(json.dumps(record_to_json(r)) + "\n")


def augment(record, n_edge_features=None):
    """Make every edge bidirectional and add one zero-feature self-loop per node.

    Reverse edges copy the forward edge's features. Existing reverse edges and
    self-loops are kept as they are, so ``augment`` is idempotent. For an
    edgeless graph the self-loop width comes from ``n_edge_features``.
    """
    fe = record.edge_feature_width
    fe = (n_edge_features or 0) if fe is None else fe
    seen = set()
    out = []
    for s, d, f in record.edges:
        if (s, d) not in seen:
            seen.add((s, d))
            out.append((s, d, f))
    for s, d, f in list(out):
        if (d, s) not in seen:
            seen.add((d, s))
            out.append((d, s, f.copy()))
    for v in range(record.n_nodes):
        if (v, v) not in seen:
            seen.add((v, v))
            out.append((v, v, np.zeros(fe)))
    return GraphRecord(record.node_features, out, record.targets, fe)


@dataclass(eq=False)
class GraphBatch:
    """Zero-padded batch of augmented graphs.

    ``edge_mask`` marks real edges; padded edge rows point at node 0 with zero
    features, which would otherwise be indistinguishable from a self-loop.
    """

    H: np.ndarray  # (B, N, F_n)
    E: np.ndarray  # (B, E_max, F_e)
    P: np.ndarray  # (B, E_max, 2) int, columns (src, dst)
    m: np.ndarray  # (B, N)
    Y: np.ndarray  # (B, K)
    edge_mask: np.ndarray  # (B, E_max)

    @property
    def size(self):
        return self.H.shape[0]

    @property
    def n_max(self):
        return self.H.shape[1]

    @cached_property
    def flat(self):
        """Real edges as flat node indices into the ``(B * N, .)`` node layout."""
        b, n = self.H.shape[:2]
        bi, ei = np.nonzero(self.edge_mask)
        src = bi * n + self.P[bi, ei, 0]
        dst = bi * n + self.P[bi, ei, 1]
        in_deg = np.bincount(dst, minlength=b * n).astype(np.float64)
        return FlatGraph(
            src=src.astype(np.intp),
            dst=dst.astype(np.intp),
            edge_features=self.E[bi, ei],
            node_mask=self.m.reshape(b * n, 1).astype(np.float64),
            in_degree=in_deg,
            n_nodes=b * n,
        )


@dataclass(eq=False)
class FlatGraph:
    src: np.ndarray
    dst: np.ndarray
    edge_features: np.ndarray
    node_mask: np.ndarray
    in_degree: np.ndarray
    n_nodes: int


def padding_sizes(records):
    """Max node and directed-edge counts over the augmented records."""
    aug = [augment(r) for r in records]
    return max(r.n_nodes for r in aug), max(r.n_edges for r in aug)


def pad_and_batch(records, n_max=None, e_max=None, batch_size=32, augmented=False):
    """Augment (unless already done), zero-pad and split into batches."""
    if not records:
        raise DatasetError("no records")
    fn, fe, k = check_widths(records)
    aug = list(records) if augmented else [augment(r, fe) for r in records]
    n_max = max(r.n_nodes for r in aug) if n_max is None else n_max
    e_max = max(r.n_edges for r in aug) if e_max is None else e_max
    for i, r in enumerate(aug):
        if r.n_nodes > n_max:
            raise DatasetError(f"record {i}: {r.n_nodes} nodes exceed N={n_max}")
        if r.n_edges > e_max:
            raise DatasetError(f"record {i}: {r.n_edges} edges exceed E_max={e_max}")
    batches = []
    for start in range(0, len(aug), batch_size):
        chunk = aug[start:start + batch_size]
        b = len(chunk)
        H = np.zeros((b, n_max, fn))
        E = np.zeros((b, e_max, fe))
        P = np.zeros((b, e_max, 2), dtype=np.int64)
        m = np.zeros((b, n_max))
        em = np.zeros((b, e_max), dtype=bool)
        Y = np.zeros((b, k))
        for i, r in enumerate(chunk):
            H[i, :r.n_nodes] = r.node_features
            m[i, :r.n_nodes] = 1.0
            for j, (s, d, f) in enumerate(r.edges):
                P[i, j] = (s, d)
                E[i, j] = f
                em[i, j] = True
            Y[i] = r.targets
        batches.append(GraphBatch(H, E, P, m, Y, em))
    return batches


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be three values summing to 1, got {self.ratios}")


def split(records, spec=SplitSpec()):
    """Seeded random train/valid/test split."""
    n = len(records)
    if n < 10:
        raise DatasetError(f"need at least 10 records to split, got {n}")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(spec.ratios[0] * n))
    n_valid = int(round(spec.ratios[1] * n))
    idx = (order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:])
    return tuple([records[i] for i in part] for part in idx)


# synthetic tasks -----------------------------------------------------------------

def count_edges(n, pairs):
    return len({(min(s, d), max(s, d)) for s, d in pairs if s != d})


def count_triangles(n, pairs):
    adj = np.zeros((n, n), dtype=bool)
    for s, d in pairs:
        if s != d:
            adj[s, d] = adj[d, s] = True
    return sum(1 for a, b, c in itertools.combinations(range(n), 3)
               if adj[a, b] and adj[b, c] and adj[a, c])


def feature_dot_sum(node_features, pairs):
    return float(sum(node_features[s] @ node_features[d] for s, d in pairs))


TASKS = {
    "edge-count": lambda x, pairs: count_edges(len(x), pairs),
    "triangle-count": lambda x, pairs: count_triangles(len(x), pairs),
    "feature-sum": feature_dot_sum,
}


def make_synthetic(task, n_graphs, max_nodes, seed=0,
                   n_node_features=DEFAULT_NODE_FEATURES,
                   n_edge_features=DEFAULT_EDGE_FEATURES, edge_prob=0.35):
    """Random undirected graphs whose single target is computed by brute force.

    Node counts are uniform on ``[3, max_nodes]``; each unordered pair is
    linked with probability ``edge_prob``. Features are uniform on ``[0, 1)``.
    """
    if task not in TASKS:
        raise ValueError(f"unknown synthetic task {task!r}; choose from {sorted(TASKS)}")
    if max_nodes < 3:
        raise ValueError("max_nodes must be >= 3")
    rng = np.random.default_rng(seed)
    target = TASKS[task]
    out = []
    for _ in range(n_graphs):
        n = int(rng.integers(3, max_nodes + 1))
        x = rng.random((n, n_node_features))
        pairs = [(i, j) for i, j in itertools.combinations(range(n), 2)
                 if rng.random() < edge_prob]
        edges = [(i, j, rng.random(n_edge_features)) for i, j in pairs]
        out.append(GraphRecord(x, edges, np.array([float(target(x, pairs))]), n_edge_features))
    return out
