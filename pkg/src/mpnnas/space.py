"""The stacked-MPNN search space: choice table, encoding, sampling, mutation.

An architecture is an integer vector ``p`` with one entry per variable node:
three MPNN cells, six skip connections and one gather node, in that order.
Each MPNN cell entry is a mixed-radix number over its seven factors
(state dim, attention, heads, aggregator, activation, update, repetitions),
with the state dim as the most significant digit.
"""

import math
from dataclasses import dataclass

import numpy as np

STATE_DIMS = (4, 8, 16, 32)
ATTENTIONS = ("constant", "gcn", "gat", "sym-gat", "cos", "linear", "gen-linear")
HEADS = (1, 2, 4, 6)
AGGREGATORS = ("mean", "sum", "max")
ACTIVATIONS = ("sigmoid", "tanh", "relu", "linear", "softplus", "leakyrelu", "relu6", "elu")
UPDATES = ("gru", "mlp")
REPETITIONS = (1, 2, 3, 4, 5, 6)
SKIP_OPS = ("empty", "identity")
GATHER_OPS = (
    "pool-sum", "pool-mean", "pool-max",
    "gather-sum", "gather-mean", "gather-max",
    "attention-pool-16", "attention-pool-32", "attention-pool-64",
    "attention-sum-pool", "flatten",
)

# (factor key, short label used in operation names, levels)
CELL_FACTORS = (
    ("dim", "dim", STATE_DIMS),
    ("attention", "attn", ATTENTIONS),
    ("heads", "heads", HEADS),
    ("aggregator", "agg", AGGREGATORS),
    ("activation", "act", ACTIVATIONS),
    ("update", "update", UPDATES),
    ("repetitions", "T", REPETITIONS),
)

SKIP_ANCHORS = (
    ("input", "cell2"), ("input", "cell3"), ("cell1", "cell3"),
    ("input", "gather"), ("cell1", "gather"), ("cell2", "gather"),
)


@dataclass(frozen=True)
class VariableNode:
    name: str
    kind: str  # "mpnn", "skip" or "gather"
    factors: tuple  # ((key, label, levels), ...)

    @property
    def radices(self):
        return tuple(len(levels) for _, _, levels in self.factors)

    @property
    def n_choices(self):
        return math.prod(self.radices)

    def digits(self, index):
        if not 0 <= index < self.n_choices:
            raise IndexError(f"{self.name}: index {index} outside [0, {self.n_choices})")
        out = []
        for r in reversed(self.radices):
            index, d = divmod(index, r)
            out.append(d)
        return tuple(reversed(out))

    def index(self, digits):
        i = 0
        for d, r in zip(digits, self.radices):
            if not 0 <= d < r:
                raise IndexError(f"{self.name}: digit {d} outside [0, {r})")
            i = i * r + d
        return i


@dataclass(frozen=True)
class MpnnCellConfig:
    state_dim: int = 4
    attention: str = "constant"
    heads: int = 1
    aggregator: str = "mean"
    activation: str = "sigmoid"
    update: str = "gru"
    repetitions: int = 1

    def values(self):
        return (self.state_dim, self.attention, self.heads, self.aggregator,
                self.activation, self.update, self.repetitions)


@dataclass(frozen=True)
class Architecture:
    """Decoded architecture vector."""

    cells: tuple  # 3 x MpnnCellConfig
    skips: dict  # (src, dst) anchor -> bool
    gather: str

    def active_skips(self, dst):
        return [src for (src, d), on in self.skips.items() if on and d == dst]


class ChoiceTable:
    """Ordered variable nodes with their allowed operations."""

    def __init__(self, nodes):
        self.nodes = tuple(nodes)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def __repr__(self):
        return f"ChoiceTable({[n.name for n in self.nodes]})"

    @property
    def sizes(self):
        return tuple(n.n_choices for n in self.nodes)

    def validate(self, p):
        p = tuple(int(x) for x in p)
        if len(p) != len(self.nodes):
            raise ValueError(f"architecture has {len(p)} entries, table has {len(self.nodes)}")
        for node, x in zip(self.nodes, p):
            if not 0 <= x < node.n_choices:
                raise IndexError(f"{node.name}: index {x} outside [0, {node.n_choices})")
        return p


def default_table():
    cells = [VariableNode(f"cell{i}", "mpnn", CELL_FACTORS) for i in (1, 2, 3)]
    skips = [VariableNode(f"skip({a}->{b})", "skip", (("skip", "skip", SKIP_OPS),))
             for a, b in SKIP_ANCHORS]
    gather = VariableNode("gather", "gather", (("gather", "gather", GATHER_OPS),))
    return ChoiceTable(cells + skips + [gather])


DEFAULT_TABLE = default_table()


def cardinality(table=DEFAULT_TABLE):
    """Exact number of architectures (Python integers, no overflow)."""
    return math.prod(node.n_choices for node in table)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_uniform(table=DEFAULT_TABLE, seed=None):
    rng = _rng(seed)
    return tuple(int(rng.integers(n)) for n in table.sizes)


def mutate(parent, table=DEFAULT_TABLE, seed=None):
    """Resample one node, chosen uniformly, to a different operation."""
    rng = _rng(seed)
    parent = table.validate(parent)
    mutable = [i for i, n in enumerate(table.sizes) if n > 1]
    if not mutable:
        raise ValueError("table has no node with more than one choice")
    i = mutable[int(rng.integers(len(mutable)))]
    r = int(rng.integers(table.sizes[i] - 1))
    child = list(parent)
    child[i] = r if r < parent[i] else r + 1
    return tuple(child)


def decode(p, table=DEFAULT_TABLE):
    p = table.validate(p)
    cells, skips, gather = [], {}, None
    for node, x in zip(table.nodes, p):
        digits = node.digits(x)
        levels = [lv[d] for (_, _, lv), d in zip(node.factors, digits)]
        if node.kind == "mpnn":
            cells.append(MpnnCellConfig(*levels))
        elif node.kind == "skip":
            skips[_anchor(node.name)] = levels[0] == "identity"
        else:
            gather = levels[0]
    return Architecture(tuple(cells), skips, gather)


def encode(arch, table=DEFAULT_TABLE):
    cells = iter(arch.cells)
    p = []
    for node in table.nodes:
        if node.kind == "mpnn":
            values = next(cells).values()
        elif node.kind == "skip":
            values = ("identity" if arch.skips[_anchor(node.name)] else "empty",)
        else:
            values = (arch.gather,)
        p.append(node.index([lv.index(v) for (_, _, lv), v in zip(node.factors, values)]))
    return tuple(p)


def _anchor(name):
    a, b = name[name.index("(") + 1:-1].split("->")
    return a, b


def format_vector(p):
    return ",".join(str(int(x)) for x in p)


def parse_vector(s):
    try:
        return tuple(int(x) for x in s.split(","))
    except ValueError:
        raise ValueError(f"not a comma-separated integer vector: {s!r}") from None
