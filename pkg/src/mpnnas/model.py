"""Compile an architecture vector into a trainable stacked-MPNN regressor.

Node states live in a flat ``(B * N, d)`` layout; only real edges of the
batch (see :attr:`GraphBatch.flat`) take part in message passing. Edge
``(w -> v)`` carries a message from ``src = w`` to ``dst = v``.
"""

import numpy as np

from . import tensor as T
from .layers import Dense, GRUCell, ParamRegistry
from .space import DEFAULT_TABLE, decode
from .tensor import Tensor

DENSE_UNITS = 32

_NODE_REDUCING = {"gather-sum", "gather-mean", "gather-max",
                  "attention-pool-16", "attention-pool-32", "attention-pool-64",
                  "attention-sum-pool"}


class Attention:
    """Attention coefficients for ``heads`` independent parameter sets.

    Head parameters are stacked along one axis so all heads are scored in a
    single pass; scores come out as ``(n_edges, heads)``.
    """

    TRAINABLE = ("gat", "sym-gat", "cos", "linear", "gen-linear")

    def __init__(self, reg, name, kind, d, heads=1):
        if kind not in ("constant", "gcn") + self.TRAINABLE:
            raise ValueError(f"unknown attention kind {kind!r}")
        self.kind, self.d = kind, d
        self.heads = heads if kind in self.TRAINABLE else 1
        h = self.heads
        if kind in self.TRAINABLE:
            self.W = reg.weight(f"{name}/W", d, d, (d, h * d))
            if kind == "gen-linear":
                self.w_g = reg.weight(f"{name}/W_G", d, 1, (h, d))
            else:
                # a = [a_l ; a_r] acting on W h_v || W h_w
                self.a_l = reg.weight(f"{name}/a_l", 2 * d, 1, (h, d))
                self.a_r = reg.weight(f"{name}/a_r", 2 * d, 1, (h, d))

    def __call__(self, h, g):
        return attention_coefficients(self, h, g)


def attention_coefficients(att, h, g):
    """Per-edge coefficients ``(n_edges, heads)``; None stands for all ones.

    Trainable kinds are softmax-normalised over each node's incoming edges.
    """
    kind = att.kind
    if kind == "constant":
        return None
    if kind == "gcn":
        deg = np.maximum(g.in_degree, 1.0)
        return T.Tensor((1.0 / np.sqrt(deg[g.dst] * deg[g.src]))[:, None])
    n, d, heads = h.shape[0], att.d, att.heads
    wh = T.reshape(T.matmul(h, att.W), (n, heads, d))
    if kind == "gen-linear":
        joint = T.tanh(T.take(wh, g.dst) + T.take(wh, g.src))
        raw = T.sum_(joint * att.w_g, axis=-1)
    else:
        left = T.sum_(wh * att.a_l, axis=-1)
        right = T.sum_(wh * att.a_r, axis=-1)
        raw = T.take(left, g.dst) + T.take(right, g.src)
        if kind == "gat":
            raw = T.leaky_relu(raw)
        elif kind == "sym-gat":
            raw = T.leaky_relu(raw) + T.leaky_relu(T.take(left, g.src) + T.take(right, g.dst))
        elif kind == "linear":
            raw = T.tanh(raw)
    return T.segment_softmax(raw, g.dst, g.n_nodes)


_AGGREGATE = {"mean": T.segment_mean, "sum": T.segment_sum, "max": T.segment_max}


class MpnnCell:
    def __init__(self, reg, name, cfg, d_in, d_edge):
        d = cfg.state_dim
        self.cfg, self.d = cfg, d
        self.embed = Dense(reg, f"{name}/embed", d_in, d)
        self.edge_hidden = Dense(reg, f"{name}/edge_net/hidden", d_edge, 2 * d, "relu")
        self.edge_out = Dense(reg, f"{name}/edge_net/out", 2 * d, d * d)
        self.attention = Attention(reg, f"{name}/attention", cfg.attention, d, cfg.heads)
        if cfg.update == "gru":
            self.update = GRUCell(reg, f"{name}/gru", d)
        else:
            self.update = Dense(reg, f"{name}/mlp", 2 * d, d)
        self.activation = T.ACTIVATIONS[cfg.activation]
        self.aggregate = _AGGREGATE[cfg.aggregator]

    def edge_matrices(self, g):
        n_e, d = len(g.src), self.d
        return T.reshape(self.edge_out(self.edge_hidden(Tensor(g.edge_features))), (n_e, d, d))

    def __call__(self, x, g):
        return cell_forward(self, x, g)


def cell_forward(cell, x, g):
    """Run one MPNN cell on flat node inputs ``x`` of shape ``(B * N, d_in)``."""
    d, n = cell.d, g.n_nodes
    mask = g.node_mask
    h = cell.embed(x) * mask
    A = cell.edge_matrices(g)
    n_e = len(g.src)
    for _ in range(cell.cfg.repetitions):
        hw = T.reshape(T.take(h, g.src), (n_e, d, 1))
        base = T.reshape(T.matmul(A, hw), (n_e, d))
        alpha = cell.attention(h, g)
        if alpha is None:
            m = cell.aggregate(base, g.dst, n)
        else:
            k = alpha.shape[1]
            weighted = T.reshape(base, (n_e, 1, d)) * T.reshape(alpha, (n_e, k, 1))
            m = cell.aggregate(weighted, g.dst, n)
            # heads are merged by averaging
            m = T.mean(m, axis=1) if k > 1 else T.reshape(m, (n, d))
        if isinstance(cell.update, GRUCell):
            h = cell.update(h, m)
        else:
            h = cell.update(T.concat([h, m], axis=-1))
        h = cell.activation(h) * mask
    return h


class Gather:
    def __init__(self, reg, kind, n_max, width):
        self.kind = kind
        if kind.startswith("pool-"):
            self.out_width = n_max
        elif kind == "flatten":
            self.out_width = n_max * width
        elif kind.startswith("attention-pool-"):
            f = int(kind.rsplit("-", 1)[1])
            self.W1 = reg.weight("gather/W1", width, f)
            self.b1 = reg.bias("gather/b1", (f,))
            self.W2 = reg.weight("gather/W2", width, f)
            self.b2 = reg.bias("gather/b2", (f,))
            self.out_width = f
        elif kind == "attention-sum-pool":
            self.a = reg.weight("gather/a", width, 1)
            self.out_width = width
        elif kind in ("gather-sum", "gather-mean", "gather-max"):
            self.out_width = width
        else:
            raise ValueError(f"unknown gather kind {kind!r}")

    def __call__(self, H, m):
        return gather_forward(self, H, m)


def gather_forward(gather, H, m):
    """Reduce masked node states ``H`` (B, N, F) to graph vectors (B, G)."""
    kind = gather.kind
    H = T.as_tensor(H)
    m = np.asarray(m, dtype=np.float64)
    b, n, f = H.shape
    if kind.startswith("pool-"):
        op = kind.split("-")[1]
        if op == "sum":
            out = T.sum_(H, axis=2)
        elif op == "mean":
            out = T.mean(H, axis=2)
        else:
            out = T.masked_max(H, np.ones(H.shape, dtype=bool), axis=2)
        return out * m
    if kind == "gather-sum":
        return T.sum_(H, axis=1)
    if kind == "gather-mean":
        count = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
        return T.sum_(H, axis=1) * (1.0 / count)
    if kind == "gather-max":
        return T.masked_max(H, m[:, :, None] > 0, axis=1)
    if kind == "flatten":
        return T.reshape(H, (b, n * f))
    flat = T.reshape(H, (b * n, f))
    if kind.startswith("attention-pool-"):
        gate = T.sigmoid(T.matmul(flat, gather.W1) + gather.b1)
        value = T.matmul(flat, gather.W2) + gather.b2
        per_node = gate * value * m.reshape(b * n, 1)
        return T.sum_(T.reshape(per_node, (b, n, -1)), axis=1)
    if kind == "attention-sum-pool":
        scores = T.reshape(T.matmul(flat, gather.a), (b, n, 1))
        alpha = T.masked_softmax(scores, m[:, :, None] > 0, axis=1)
        return T.sum_(alpha * H, axis=1)
    raise ValueError(f"unknown gather kind {kind!r}")


class CompiledModel:
    """Three MPNN cells, skip projections, gather node and a dense head."""

    def __init__(self, p, n_node_features, n_edge_features, n_targets, n_max=None,
                 seed=0, table=DEFAULT_TABLE):
        self.p = table.validate(p)
        self.arch = decode(self.p, table)
        self.n_targets = n_targets
        self.n_max = n_max
        if self.arch.gather not in _NODE_REDUCING and n_max is None:
            raise ValueError(f"gather {self.arch.gather!r} needs n_max (its width depends on N)")
        reg = self.registry = ParamRegistry(np.random.default_rng(seed))
        widths = {"input": n_node_features}
        self.cells = []
        d_in = n_node_features
        for i, cfg in enumerate(self.arch.cells, 1):
            self.cells.append(MpnnCell(reg, f"cell{i}", cfg, d_in, n_edge_features))
            widths[f"cell{i}"] = d_in = cfg.state_dim
        self.skips = {}
        for target, main in (("cell2", "cell1"), ("cell3", "cell2"), ("gather", "cell3")):
            for src in self.arch.active_skips(target):
                self.skips[(src, target)] = Dense(reg, f"skip({src}->{target})",
                                                  widths[src], widths[main])
        self.gather = Gather(reg, self.arch.gather, n_max, widths["cell3"])
        self.head = [
            Dense(reg, "dense1", self.gather.out_width, DENSE_UNITS, "relu"),
            Dense(reg, "dense2", DENSE_UNITS, DENSE_UNITS, "relu"),
            Dense(reg, "output", DENSE_UNITS, n_targets),
        ]

    @property
    def params(self):
        return self.registry.params

    @property
    def n_params(self):
        return self.registry.count()

    STAGES = ("cell1", "cell2", "cell3", "gather", "head")

    def _with_skips(self, target, main, outputs, mask):
        x = main
        for (src, dst), proj in self.skips.items():
            if dst == target:
                x = x + proj(outputs[src])
        return x if x is main else x * mask

    def param_stage(self, name):
        """Index into :attr:`STAGES` of the first stage that reads parameter ``name``."""
        if name.startswith("skip("):
            name = name[name.index("->") + 2:]
        for i, stage in enumerate(self.STAGES[:3]):
            if name.startswith(stage):
                return i
        return 3 if name.startswith("gather") else 4

    def run(self, batch, outputs=None, start=0):
        """Evaluate stages ``start..`` and return every intermediate output.

        ``outputs`` from an earlier call supply the stages before ``start``,
        which lets callers re-evaluate only the tail of the network.
        """
        b, n, fn = batch.H.shape
        if self.n_max is not None and n != self.n_max:
            raise ValueError(f"batch padded to N={n}, model built for N={self.n_max}")
        g = batch.flat
        outputs = {} if outputs is None else dict(outputs)
        if start == 0:
            outputs["input"] = Tensor(batch.H.reshape(b * n, fn))
        for i, cell in enumerate(self.cells, 1):
            if i - 1 < start:
                continue
            x = outputs["input"] if i == 1 else self._with_skips(
                f"cell{i}", outputs[f"cell{i - 1}"], outputs, g.node_mask)
            outputs[f"cell{i}"] = cell(x, g)
        if start <= 3:
            x = self._with_skips("gather", outputs["cell3"], outputs, g.node_mask)
            outputs["gather"] = self.gather(T.reshape(x, (b, n, x.shape[-1])), batch.m)
        x = outputs["gather"]
        for layer in self.head:
            x = layer(x)
        outputs["head"] = x
        return outputs

    def __call__(self, batch):
        return self.run(batch)["head"]

    def predict(self, batches):
        return np.concatenate([self(b).data for b in batches], axis=0)

    def summary(self):
        lines = [f"architecture {','.join(map(str, self.p))}",
                 f"gather {self.arch.gather} -> width {self.gather.out_width}"]
        for i, cfg in enumerate(self.arch.cells, 1):
            lines.append(f"cell{i} " + " ".join(f"{k}={v}" for k, v in vars(cfg).items()))
        for src, dst in self.skips:
            lines.append(f"skip {src}->{dst}")
        lines.append(f"{'parameter':<36}{'shape':>16}{'count':>10}")
        for name, t in self.params.items():
            lines.append(f"{name:<36}{str(t.shape):>16}{t.size:>10}")
        lines.append(f"{'total':<36}{'':>16}{self.n_params:>10}")
        return "\n".join(lines)


def build(p, n_node_features, n_edge_features, n_targets, n_max=None, seed=0,
          table=DEFAULT_TABLE):
    return CompiledModel(p, n_node_features, n_edge_features, n_targets, n_max, seed, table)
