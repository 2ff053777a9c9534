"""Train a small fixed architecture on edge counting."""
from mpnnas.graphs import SplitSpec, make_synthetic, pad_and_batch, padding_sizes, split
from mpnnas.model import build
from mpnnas.space import Architecture, MpnnCellConfig, decode, encode
from mpnnas.training import TrainConfig, train

recs = make_synthetic("edge-count", 200, 8, seed=0, n_node_features=4, n_edge_features=2)
n_max, e_max = padding_sizes(recs)
tr, va, _ = split(recs, SplitSpec(seed=0))
cell = MpnnCellConfig(16, "constant", 1, "sum", "relu", "gru", 2)
p = encode(Architecture((cell,) * 3, {a: False for a in decode((0,) * 10).skips}, "gather-sum"))

model = build(p, 4, 2, 1, n_max=n_max, seed=0)
cfg = TrainConfig(epochs=30, learning_rate=3e-3)
rec = train(model, pad_and_batch(tr, n_max, e_max, 32), pad_and_batch(va, n_max, e_max, 32), cfg)
print("train loss by epoch", [round(x, 3) for x in rec.train_losses])
print("validation reward (negative MAE)", round(rec.reward, 3))
