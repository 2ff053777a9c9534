"""Synthetic graphs, a seeded split, and the padded batch layout."""
from mpnnas.graphs import SplitSpec, make_synthetic, pad_and_batch, padding_sizes, split

recs = make_synthetic("edge-count", 50, 8, seed=0, n_node_features=5, n_edge_features=2)
tr, va, te = split(recs, SplitSpec(seed=0))
print(f"{len(tr)} train / {len(va)} valid / {len(te)} test")

n_max, e_max = padding_sizes(recs)
b = pad_and_batch(tr, n_max, e_max, batch_size=16)[0]
print("H", b.H.shape, "mask", b.m.shape, "targets", b.Y.shape)
print("first graph: real nodes", int(b.m[0].sum()), "target", b.Y[0, 0])
