"""Compile an architecture vector into a network and run a forward pass."""
from mpnnas.graphs import make_synthetic, pad_and_batch, padding_sizes
from mpnnas.model import build
from mpnnas.space import sample_uniform

recs = make_synthetic("edge-count", 20, 6, seed=1, n_node_features=4, n_edge_features=2)
n_max, e_max = padding_sizes(recs)
batch = pad_and_batch(recs, n_max, e_max, batch_size=8)[0]

model = build(sample_uniform(seed=11), 4, 2, 1, n_max=n_max, seed=0)
print(model.summary())
print("predictions", model(batch).data.ravel())
