"""Reverse-mode gradients on a tape, checked against central differences."""
import numpy as np

from mpnnas import tensor as T

rng = np.random.default_rng(0)
W = T.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
x = T.Tensor(rng.normal(size=(4, 3)))

def loss_of(w):
    return T.sum_(T.tanh(T.matmul(x, w)))

with T.Tape() as tape:
    loss = loss_of(W)
    g = tape.backward(loss, [W])[W]

eps = 1e-5
num = np.zeros_like(W.data)
for i in np.ndindex(W.shape):
    old = W.data[i]
    W.data[i] = old + eps
    fp = loss_of(T.Tensor(W.data)).data
    W.data[i] = old - eps
    fm = loss_of(T.Tensor(W.data)).data
    W.data[i] = old
    num[i] = (fp - fm) / (2 * eps)

print("tape gradient\n", g)
print("max abs difference vs finite differences:", np.abs(g - num).max())
