import numpy as np
import pytest

from mpnnas import tensor as T


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * eps)
    return g


def kink_aware_grad(f, x, analytic, tol=1e-3, eps=1e-5, fine=1e-7, floor=1e-8):
    """Central differences at step ``eps``; coordinates that disagree with ``analytic``
    and whose one-sided slopes differ (the step straddles a ReLU or max switch) are
    re-measured at step ``fine``. Returns ``(numeric, n_refined)``."""
    num = numeric_grad(f, x, eps)
    flat, nf, af = x.reshape(-1), num.reshape(-1), np.asarray(analytic).reshape(-1)
    refined = 0
    for i in range(flat.size):
        if rel_err(af[i], nf[i], floor) <= tol:
            continue
        old = flat[i]
        f0 = f()
        flat[i] = old + eps
        right = (f() - f0) / eps
        flat[i] = old - eps
        left = (f0 - f()) / eps
        flat[i] = old
        if rel_err(right, left, floor) > tol:
            nf[i] = _central(f, flat, i, fine)
            refined += 1
    return num, refined


def _central(f, flat, i, eps):
    old = flat[i]
    flat[i] = old + eps
    fp = f()
    flat[i] = old - eps
    fm = f()
    flat[i] = old
    return (fp - fm) / (2 * eps)


def rel_err(a, b, floor=1e-8):
    """Largest elementwise relative error, ignoring entries below ``floor`` absolute."""
    a, b = np.asarray(a), np.asarray(b)
    diff = np.abs(a - b)
    scale = np.maximum(np.abs(a), np.abs(b))
    ok = diff <= floor
    return float(np.max(np.where(ok, 0.0, diff / np.maximum(scale, 1e-300)), initial=0.0))


def check_grads(fn, arrays, seed=0, tol=1e-3):
    """Compare tape gradients of ``sum(fn(*tensors) * w)`` to finite differences.

    Entries below the finite-difference noise floor are not compared."""
    ts = [T.Tensor(a, requires_grad=True) for a in arrays]
    with T.Tape() as tape:
        out = fn(*ts)
        w = np.random.default_rng(seed).normal(size=out.shape)
        loss = T.sum_(out * w)
        grads = tape.backward(loss, ts)
    # central-difference roundoff grows with the summed magnitude of the loss terms
    floor = max(1e-8, 1e-10 * float(np.sum(np.abs(out.data * w))))
    for t in ts:
        num = numeric_grad(lambda: float(np.sum(fn(*[T.Tensor(s.data) for s in ts]).data * w)),
                           t.data)
        assert rel_err(grads[t], num, floor) <= tol, (grads[t], num)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
