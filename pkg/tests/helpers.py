"""Shared oracles for the test suite.

Everything here is deliberately independent of the library's own math:
finite differences only call the forward function, and the scalar oracles
are plain Python loops.
"""

from __future__ import annotations

import numpy as np

from avloc.tensor import Tensor, backward


def finite_difference_check(build_loss, params, eps=1e-5, rtol=1e-4, atol=1e-7):
    """Compare analytic gradients of ``build_loss()`` against central differences.

    ``build_loss`` must rebuild the graph from ``params`` on every call and
    return a scalar Tensor. Raises AssertionError on mismatch.
    """
    for p in params:
        p.zero_grad()
    loss = build_loss()
    backward(loss)
    analytic = [np.array(p.grad, dtype=np.float64, copy=True) for p in params]

    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = build_loss().item()
            flat[i] = orig - eps
            lo = build_loss().item()
            flat[i] = orig
            num[i] = (hi - lo) / (2.0 * eps)
        num = num.reshape(p.data.shape)
        denom = np.maximum(np.abs(num), np.abs(grad))
        err = np.abs(grad - num)
        ok = err <= atol + rtol * denom
        assert ok.all(), (
            f"gradient mismatch for param shape {p.data.shape}: "
            f"max abs err {err.max():.3e}, analytic {grad.reshape(-1)[np.argmax(err)]}, "
            f"numeric {num.reshape(-1)[np.argmax(err)]}"
        )
    for p in params:
        p.zero_grad()


def matmul_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop scalar matrix product."""
    m, n = a.shape
    n2, p = b.shape
    assert n == n2
    out = np.zeros((m, p))
    for i in range(m):
        for j in range(p):
            acc = 0.0
            for t in range(n):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def softmax_oracle(x) -> np.ndarray:
    """Softmax at 50-digit precision via mpmath, rounded to float64."""
    import mpmath

    with mpmath.workdps(50):
        exps = [mpmath.e ** mpmath.mpf(float(v)) for v in x]
        total = mpmath.fsum(exps)
        return np.array([float(e / total) for e in exps])


def lstm_step_oracle(x, h_prev, c_prev, w, u, b):
    """Scalar-loop LSTM step. ``w``/``u``/``b`` are dicts over i, f, o, g."""

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    hid = len(h_prev)
    gates = {}
    for name in ("i", "f", "o", "g"):
        pre = np.zeros(hid)
        for r in range(hid):
            acc = b[name][r]
            for col in range(len(x)):
                acc += w[name][r, col] * x[col]
            for col in range(hid):
                acc += u[name][r, col] * h_prev[col]
            pre[r] = acc
        gates[name] = np.tanh(pre) if name == "g" else sig(pre)
    c = gates["f"] * c_prev + gates["i"] * gates["g"]
    h = gates["o"] * np.tanh(c)
    return h, c


def dmrn_oracle(h_a, h_v, wa, wv, b):
    """Scalar-loop evaluation of the dual residual update."""
    hid = len(h_a)
    u = np.zeros(hid)
    for r in range(hid):
        acc = b[r]
        for col in range(hid):
            acc += wa[r, col] * h_a[col] + wv[r, col] * h_v[col]
        u[r] = np.tanh(acc)
    a_new = np.tanh(h_a + u)
    v_new = np.tanh(h_v + u)
    return a_new, v_new, 0.5 * (a_new + v_new)


def euclidean_oracle(a, b) -> float:
    acc = 0.0
    for x, y in zip(a, b):
        acc += (x - y) ** 2
    return float(np.sqrt(acc))


def contrastive_oracle(d: float, y: int, margin: float) -> float:
    if y == 1:
        return d * d
    gap = margin - d
    return gap * gap if gap > 0 else 0.0


def sliding_window_oracle(dist, T: int, length: int) -> tuple[int, float]:
    """Exhaustive cumulative-distance minimizer.

    ``dist(target_index, query_index)`` uses 0-based indices; returns the
    1-based best start and its cumulative distance.
    """
    best_t, best_cost = None, None
    for t in range(1, T - length + 2):
        cost = 0.0
        for s in range(1, length + 1):
            cost += dist(t + s - 2, s - 1)
        if best_cost is None or cost < best_cost:
            best_t, best_cost = t, cost
    return best_t, best_cost
