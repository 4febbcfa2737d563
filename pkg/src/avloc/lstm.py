"""Single-layer unidirectional LSTM for per-modality temporal modeling."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .layers import uniform_init
from .tensor import Tensor

GATES = ("i", "f", "o", "g")


class LstmCell:
    """Standard LSTM cell: sigmoid input/forget/output gates, tanh candidate.

    The forget-gate bias starts at 1.0; every other parameter is drawn
    uniform within +-1/sqrt(fan_in).
    """

    def __init__(self, input_dim: int, hidden_dim: int = 128,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w = {}  # input projections, (H, input_dim)
        self.u = {}  # recurrent projections, (H, H)
        self.b = {}  # biases, (H,)
        for gate in GATES:
            self.w[gate] = uniform_init(rng, (hidden_dim, input_dim), input_dim)
            self.u[gate] = uniform_init(rng, (hidden_dim, hidden_dim), hidden_dim)
            self.b[gate] = uniform_init(rng, (hidden_dim,), input_dim)
        self.b["f"].data[:] = 1.0

    def zero_state(self) -> tuple[Tensor, Tensor]:
        z = np.zeros(self.hidden_dim)
        return Tensor(z), Tensor(z.copy())

    def step(self, x: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
        """One recurrence update; returns (h_t, c_t)."""
        if x.shape != (self.input_dim,):
            raise DimensionError(f"lstm step: input {x.shape}, expected ({self.input_dim},)")
        if h_prev.shape != (self.hidden_dim,) or c_prev.shape != (self.hidden_dim,):
            raise DimensionError(
                f"lstm step: state {h_prev.shape}/{c_prev.shape}, "
                f"expected ({self.hidden_dim},)"
            )
        pre = {
            gate: T.add(T.add(T.matmul(self.w[gate], x), T.matmul(self.u[gate], h_prev)),
                        self.b[gate])
            for gate in GATES
        }
        i = T.sigmoid(pre["i"])
        f = T.sigmoid(pre["f"])
        o = T.sigmoid(pre["o"])
        g = T.tanh(pre["g"])
        c = T.add(T.mul(f, c_prev), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
        return h, c

    def params(self) -> list[Tensor]:
        out = []
        for gate in GATES:
            out.extend([self.w[gate], self.u[gate], self.b[gate]])
        return out

    def named_params(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for gate in GATES:
            out.append((f"{prefix}.w_{gate}", self.w[gate]))
            out.append((f"{prefix}.u_{gate}", self.u[gate]))
            out.append((f"{prefix}.b_{gate}", self.b[gate]))
        return out


def run_sequence(cell: LstmCell, inputs: list[Tensor]) -> list[Tensor]:
    """Unroll from zero states; returns the hidden state at every step."""
    if not inputs:
        raise DimensionError("run_sequence: need at least one input")
    h, c = cell.zero_state()
    hs = []
    for x in inputs:
        h, c = cell.step(x, h, c)
        hs.append(h)
    return hs
