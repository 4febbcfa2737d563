"""Small parameterized building blocks shared by the model modules."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    """Parameter drawn from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Dense:
    """Affine map y = W x + b for a vector, or X W^T + b row-wise for a matrix."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.weight = uniform_init(rng, (out_dim, in_dim), in_dim)
        self.bias = uniform_init(rng, (out_dim,), in_dim) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            out = T.matmul(self.weight, x)
        else:
            out = T.matmul(x, self.weight.T)
        if self.bias is not None:
            out = T.add(out, self.bias)
        return out

    def params(self) -> list[Tensor]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def named_params(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.weight", self.weight)]
        if self.bias is not None:
            out.append((f"{prefix}.bias", self.bias))
        return out
