"""Guided spatial attention over region feature maps.

One modality's feature map (channels x regions) is pooled into a context
vector under a probability distribution scored against a guide vector
from the other modality. Scores are additive-MLP style: per region i,

    x_i = w_f . tanh(W_m p_i + W_g g),   p_i = tanh(U_m m_i + b_m),
                                         g   = tanh(U_g guide + b_g)

with att = softmax(x) and context = sum_i att_i m_i. The region
projection U_m applies per region; the guide term is shared across
regions.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DimensionError, UnavailableFeatureError
from .layers import Dense, uniform_init
from .tensor import Tensor


class GuidedAttention:
    """Attention parameters for one guide/map direction."""

    def __init__(self, map_channels: int, guide_dim: int,
                 proj_dim: int = 128, score_dim: int = 64,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.map_channels = map_channels
        self.guide_dim = guide_dim
        self.proj_map = Dense(map_channels, proj_dim, rng)      # U_m
        self.proj_guide = Dense(guide_dim, proj_dim, rng)       # U_g
        self.score_map = uniform_init(rng, (score_dim, proj_dim), proj_dim)    # W_m
        self.score_guide = uniform_init(rng, (score_dim, proj_dim), proj_dim)  # W_g
        self.score_out = uniform_init(rng, (score_dim,), score_dim)            # w_f

    def __call__(self, feature_map: Tensor, guide: Tensor) -> tuple[Tensor, Tensor]:
        """Attend over ``feature_map`` (channels x regions) with ``guide``.

        Returns (context vector over channels, attention weights over
        regions). The weights always lie on the probability simplex.
        """
        if feature_map.ndim != 2 or feature_map.shape[0] != self.map_channels:
            raise DimensionError(
                f"attention: map shape {feature_map.shape}, expected "
                f"({self.map_channels}, regions)"
            )
        if guide.shape != (self.guide_dim,):
            raise DimensionError(
                f"attention: guide shape {guide.shape}, expected ({self.guide_dim},)"
            )
        regions = feature_map.T                                # (k, channels)
        p = T.tanh(self.proj_map(regions))                     # (k, d)
        g = T.tanh(self.proj_guide(guide))                     # (d,)
        hidden = T.tanh(T.add(T.matmul(p, self.score_map.T),
                              T.matmul(self.score_guide, g)))  # (k, h) + (h,)
        scores = T.matmul(hidden, self.score_out)              # (k,)
        att = T.softmax(scores)
        context = T.matmul(feature_map, att)                   # (channels,)
        return context, att

    def params(self) -> list[Tensor]:
        return (self.proj_map.params() + self.proj_guide.params()
                + [self.score_map, self.score_guide, self.score_out])

    def named_params(self, prefix: str) -> list[tuple[str, Tensor]]:
        return (self.proj_map.named_params(f"{prefix}.proj_map")
                + self.proj_guide.named_params(f"{prefix}.proj_guide")
                + [(f"{prefix}.score_map", self.score_map),
                   (f"{prefix}.score_guide", self.score_guide),
                   (f"{prefix}.score_out", self.score_out)])


def audio_guided_visual(att: GuidedAttention, visual_map: Tensor,
                        audio_vec: Tensor) -> tuple[Tensor, Tensor]:
    """Pool a visual map under attention guided by the audio vector."""
    return att(visual_map, audio_vec)


def visual_guided_audio(att: GuidedAttention, audio_map: Tensor | None,
                        visual_vec: Tensor) -> tuple[Tensor, Tensor]:
    """Pool an audio spatial map under attention guided by a visual vector.

    Requires the optional audio spatial feature block; sequences written
    without it cannot drive this direction.
    """
    if audio_map is None:
        raise UnavailableFeatureError(
            "visual-guided audio attention needs the audio spatial feature block"
        )
    return att(audio_map, visual_vec)


def co_attend(visual_att: GuidedAttention, audio_att: GuidedAttention,
              visual_map: Tensor, audio_map: Tensor | None) -> tuple[Tensor, Tensor]:
    """Run both attention directions independently.

    Each direction is guided by the region average of the other modality's
    map. Returns (attended visual vector, attended audio vector).
    """
    if audio_map is None:
        raise UnavailableFeatureError(
            "co-attention needs the audio spatial feature block"
        )
    audio_guide = T.reduce_mean(audio_map, axis=1)
    visual_guide = T.reduce_mean(visual_map, axis=1)
    v_ctx, _ = visual_att(visual_map, audio_guide)
    a_ctx, _ = audio_att(audio_map, visual_guide)
    return v_ctx, a_ctx


def global_average_pool(feature_map: Tensor) -> Tensor:
    """The no-attention baseline: uniform mean over regions."""
    if feature_map.ndim != 2:
        raise DimensionError(f"expected channels x regions map, got {feature_map.shape}")
    return T.reduce_mean(feature_map, axis=1)


# ---------------------------------------------------------------------------
# inspection exports


def write_attention_csv(weights_per_segment: list[np.ndarray], path: str | Path) -> None:
    """One CSV row of k weights per segment."""
    with open(path, "w") as f:
        for w in weights_per_segment:
            f.write(",".join(f"{x:.10g}" for x in np.asarray(w)) + "\n")


def write_attention_pgm(weights: np.ndarray, path: str | Path) -> None:
    """Binary PGM (P5) of one segment's weights, min-max scaled to 0..255.

    k weights are laid out as a sqrt(k) x sqrt(k) grid when k is a perfect
    square (7x7 for the default 49 regions), otherwise as a single row.
    """
    w = np.asarray(weights, dtype=np.float64)
    side = math.isqrt(w.size)
    if side * side == w.size:
        grid = w.reshape(side, side)
    else:
        grid = w.reshape(1, w.size)
    lo, hi = grid.min(), grid.max()
    if hi > lo:
        scaled = np.round((grid - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(grid)
    with open(path, "wb") as f:
        f.write(f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode())
        f.write(scaled.astype(np.uint8).tobytes())


def read_attention_pgm(path: str | Path) -> np.ndarray:
    """Parse back a P5 file written by :func:`write_attention_pgm`."""
    raw = Path(path).read_bytes()
    header, rest = raw.split(b"\n255\n", 1)
    magic, dims = header.split(b"\n")
    assert magic == b"P5"
    w, h = (int(x) for x in dims.split())
    return np.frombuffer(rest, dtype=np.uint8, count=w * h).reshape(h, w)
