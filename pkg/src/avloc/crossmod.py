"""Audio-visual distance learning and sliding-window cross-modality search.

Two two-layer branches embed the region-averaged visual vector and the
audio vector into one space; synchronized pairs are pulled together and
mismatched pairs pushed apart by a margin contrastive loss. At query time
a window of one modality slides over the other and the start minimizing
the cumulative embedding distance wins (1-based, ties to the earliest).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import FeatureSequence, PairBatch, pooled_visual
from .errors import ConfigError, ContractError, TrainingDivergedError
from .layers import Dense
from .tensor import Adam, Tensor, no_grad

DIRECTIONS = ("A2V", "V2A")


@dataclass
class AvdlnConfig:
    d_v: int = 512
    d_a: int = 128
    hidden_dim: int = 256
    embed_dim: int = 128
    margin: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("d_v", "d_a", "hidden_dim", "embed_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.margin <= 0:
            raise ConfigError("margin must be positive")

    def to_dict(self) -> dict:
        return {
            "d_v": self.d_v, "d_a": self.d_a, "hidden_dim": self.hidden_dim,
            "embed_dim": self.embed_dim, "margin": self.margin, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AvdlnConfig":
        return cls(**d)


class AvdlnModel:
    """Two-branch embedding network with a shared output dimension."""

    def __init__(self, config: AvdlnConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.visual_in = Dense(config.d_v, config.hidden_dim, rng)
        self.visual_out = Dense(config.hidden_dim, config.embed_dim, rng)
        self.audio_in = Dense(config.d_a, config.hidden_dim, rng)
        self.audio_out = Dense(config.hidden_dim, config.embed_dim, rng)

    def embed_visual(self, x: Tensor) -> Tensor:
        return self.visual_out(T.relu(self.visual_in(x)))

    def embed_audio(self, x: Tensor) -> Tensor:
        return self.audio_out(T.relu(self.audio_in(x)))

    def distance(self, visual_feat: Tensor, audio_feat: Tensor) -> Tensor:
        """Euclidean distance between the two branch embeddings."""
        diff = T.sub(self.embed_visual(visual_feat), self.embed_audio(audio_feat))
        return T.sqrt(T.reduce_sum(T.mul(diff, diff)))

    def params(self) -> list[Tensor]:
        return (self.visual_in.params() + self.visual_out.params()
                + self.audio_in.params() + self.audio_out.params())

    def named_params(self) -> list[tuple[str, Tensor]]:
        return (self.visual_in.named_params("visual_in")
                + self.visual_out.named_params("visual_out")
                + self.audio_in.named_params("audio_in")
                + self.audio_out.named_params("audio_out"))

    # numpy fast paths for evaluation-time embedding of many segments
    def embed_visual_np(self, x: np.ndarray) -> np.ndarray:
        h = x @ self.visual_in.weight.data.T + self.visual_in.bias.data
        return np.maximum(h, 0.0) @ self.visual_out.weight.data.T + self.visual_out.bias.data

    def embed_audio_np(self, x: np.ndarray) -> np.ndarray:
        h = x @ self.audio_in.weight.data.T + self.audio_in.bias.data
        return np.maximum(h, 0.0) @ self.audio_out.weight.data.T + self.audio_out.bias.data


def contrastive_loss(distance: Tensor, label: int, margin: float) -> Tensor:
    """y d^2 + (1 - y) max(0, margin - d)^2 for one pair."""
    if label not in (0, 1):
        raise ContractError(f"pair label must be 0 or 1, got {label}")
    if margin <= 0:
        raise ContractError("margin must be positive")
    if label == 1:
        return T.mul(distance, distance)
    gap = T.relu(T.sub(Tensor(np.asarray(margin)), distance))
    return T.mul(gap, gap)


# ---------------------------------------------------------------------------
# sliding-window localization


def localize(model: AvdlnModel, query: np.ndarray, target: np.ndarray,
             direction: str) -> tuple[int, float]:
    """Best 1-based window start of ``query`` inside ``target``.

    A2V slides an audio query of shape (l, d_a) over T visual vectors of
    shape (T, d_v); V2A is the mirror. Returns ``(t_star, cumulative
    distance)`` with ties resolved to the smallest start.
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}")
    length, total = len(query), len(target)
    if length < 1 or length > total:
        raise ContractError(f"window length {length} outside [1, {total}]")
    with no_grad():
        if direction == "A2V":
            q_emb = model.embed_audio_np(query)
            t_emb = model.embed_visual_np(target)
        else:
            q_emb = model.embed_visual_np(query)
            t_emb = model.embed_audio_np(target)
    # dist[i, s] = ||t_emb[i] - q_emb[s]||
    diffs = t_emb[:, None, :] - q_emb[None, :, :]
    dist = np.sqrt((diffs * diffs).sum(axis=2))
    costs = np.array([
        sum(dist[t + s, s] for s in range(length))
        for t in range(total - length + 1)
    ])
    best = int(np.argmin(costs))
    return best + 1, float(costs[best])


@dataclass
class LocalizationCase:
    """One evaluation query: an event window of one modality plus truth."""

    video_id: str
    direction: str
    query: np.ndarray
    target: np.ndarray
    ground_truth: int  # 1-based start


def build_eval_cases(corpus: list[FeatureSequence], direction: str,
                     window: int | None = None) -> list[LocalizationCase]:
    """Turn short-event videos into localization queries.

    The query is the event's own span (length overridable via ``window``)
    in the query modality; the target is the full sequence of the other
    modality. Videos whose event fills the whole sequence are skipped.
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}")
    cases = []
    for seq in corpus:
        interval = seq.event_interval()
        if interval is None:
            continue
        s, e = interval
        length = e - s + 1 if window is None else window
        if length >= seq.T or length < 1 or s + length > seq.T:
            continue
        visual = pooled_visual(seq)
        if direction == "A2V":
            query, target = seq.audio[s:s + length], visual
        else:
            query, target = visual[s:s + length], seq.audio
        cases.append(LocalizationCase(seq.video_id, direction, query, target, s + 1))
    return cases


def matching_accuracy(model: AvdlnModel, cases: list[LocalizationCase]) -> float:
    """Fraction of queries whose predicted start exactly matches truth."""
    if not cases:
        raise ContractError("cannot score an empty evaluation set")
    hits = 0
    for case in cases:
        t_star, _ = localize(model, case.query, case.target, case.direction)
        hits += int(t_star == case.ground_truth)
    return hits / len(cases)


def write_localization_results(model: AvdlnModel, cases: list[LocalizationCase],
                               path: str | Path) -> int:
    """One JSON line per query; returns the number of exact matches."""
    hits = 0
    with open(path, "w") as f:
        for case in cases:
            t_star, cost = localize(model, case.query, case.target, case.direction)
            hit = t_star == case.ground_truth
            hits += int(hit)
            f.write(json.dumps({
                "video_id": case.video_id,
                "direction": case.direction,
                "l": len(case.query),
                "t_star": t_star,
                "cumulative_distance": cost,
                "ground_truth": case.ground_truth,
                "hit": hit,
            }) + "\n")
    return hits


# ---------------------------------------------------------------------------
# pair training


@dataclass
class PairTrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("train config values must be positive")


@dataclass
class PairTrainReport:
    epochs: list[dict] = field(default_factory=list)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump({"epochs": self.epochs}, f, indent=2)


def mean_pair_distances(model: AvdlnModel, pairs: PairBatch) -> tuple[float, float]:
    """(mean positive distance, mean negative distance) over a batch."""
    with no_grad():
        v = model.embed_visual_np(pairs.visual)
        a = model.embed_audio_np(pairs.audio)
    d = np.sqrt(((v - a) ** 2).sum(axis=1))
    pos = d[pairs.labels == 1]
    neg = d[pairs.labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ContractError("pair batch needs both positives and negatives")
    return float(pos.mean()), float(neg.mean())


def train_pairs(model: AvdlnModel, pairs: PairBatch,
                config: PairTrainConfig) -> PairTrainReport:
    """Contrastive training over a pair batch, deterministic under the seed."""
    config.validate()
    report = PairTrainReport()
    if config.epochs == 0:
        return report
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params(), lr=config.lr)
    margin = model.config.margin
    n = len(pairs)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            batch = order[start:start + config.batch_size]
            batch_loss = None
            for i in batch:
                d = model.distance(Tensor(pairs.visual[i]), Tensor(pairs.audio[i]))
                loss = contrastive_loss(d, int(pairs.labels[i]), margin)
                batch_loss = loss if batch_loss is None else T.add(batch_loss, loss)
            batch_loss = T.scale(batch_loss, 1.0 / len(batch))
            if not np.isfinite(batch_loss.item()):
                raise TrainingDivergedError(
                    f"non-finite pair loss at epoch {epoch}, batch {batch_no}",
                    epoch=epoch, batch=batch_no)
            T.backward(batch_loss)
            optimizer.step()
            losses.append(batch_loss.item())
        pos_d, neg_d = mean_pair_distances(model, pairs)
        report.epochs.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "mean_positive_distance": pos_d,
            "mean_negative_distance": neg_d,
        })
    return report
