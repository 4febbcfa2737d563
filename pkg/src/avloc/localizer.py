"""Supervised and weakly-supervised segment localization.

Model variants follow the A / V / V-att / A+V / A+V-att naming: audio
only, visual only (region-averaged), attention-pooled visual, and the two
fused audio-visual forms. A ``W-`` prefix marks weak supervision, where
only the video-level tag is available and per-segment predictions are
pooled by averaging before the video-level cross-entropy.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import GuidedAttention
from .data import DatasetSplit, FeatureSequence
from .errors import ConfigError, ContractError, TrainingDivergedError
from .fusion import FusionSpec, place_fusion
from .layers import Dense
from .lstm import LstmCell
from .tensor import Adam, Tensor, no_grad

VARIANTS = ("A", "V", "V-att", "A+V", "A+V-att")
TASKS = ("supervised", "weak")


def parse_variant(name: str) -> tuple[str, bool]:
    """Split an optional ``W-`` weak prefix off a Table-style variant name."""
    weak = name.startswith("W-")
    base = name[2:] if weak else name
    if base not in VARIANTS:
        raise ConfigError(
            f"unknown model variant {name!r}; valid: "
            + ", ".join(list(VARIANTS) + ["W-" + v for v in VARIANTS])
        )
    return base, weak


@dataclass
class ModelConfig:
    variant: str = "A+V-att"
    num_classes: int = 6
    d_v: int = 512
    k: int = 49
    d_a: int = 128
    hidden_dim: int = 128
    att_proj_dim: int = 128
    att_score_dim: int = 64
    fusion: FusionSpec = field(default_factory=FusionSpec)
    bidirectional: bool = False  # reserved, must stay off
    seed: int = 0

    def validate(self) -> None:
        base, _ = parse_variant(self.variant)
        if self.bidirectional:
            raise ConfigError("bidirectional LSTMs are reserved for future work")
        for name in ("num_classes", "d_v", "k", "d_a", "hidden_dim",
                     "att_proj_dim", "att_score_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if base in ("A+V", "A+V-att"):
            self.fusion.validate()

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["fusion"] = FusionSpec(**d["fusion"])
        return cls(**d)


class LocalizerModel:
    """Per-segment class scorer assembled from the variant's pieces."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        self.variant, _ = parse_variant(config.variant)
        rng = np.random.default_rng(config.seed)
        c = config.num_classes

        self.attention = None
        if self.variant.endswith("-att"):
            self.attention = GuidedAttention(
                config.d_v, config.d_a,
                proj_dim=config.att_proj_dim, score_dim=config.att_score_dim, rng=rng)

        self.pipeline = None
        self.lstm = None
        self.head = None
        if self.variant in ("A+V", "A+V-att"):
            self.pipeline = place_fusion(
                config.fusion, config.d_a, config.d_v, c,
                hidden_dim=config.hidden_dim, rng=rng)
            self.output_kind = self.pipeline.output_kind
        else:
            in_dim = config.d_a if self.variant == "A" else config.d_v
            self.lstm = LstmCell(in_dim, config.hidden_dim, rng)
            self.head = Dense(config.hidden_dim, c, rng)
            self.output_kind = "logits"

    # ---- feature streams ----------------------------------------------

    def _visual_inputs(self, seq: FeatureSequence) -> list[Tensor]:
        if self.attention is not None:
            out = []
            for t in range(seq.T):
                ctx, _ = self.attention(Tensor(seq.visual[t]), Tensor(seq.audio[t]))
                out.append(ctx)
            return out
        pooled = seq.visual.mean(axis=2)
        return [Tensor(pooled[t]) for t in range(seq.T)]

    def forward_segments(self, seq: FeatureSequence) -> list[Tensor]:
        """One class-score vector per segment (logits, or probabilities
        when the fusion operator owns its own heads)."""
        if seq.d_a != self.config.d_a or seq.d_v != self.config.d_v:
            raise ContractError(
                f"feature dims ({seq.d_v}, {seq.d_a}) do not match model "
                f"({self.config.d_v}, {self.config.d_a})"
            )
        if self.variant == "A":
            inputs = [Tensor(seq.audio[t]) for t in range(seq.T)]
        elif self.variant in ("V", "V-att"):
            inputs = self._visual_inputs(seq)
        else:
            audio = [Tensor(seq.audio[t]) for t in range(seq.T)]
            return self.pipeline.run(audio, self._visual_inputs(seq))

        h, c = self.lstm.zero_state()
        out = []
        for x in inputs:
            h, c = self.lstm.step(x, h, c)
            out.append(self.head(h))
        return out

    def attention_maps(self, seq: FeatureSequence) -> list[np.ndarray]:
        """Per-segment attention weights; only for -att variants."""
        if self.attention is None:
            raise ConfigError(f"variant {self.variant} has no attention stage")
        maps = []
        with no_grad():
            for t in range(seq.T):
                _, att = self.attention(Tensor(seq.visual[t]), Tensor(seq.audio[t]))
                maps.append(att.data.copy())
        return maps

    # ---- parameters -----------------------------------------------------

    def params(self) -> list[Tensor]:
        out = []
        if self.attention is not None:
            out.extend(self.attention.params())
        if self.pipeline is not None:
            out.extend(self.pipeline.params())
        if self.lstm is not None:
            out.extend(self.lstm.params())
        if self.head is not None:
            out.extend(self.head.params())
        return out

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        if self.attention is not None:
            out.extend(self.attention.named_params("attention"))
        if self.pipeline is not None:
            out.extend(self.pipeline.named_params("pipeline"))
        if self.lstm is not None:
            out.extend(self.lstm.named_params("lstm"))
        if self.head is not None:
            out.extend(self.head.named_params("head"))
        return out

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, data in zip(self.params(), snapshot):
            p.data = data.copy()


# ---------------------------------------------------------------------------
# losses, pooling, prediction, metrics


def _segment_nll(output: Tensor, label: int, kind: str) -> Tensor:
    if kind == "logits":
        return T.cross_entropy_with_logits(output, label)
    return T.scale(T.log(T.pick(output, label)), -1.0)


def supervised_loss(outputs: list[Tensor], labels: np.ndarray,
                    kind: str = "logits") -> Tensor:
    """Mean over segments of the per-segment cross-entropy."""
    if len(outputs) != len(labels):
        raise ContractError("one label per segment output required")
    total = None
    for out, label in zip(outputs, labels):
        nll = _segment_nll(out, int(label), kind)
        total = nll if total is None else T.add(total, nll)
    return T.scale(total, 1.0 / len(outputs))


def mil_pool(outputs: list[Tensor]) -> Tensor:
    """Elementwise mean of the per-segment prediction vectors."""
    if not outputs:
        raise ContractError("mil pooling needs at least one segment")
    total = outputs[0]
    for out in outputs[1:]:
        total = T.add(total, out)
    return T.scale(total, 1.0 / len(outputs))


def weak_loss(outputs: list[Tensor], video_label: int, kind: str = "logits") -> Tensor:
    """Cross-entropy of the pooled video-level prediction."""
    return _segment_nll(mil_pool(outputs), video_label, kind)


def predict_segments(model: LocalizerModel, seq: FeatureSequence) -> np.ndarray:
    """Argmax class per segment; ties resolve to the lowest class index."""
    with no_grad():
        outputs = model.forward_segments(seq)
    return np.array([int(np.argmax(o.data)) for o in outputs])


def overall_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size == 0:
        raise ContractError("cannot score an empty evaluation set")
    if predictions.shape != labels.shape:
        raise ContractError("prediction/label lengths disagree")
    return float((predictions == labels).mean())


def evaluate(model: LocalizerModel, seqs: list[FeatureSequence],
             threads: int | None = None) -> float:
    """Segment accuracy over a corpus; fans out across AVEL_THREADS workers."""
    if not seqs:
        raise ContractError("cannot score an empty evaluation set")
    if threads is None:
        threads = int(os.environ.get("AVEL_THREADS", "1"))
    threads = max(1, min(threads, len(seqs)))
    with no_grad():
        if threads == 1:
            preds = [predict_segments(model, s) for s in seqs]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                preds = list(pool.map(lambda s: predict_segments(model, s), seqs))
    correct = sum(int((p == s.segment_labels).sum()) for p, s in zip(preds, seqs))
    total = sum(s.T for s in seqs)
    return correct / total


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    task: str = "supervised"
    patience: int = 10

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; valid: {', '.join(TASKS)}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0 or self.patience < 1:
            raise ConfigError("train config values must be positive")


@dataclass
class TrainReport:
    task: str
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_accuracy: float | None = None

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump({
                "task": self.task,
                "best_epoch": self.best_epoch,
                "best_val_accuracy": self.best_val_accuracy,
                "epochs": self.epochs,
            }, f, indent=2)

    def to_csv(self, path: str | Path) -> None:
        fields = ["epoch", "train_loss", "train_accuracy", "val_accuracy"]
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            for row in self.epochs:
                writer.writerow({k: row.get(k) for k in fields})


def _video_loss_and_preds(model, seq, task):
    outputs = model.forward_segments(seq)
    if task == "supervised":
        loss = supervised_loss(outputs, seq.segment_labels, model.output_kind)
    else:
        loss = weak_loss(outputs, seq.video_label, model.output_kind)
    preds = np.array([int(np.argmax(o.data)) for o in outputs])
    return loss, preds


def train(model: LocalizerModel, data: DatasetSplit, config: TrainConfig) -> TrainReport:
    """Adam training over per-video examples, deterministic under the seed.

    The best-on-validation parameters are restored into the model before
    returning; with an empty validation split the final parameters stand
    and early stopping is disabled.
    """
    config.validate()
    report = TrainReport(task=config.task)
    if config.epochs == 0:
        return report

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params(), lr=config.lr)
    train_videos = data.train
    if not train_videos:
        raise ContractError("training split is empty")

    best_acc = -1.0
    best_snapshot = None
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_videos))
        losses = []
        correct = 0
        total = 0
        for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start:start + config.batch_size]
            batch_loss = None
            for vi in batch:
                seq = train_videos[vi]
                loss, preds = _video_loss_and_preds(model, seq, config.task)
                batch_loss = loss if batch_loss is None else T.add(batch_loss, loss)
                correct += int((preds == seq.segment_labels).sum())
                total += seq.T
            batch_loss = T.scale(batch_loss, 1.0 / len(batch))
            if not np.isfinite(batch_loss.item()):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}",
                    epoch=epoch, batch=batch_no)
            T.backward(batch_loss)
            optimizer.step()
            losses.append(batch_loss.item())

        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "train_accuracy": correct / total,
            "val_accuracy": None,
        }
        if data.val:
            val_acc = evaluate(model, data.val)
            row["val_accuracy"] = val_acc
            if val_acc > best_acc:
                best_acc = val_acc
                best_snapshot = model.snapshot()
                report.best_epoch = epoch
                report.best_val_accuracy = val_acc
                stale = 0
            else:
                stale += 1
        report.epochs.append(row)
        if data.val and stale >= config.patience:
            break

    if best_snapshot is not None:
        model.restore(best_snapshot)
    else:
        report.best_epoch = len(report.epochs)
    return report
