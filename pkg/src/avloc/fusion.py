"""Audio-visual feature fusion operators and their pipeline placements.

Ten operators share one calling convention: construct with the two input
dimensions and a joint output dimension, then ``fuse(h_a, h_v)``. The
residual operators (mrn, dmrn, dmrfe) need equal-width branches, so they
project their inputs to the joint dimension first whenever the widths
differ. Exact formulas are listed in the README model reference.

Placements wire operators into the segment pipeline: early fuses raw
per-segment features and runs one shared LSTM on the joint sequence; late
runs two per-modality LSTMs and fuses their hidden states; decision fuses
the two per-modality class-logit vectors just before the softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .layers import Dense, uniform_init
from .lstm import LstmCell
from .tensor import Tensor

OPERATORS = (
    "additive", "max_pool", "gated", "multimodal_bilinear", "gmu",
    "gated_bilinear", "concat", "mrn", "dmrn", "dmrfe",
)
PLACEMENTS = ("early", "late", "decision")


@dataclass
class FusionSpec:
    """Choice of fusion operator and where it sits in the pipeline."""

    operator: str = "concat"
    placement: str = "late"
    joint_dim: int = 128
    blocks: int = 1
    bilinear_rank: int = 32
    mrn_branch: str = "audio"

    def validate(self) -> None:
        if self.operator not in OPERATORS:
            raise ConfigError(
                f"unknown fusion operator {self.operator!r}; valid: {', '.join(OPERATORS)}"
            )
        if self.placement not in PLACEMENTS:
            raise ConfigError(
                f"unknown placement {self.placement!r}; valid: {', '.join(PLACEMENTS)}"
            )
        if self.operator == "dmrfe" and self.placement != "late":
            raise ConfigError("dmrfe is defined over LSTM outputs; use late placement")
        if self.blocks < 1:
            raise ConfigError("blocks must be >= 1")
        if self.mrn_branch not in ("audio", "visual"):
            raise ConfigError("mrn_branch must be 'audio' or 'visual'")


def _check_dims(h_a: Tensor, h_v: Tensor, dim_a: int, dim_v: int) -> None:
    if h_a.shape != (dim_a,) or h_v.shape != (dim_v,):
        raise DimensionError(
            f"fusion inputs {h_a.shape}/{h_v.shape}, expected ({dim_a},)/({dim_v},)"
        )


class AdditiveFusion:
    """tanh(W_a h_a + W_v h_v)."""

    def __init__(self, dim_a, dim_v, joint_dim, rng):
        self.dims = (dim_a, dim_v)
        self.w_a = uniform_init(rng, (joint_dim, dim_a), dim_a)
        self.w_v = uniform_init(rng, (joint_dim, dim_v), dim_v)

    def fuse(self, h_a: Tensor, h_v: Tensor) -> Tensor:
        _check_dims(h_a, h_v, *self.dims)
        return T.tanh(T.add(T.matmul(self.w_a, h_a), T.matmul(self.w_v, h_v)))

    def params(self):
        return [self.w_a, self.w_v]

    def named_params(self, prefix):
        return [(f"{prefix}.w_a", self.w_a), (f"{prefix}.w_v", self.w_v)]


class MaxPoolFusion:
    """Elementwise max of the two projected, squashed branches."""

    def __init__(self, dim_a, dim_v, joint_dim, rng):
        self.dims = (dim_a, dim_v)
        self.w_a = uniform_init(rng, (joint_dim, dim_a), dim_a)
        self.w_v = uniform_init(rng, (joint_dim, dim_v), dim_v)

    def fuse(self, h_a, h_v):
        _check_dims(h_a, h_v, *self.dims)
        return T.maximum(T.tanh(T.matmul(self.w_a, h_a)), T.tanh(T.matmul(self.w_v, h_v)))

    def params(self):
        return [self.w_a, self.w_v]

    def named_params(self, prefix):
        return [(f"{prefix}.w_a", self.w_a), (f"{prefix}.w_v", self.w_v)]


class GatedFusion:
    """Each branch is gated by a sigmoid projection of the other modality."""

    def __init__(self, dim_a, dim_v, joint_dim, rng):
        self.dims = (dim_a, dim_v)
        self.w_a = uniform_init(rng, (joint_dim, dim_a), dim_a)
        self.w_v = uniform_init(rng, (joint_dim, dim_v), dim_v)
        self.gate_from_v = uniform_init(rng, (joint_dim, dim_v), dim_v)
        self.gate_from_a = uniform_init(rng, (joint_dim, dim_a), dim_a)

    def fuse(self, h_a, h_v):
        _check_dims(h_a, h_v, *self.dims)
        branch_a = T.mul(T.tanh(T.matmul(self.w_a, h_a)),
                         T.sigmoid(T.matmul(self.gate_from_v, h_v)))
        branch_v = T.mul(T.tanh(T.matmul(self.w_v, h_v)),
                         T.sigmoid(T.matmul(self.gate_from_a, h_a)))
        return T.add(branch_a, branch_v)

    def params(self):
        return [self.w_a, self.w_v, self.gate_from_v, self.gate_from_a]

    def named_params(self, prefix):
        names = ("w_a", "w_v", "gate_from_v", "gate_from_a")
        return [(f"{prefix}.{n}", p) for n, p in zip(names, self.params())]


class BilinearFusion:
    """Low-rank bilinear pooling: P (U h_a * V h_v)."""

    def __init__(self, dim_a, dim_v, joint_dim, rng, rank=32):
        self.dims = (dim_a, dim_v)
        self.u = uniform_init(rng, (rank, dim_a), dim_a)
        self.v = uniform_init(rng, (rank, dim_v), dim_v)
        self.proj_out = uniform_init(rng, (joint_dim, rank), rank)

    def fuse(self, h_a, h_v):
        _check_dims(h_a, h_v, *self.dims)
        prod = T.mul(T.matmul(self.u, h_a), T.matmul(self.v, h_v))
        return T.matmul(self.proj_out, prod)

    def params(self):
        return [self.u, self.v, self.proj_out]

    def named_params(self, prefix):
        names = ("u", "v", "proj_out")
        return [(f"{prefix}.{n}", p) for n, p in zip(names, self.params())]


class GmuFusion:
    """Convex gate between the two squashed branches."""

    def __init__(self, dim_a, dim_v, joint_dim, rng):
        self.dims = (dim_a, dim_v)
        self.w_a = uniform_init(rng, (joint_dim, dim_a), dim_a)
        self.w_v = uniform_init(rng, (joint_dim, dim_v), dim_v)
        self.w_gate = uniform_init(rng, (joint_dim, dim_a + dim_v), dim_a + dim_v)

    def gate(self, h_a, h_v):
        return T.sigmoid(T.matmul(self.w_gate, T.concat([h_a, h_v])))

    def fuse(self, h_a, h_v):
        _check_dims(h_a, h_v, *self.dims)
        z = self.gate(h_a, h_v)
        one_minus_z = T.sub(Tensor(np.ones(z.shape)), z)
        return T.add(T.mul(z, T.tanh(T.matmul(self.w_a, h_a))),
                     T.mul(one_minus_z, T.tanh(T.matmul(self.w_v, h_v))))

    def params(self):
        return [self.w_a, self.w_v, self.w_gate]

    def named_params(self, prefix):
        names = ("w_a", "w_v", "w_gate")
        return [(f"{prefix}.{n}", p) for n, p in zip(names, self.params())]


class GatedBilinearFusion:
    """The gmu gate arbitrating between bilinear and additive branches."""

    def __init__(self, dim_a, dim_v, joint_dim, rng, rank=32):
        self.dims = (dim_a, dim_v)
        self.bilinear = BilinearFusion(dim_a, dim_v, joint_dim, rng, rank=rank)
        self.additive = AdditiveFusion(dim_a, dim_v, joint_dim, rng)
        self.w_gate = uniform_init(rng, (joint_dim, dim_a + dim_v), dim_a + dim_v)

    def fuse(self, h_a, h_v):
        _check_dims(h_a, h_v, *self.dims)
        z = T.sigmoid(T.matmul(self.w_gate, T.concat([h_a, h_v])))
        one_minus_z = T.sub(Tensor(np.ones(z.shape)), z)
        return T.add(T.mul(z, self.bilinear.fuse(h_a, h_v)),
                     T.mul(one_minus_z, self.additive.fuse(h_a, h_v)))

    def params(self):
        return self.bilinear.params() + self.additive.params() + [self.w_gate]

    def named_params(self, prefix):
        return (self.bilinear.named_params(f"{prefix}.bilinear")
                + self.additive.named_params(f"{prefix}.additive")
                + [(f"{prefix}.w_gate", self.w_gate)])


class ConcatFusion:
    """[h_a; h_v] followed by a linear map to the joint dimension."""

    def __init__(self, dim_a, dim_v, joint_dim, rng):
        self.dims = (dim_a, dim_v)
        self.proj = Dense(dim_a + dim_v, joint_dim, rng)

    def fuse(self, h_a, h_v):
        _check_dims(h_a, h_v, *self.dims)
        return self.proj(T.concat([h_a, h_v]))

    def params(self):
        return self.proj.params()

    def named_params(self, prefix):
        return self.proj.named_params(f"{prefix}.proj")


class DmrnBlock:
    """One dual residual block with a shared additive fusion term.

    f(x, y) = tanh(W_a x + W_v y + b); the same f output updates both
    branches: a' = tanh(a + f), v' = tanh(v + f), joint = (a' + v') / 2.
    """

    def __init__(self, dim, rng):
        self.dim = dim
        self.fuse_a = uniform_init(rng, (dim, dim), dim)
        self.fuse_v = uniform_init(rng, (dim, dim), dim)
        self.fuse_b = uniform_init(rng, (dim,), dim)

    def shared_term(self, h_a: Tensor, h_v: Tensor) -> Tensor:
        return T.tanh(T.add(T.add(T.matmul(self.fuse_a, h_a),
                                  T.matmul(self.fuse_v, h_v)), self.fuse_b))

    def residual_update(self, h_a: Tensor, h_v: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        if h_a.shape != (self.dim,) or h_v.shape != (self.dim,):
            raise DimensionError(
                f"dmrn block: inputs {h_a.shape}/{h_v.shape}, expected ({self.dim},)"
            )
        u = self.shared_term(h_a, h_v)
        a_new = T.tanh(T.add(h_a, u))
        v_new = T.tanh(T.add(h_v, u))
        joint = T.scale(T.add(a_new, v_new), 0.5)
        return a_new, v_new, joint

    def params(self):
        return [self.fuse_a, self.fuse_v, self.fuse_b]

    def named_params(self, prefix):
        names = ("fuse_a", "fuse_v", "fuse_b")
        return [(f"{prefix}.{n}", p) for n, p in zip(names, self.params())]


class _ResidualBase:
    """Shared input-projection handling for the residual operators."""

    def __init__(self, dim_a, dim_v, joint_dim, rng):
        self.dims = (dim_a, dim_v)
        self.joint_dim = joint_dim
        self.pre_a = Dense(dim_a, joint_dim, rng) if dim_a != joint_dim else None
        self.pre_v = Dense(dim_v, joint_dim, rng) if dim_v != joint_dim else None

    def _project(self, h_a, h_v):
        _check_dims(h_a, h_v, *self.dims)
        if self.pre_a is not None:
            h_a = T.tanh(self.pre_a(h_a))
        if self.pre_v is not None:
            h_v = T.tanh(self.pre_v(h_v))
        return h_a, h_v

    def _pre_params(self):
        out = []
        if self.pre_a is not None:
            out.extend(self.pre_a.params())
        if self.pre_v is not None:
            out.extend(self.pre_v.params())
        return out

    def _pre_named(self, prefix):
        out = []
        if self.pre_a is not None:
            out.extend(self.pre_a.named_params(f"{prefix}.pre_a"))
        if self.pre_v is not None:
            out.extend(self.pre_v.named_params(f"{prefix}.pre_v"))
        return out


class DmrnFusion(_ResidualBase):
    """Stacked dual residual blocks; the joint output is the last block's."""

    def __init__(self, dim_a, dim_v, joint_dim, rng, blocks=1):
        super().__init__(dim_a, dim_v, joint_dim, rng)
        self.blocks = [DmrnBlock(joint_dim, rng) for _ in range(blocks)]

    def fuse(self, h_a, h_v):
        h_a, h_v, joint = self.fuse_with_branches(h_a, h_v)
        return joint

    def fuse_with_branches(self, h_a, h_v):
        h_a, h_v = self._project(h_a, h_v)
        joint = None
        for block in self.blocks:
            h_a, h_v, joint = block.residual_update(h_a, h_v)
        return h_a, h_v, joint

    def params(self):
        out = self._pre_params()
        for b in self.blocks:
            out.extend(b.params())
        return out

    def named_params(self, prefix):
        out = self._pre_named(prefix)
        for i, b in enumerate(self.blocks):
            out.extend(b.named_params(f"{prefix}.block{i}"))
        return out


class MrnFusion(_ResidualBase):
    """Single-branch residual: only one modality is updated, the other injected."""

    def __init__(self, dim_a, dim_v, joint_dim, rng, blocks=1, branch="audio"):
        super().__init__(dim_a, dim_v, joint_dim, rng)
        self.branch = branch
        self.blocks = [DmrnBlock(joint_dim, rng) for _ in range(blocks)]

    def fuse(self, h_a, h_v):
        h_a, h_v = self._project(h_a, h_v)
        updated, other = (h_a, h_v) if self.branch == "audio" else (h_v, h_a)
        for block in self.blocks:
            if self.branch == "audio":
                u = block.shared_term(updated, other)
            else:
                u = block.shared_term(other, updated)
            updated = T.tanh(T.add(updated, u))
        return updated

    def params(self):
        out = self._pre_params()
        for b in self.blocks:
            out.extend(b.params())
        return out

    def named_params(self, prefix):
        out = self._pre_named(prefix)
        for i, b in enumerate(self.blocks):
            out.extend(b.named_params(f"{prefix}.block{i}"))
        return out


class DmrfeFusion(_ResidualBase):
    """Two untied residual block chains whose class probabilities are averaged.

    Unlike the other operators this one owns its classification heads and
    emits a probability vector over classes rather than a joint feature.
    """

    def __init__(self, dim_a, dim_v, joint_dim, num_classes, rng, blocks=1):
        super().__init__(dim_a, dim_v, joint_dim, rng)
        self.branch_a = [DmrnBlock(joint_dim, rng) for _ in range(blocks)]
        self.branch_v = [DmrnBlock(joint_dim, rng) for _ in range(blocks)]
        self.head_a = Dense(joint_dim, num_classes, rng)
        self.head_v = Dense(joint_dim, num_classes, rng)

    def _branch_joint(self, blocks, h_a, h_v):
        joint = None
        for block in blocks:
            h_a, h_v, joint = block.residual_update(h_a, h_v)
        return joint

    def fuse(self, h_a, h_v) -> Tensor:
        if self.head_a is None or self.head_v is None:
            raise ContractError("dmrfe needs both classification heads attached")
        h_a, h_v = self._project(h_a, h_v)
        p_a = T.softmax(self.head_a(self._branch_joint(self.branch_a, h_a, h_v)))
        p_v = T.softmax(self.head_v(self._branch_joint(self.branch_v, h_a, h_v)))
        return T.scale(T.add(p_a, p_v), 0.5)

    def params(self):
        out = self._pre_params()
        for b in self.branch_a + self.branch_v:
            out.extend(b.params())
        return out + self.head_a.params() + self.head_v.params()

    def named_params(self, prefix):
        out = self._pre_named(prefix)
        for i, b in enumerate(self.branch_a):
            out.extend(b.named_params(f"{prefix}.branch_a{i}"))
        for i, b in enumerate(self.branch_v):
            out.extend(b.named_params(f"{prefix}.branch_v{i}"))
        return (out + self.head_a.named_params(f"{prefix}.head_a")
                + self.head_v.named_params(f"{prefix}.head_v"))


def build_operator(spec: FusionSpec, dim_a: int, dim_v: int, joint_dim: int,
                   rng: np.random.Generator, num_classes: int | None = None):
    """Instantiate the operator named by ``spec`` for the given widths."""
    spec.validate()
    name = spec.operator
    if name == "additive":
        return AdditiveFusion(dim_a, dim_v, joint_dim, rng)
    if name == "max_pool":
        return MaxPoolFusion(dim_a, dim_v, joint_dim, rng)
    if name == "gated":
        return GatedFusion(dim_a, dim_v, joint_dim, rng)
    if name == "multimodal_bilinear":
        return BilinearFusion(dim_a, dim_v, joint_dim, rng, rank=spec.bilinear_rank)
    if name == "gmu":
        return GmuFusion(dim_a, dim_v, joint_dim, rng)
    if name == "gated_bilinear":
        return GatedBilinearFusion(dim_a, dim_v, joint_dim, rng, rank=spec.bilinear_rank)
    if name == "concat":
        return ConcatFusion(dim_a, dim_v, joint_dim, rng)
    if name == "mrn":
        return MrnFusion(dim_a, dim_v, joint_dim, rng, blocks=spec.blocks,
                         branch=spec.mrn_branch)
    if name == "dmrn":
        return DmrnFusion(dim_a, dim_v, joint_dim, rng, blocks=spec.blocks)
    if name == "dmrfe":
        if num_classes is None:
            raise ContractError("dmrfe needs num_classes for its heads")
        return DmrfeFusion(dim_a, dim_v, joint_dim, num_classes, rng, blocks=spec.blocks)
    raise ConfigError(f"unknown fusion operator {name!r}")


# ---------------------------------------------------------------------------
# placement wiring


class FusedPipeline:
    """Per-segment feature streams to per-segment class outputs.

    ``run`` consumes one audio feature and one visual feature per segment
    and returns one output vector per segment. ``output_kind`` is
    "logits" for every placement except dmrfe, which emits probabilities.
    """

    def __init__(self, spec: FusionSpec, dim_a: int, dim_v: int, num_classes: int,
                 hidden_dim: int, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self.num_classes = num_classes
        self.output_kind = "probs" if spec.operator == "dmrfe" else "logits"
        placement = spec.placement

        self.head = self.head_a = self.head_v = None
        if placement == "early":
            self.operator = build_operator(spec, dim_a, dim_v, spec.joint_dim, rng)
            self.lstm_joint = LstmCell(spec.joint_dim, hidden_dim, rng)
            self.lstm_a = self.lstm_v = None
            self.head = Dense(hidden_dim, num_classes, rng)
        elif placement == "late":
            self.lstm_a = LstmCell(dim_a, hidden_dim, rng)
            self.lstm_v = LstmCell(dim_v, hidden_dim, rng)
            self.lstm_joint = None
            if spec.operator == "dmrfe":
                self.operator = build_operator(spec, hidden_dim, hidden_dim,
                                               spec.joint_dim, rng, num_classes)
                self.head = None
            else:
                self.operator = build_operator(spec, hidden_dim, hidden_dim,
                                               spec.joint_dim, rng)
                self.head = Dense(spec.joint_dim, num_classes, rng)
        else:  # decision: fuse the two C-dimensional logit vectors
            self.lstm_a = LstmCell(dim_a, hidden_dim, rng)
            self.lstm_v = LstmCell(dim_v, hidden_dim, rng)
            self.lstm_joint = None
            self.head_a = Dense(hidden_dim, num_classes, rng)
            self.head_v = Dense(hidden_dim, num_classes, rng)
            self.operator = build_operator(spec, num_classes, num_classes,
                                           num_classes, rng)
            self.head = None

    @property
    def lstm_count(self) -> int:
        return 1 if self.lstm_joint is not None else 2

    def run(self, audio_feats: list[Tensor], visual_feats: list[Tensor]) -> list[Tensor]:
        if len(audio_feats) != len(visual_feats):
            raise DimensionError("audio and visual streams differ in length")
        placement = self.spec.placement
        if placement == "early":
            joint = [self.operator.fuse(a, v) for a, v in zip(audio_feats, visual_feats)]
            h, c = self.lstm_joint.zero_state()
            out = []
            for j in joint:
                h, c = self.lstm_joint.step(j, h, c)
                out.append(self.head(h))
            return out

        h_a, c_a = self.lstm_a.zero_state()
        h_v, c_v = self.lstm_v.zero_state()
        out = []
        for a, v in zip(audio_feats, visual_feats):
            h_a, c_a = self.lstm_a.step(a, h_a, c_a)
            h_v, c_v = self.lstm_v.step(v, h_v, c_v)
            if placement == "late":
                fused = self.operator.fuse(h_a, h_v)
                out.append(self.head(fused) if self.head is not None else fused)
            else:
                out.append(self.operator.fuse(self.head_a(h_a), self.head_v(h_v)))
        return out

    def params(self):
        out = list(self.operator.params())
        for cell in (self.lstm_a, self.lstm_v, self.lstm_joint):
            if cell is not None:
                out.extend(cell.params())
        for head in (self.head, self.head_a, self.head_v):
            if head is not None:
                out.extend(head.params())
        return out

    def named_params(self, prefix):
        out = self.operator.named_params(f"{prefix}.fusion")
        if self.lstm_joint is not None:
            out.extend(self.lstm_joint.named_params(f"{prefix}.lstm_joint"))
        if self.lstm_a is not None:
            out.extend(self.lstm_a.named_params(f"{prefix}.lstm_a"))
        if self.lstm_v is not None:
            out.extend(self.lstm_v.named_params(f"{prefix}.lstm_v"))
        if self.head is not None:
            out.extend(self.head.named_params(f"{prefix}.head"))
        if self.head_a is not None:
            out.extend(self.head_a.named_params(f"{prefix}.head_a"))
        if self.head_v is not None:
            out.extend(self.head_v.named_params(f"{prefix}.head_v"))
        return out


def place_fusion(spec: FusionSpec, dim_a: int, dim_v: int, num_classes: int,
                 hidden_dim: int = 128,
                 rng: np.random.Generator | None = None) -> FusedPipeline:
    """Wire the operator into an early/late/decision segment pipeline."""
    rng = rng if rng is not None else np.random.default_rng(0)
    return FusedPipeline(spec, dim_a, dim_v, num_classes, hidden_dim, rng)
