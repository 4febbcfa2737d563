"""Audio-visual event localization toolkit over pre-extracted features."""

from .attention import GuidedAttention, audio_guided_visual, co_attend, visual_guided_audio
from .crossmod import (
    AvdlnConfig,
    AvdlnModel,
    contrastive_loss,
    localize,
    matching_accuracy,
)
from .data import (
    DatasetSplit,
    FeatureSequence,
    PairBatch,
    SynthSpec,
    generate_synthetic,
    make_pairs,
    read_corpus,
    read_features,
    short_event_only,
    split,
    write_corpus,
    write_features,
)
from .fusion import FusionSpec, place_fusion
from .localizer import (
    LocalizerModel,
    ModelConfig,
    TrainConfig,
    evaluate,
    mil_pool,
    overall_accuracy,
    predict_segments,
    supervised_loss,
    train,
    weak_loss,
)
from .lstm import LstmCell, run_sequence
from .tensor import Adam, Tensor, backward, no_grad

__all__ = [
    "Adam", "AvdlnConfig", "AvdlnModel", "DatasetSplit", "FeatureSequence",
    "FusionSpec", "GuidedAttention", "LocalizerModel", "LstmCell", "ModelConfig",
    "PairBatch", "SynthSpec", "Tensor", "TrainConfig", "audio_guided_visual",
    "backward", "co_attend", "contrastive_loss", "evaluate", "generate_synthetic",
    "localize", "make_pairs", "matching_accuracy", "mil_pool", "no_grad",
    "overall_accuracy", "place_fusion", "predict_segments", "read_corpus",
    "read_features", "run_sequence", "short_event_only", "split",
    "supervised_loss", "train", "visual_guided_audio", "weak_loss",
    "write_corpus", "write_features",
]

__version__ = "0.1.0"
