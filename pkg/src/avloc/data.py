"""Feature-sequence data model, on-disk format, synthesis, and splitting.

A corpus is a directory of ``.avef`` files plus a ``manifest.jsonl``
sidecar (one JSON object per video: id, class, event interval). Features
are f32 on disk and widened to f64 in memory; the synthetic generator
emits f32-representable values so write/read round trips are bit-exact.
"""

from __future__ import annotations

import io
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

MAGIC = b"AVEF"
EXTENSION_MAGIC = b"AEXT"
FORMAT_VERSION = 1

# index of the background class is always the last one
def background_index(num_classes: int) -> int:
    return num_classes - 1


@dataclass
class FeatureSequence:
    """One video's T segments of visual maps and audio vectors plus labels.

    ``visual`` has shape (T, d_v, k) with regions innermost, ``audio`` has
    shape (T, d_a). ``segment_labels`` holds one class index per segment
    (the one-hot view is available via :meth:`one_hot_labels`); background
    is class ``num_classes - 1``. ``audio_spatial``, when present, holds
    per-segment audio feature maps of shape (T, c_a, k_a) from the
    optional extension block.
    """

    video_id: str
    visual: np.ndarray
    audio: np.ndarray
    segment_labels: np.ndarray
    video_label: int
    num_classes: int
    audio_spatial: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.visual.shape[0]

    @property
    def d_v(self) -> int:
        return self.visual.shape[1]

    @property
    def k(self) -> int:
        return self.visual.shape[2]

    @property
    def d_a(self) -> int:
        return self.audio.shape[1]

    def one_hot_labels(self) -> np.ndarray:
        out = np.zeros((self.T, self.num_classes))
        out[np.arange(self.T), self.segment_labels] = 1.0
        return out

    def event_interval(self) -> tuple[int, int] | None:
        """Inclusive (start, end) of the non-background run, if any."""
        idx = np.flatnonzero(self.segment_labels != background_index(self.num_classes))
        if idx.size == 0:
            return None
        return int(idx[0]), int(idx[-1])

    def validate(self) -> None:
        if self.visual.ndim != 3 or self.audio.ndim != 2:
            raise ContractError("visual must be (T, d_v, k) and audio (T, d_a)")
        if self.visual.shape[0] != self.audio.shape[0] or self.visual.shape[0] != len(self.segment_labels):
            raise ContractError("segment counts disagree across fields")
        if not np.all((self.segment_labels >= 0) & (self.segment_labels < self.num_classes)):
            raise ContractError("segment label outside [0, C)")
        if not 0 <= self.video_label < self.num_classes:
            raise ContractError("video label outside [0, C)")
        if not (np.isfinite(self.visual).all() and np.isfinite(self.audio).all()):
            raise ContractError("non-finite feature values")


# ---------------------------------------------------------------------------
# binary format


class _Reader:
    """Tracks the byte offset so format errors can be positioned."""

    def __init__(self, source: io.BufferedIOBase):
        self.source = source
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        buf = self.source.read(n)
        if len(buf) != n:
            raise FormatError(
                f"truncated stream while reading {what}: wanted {n} bytes, got {len(buf)}",
                offset=self.offset,
            )
        self.offset += n
        return buf

    def maybe_take(self, n: int) -> bytes:
        buf = self.source.read(n)
        self.offset += len(buf)
        return buf


def write_features(seq: FeatureSequence, sink: io.BufferedIOBase) -> None:
    """Serialize one sequence to the little-endian feature format."""
    seq.validate()
    vid = seq.video_id.encode("utf-8")
    if len(vid) > 0xFFFF:
        raise ContractError("video id longer than 65535 bytes")
    sink.write(MAGIC)
    sink.write(struct.pack("<H5I", FORMAT_VERSION, seq.T, seq.d_v, seq.k, seq.d_a, seq.num_classes))
    sink.write(struct.pack("<H", len(vid)))
    sink.write(vid)
    sink.write(np.ascontiguousarray(seq.visual, dtype="<f4").tobytes())
    sink.write(np.ascontiguousarray(seq.audio, dtype="<f4").tobytes())
    sink.write(np.ascontiguousarray(seq.segment_labels, dtype="<u2").tobytes())
    sink.write(struct.pack("<H", seq.video_label))
    if seq.audio_spatial is not None:
        c_a, k_a = seq.audio_spatial.shape[1], seq.audio_spatial.shape[2]
        sink.write(EXTENSION_MAGIC)
        sink.write(struct.pack("<2I", c_a, k_a))
        sink.write(np.ascontiguousarray(seq.audio_spatial, dtype="<f4").tobytes())


def read_features(source: io.BufferedIOBase) -> FeatureSequence:
    """Parse one sequence, rejecting malformed streams with a byte offset."""
    r = _Reader(source)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version, t, d_v, k, d_a, c = struct.unpack("<H5I", r.take(22, "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    if t == 0 or d_v == 0 or k == 0 or d_a == 0 or c == 0:
        raise FormatError("zero dimension in header", offset=4)
    (id_len,) = struct.unpack("<H", r.take(2, "video id length"))
    video_id = r.take(id_len, "video id").decode("utf-8")

    visual = np.frombuffer(r.take(4 * t * d_v * k, "visual maps"), dtype="<f4")
    visual = visual.reshape(t, d_v, k).astype(np.float64)
    audio = np.frombuffer(r.take(4 * t * d_a, "audio vectors"), dtype="<f4")
    audio = audio.reshape(t, d_a).astype(np.float64)
    labels_off = r.offset
    labels = np.frombuffer(r.take(2 * t, "segment labels"), dtype="<u2").astype(np.int64)
    if np.any(labels >= c):
        raise FormatError(f"segment label out of range for {c} classes", offset=labels_off)
    video_label_off = r.offset
    (video_label,) = struct.unpack("<H", r.take(2, "video label"))
    if video_label >= c:
        raise FormatError(f"video label out of range for {c} classes", offset=video_label_off)

    audio_spatial = None
    ext_off = r.offset
    trailer = r.maybe_take(4)
    if trailer:
        if trailer != EXTENSION_MAGIC:
            raise FormatError(
                f"unexpected trailing bytes {trailer!r}; header dimensions likely "
                "disagree with the payload",
                offset=ext_off,
            )
        c_a, k_a = struct.unpack("<2I", r.take(8, "extension header"))
        if c_a == 0 or k_a == 0:
            raise FormatError("zero dimension in extension header", offset=ext_off + 4)
        audio_spatial = np.frombuffer(r.take(4 * t * c_a * k_a, "audio spatial maps"), dtype="<f4")
        audio_spatial = audio_spatial.reshape(t, c_a, k_a).astype(np.float64)
        tail = r.maybe_take(1)
        if tail:
            raise FormatError(f"unexpected trailing bytes {tail!r}", offset=r.offset - 1)

    return FeatureSequence(
        video_id=video_id,
        visual=visual,
        audio=audio,
        segment_labels=labels,
        video_label=int(video_label),
        num_classes=int(c),
        audio_spatial=audio_spatial,
    )


def write_corpus(corpus: list[FeatureSequence], directory: str | Path) -> Path:
    """Write one .avef file per sequence plus the manifest sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / "manifest.jsonl"
    with open(manifest_path, "w") as mf:
        for seq in corpus:
            with open(directory / f"{seq.video_id}.avef", "wb") as f:
                write_features(seq, f)
            interval = seq.event_interval()
            mf.write(json.dumps({
                "id": seq.video_id,
                "class": int(seq.video_label),
                "interval": None if interval is None else list(interval),
            }) + "\n")
    return manifest_path


def read_corpus(directory: str | Path) -> list[FeatureSequence]:
    """Load every sequence listed in a corpus directory's manifest."""
    directory = Path(directory)
    manifest_path = directory / "manifest.jsonl"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.jsonl in {directory}")
    out = []
    for line_no, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest line {line_no} is not valid JSON: {exc}") from exc
        path = directory / f"{entry['id']}.avef"
        if not path.exists():
            raise FormatError(f"manifest entry {entry['id']!r} has no feature file")
        with open(path, "rb") as f:
            out.append(read_features(f))
    return out


# ---------------------------------------------------------------------------
# synthetic corpus generation


@dataclass
class SynthSpec:
    """Parameters of the planted-event synthetic corpus.

    Events are contiguous runs of at least two segments. Inside the event,
    audio vectors carry a per-class mean scaled by ``signal_to_noise`` and
    the class's designated region cells of the visual map carry a visual
    class mean at the same scale; everything else is unit Gaussian noise.
    The per-modality informativeness scalars further scale each modality's
    class signal so unimodal difficulty is controllable.
    """

    n_videos: int = 200
    n_event_classes: int = 5
    T: int = 10
    d_v: int = 512
    k: int = 49
    d_a: int = 128
    event_region_cells: int = 8
    signal_to_noise: float = 3.0
    audio_informativeness: float = 1.0
    visual_informativeness: float = 1.0
    short_event_fraction: float = 0.5
    min_event_len: int = 2
    audio_spatial: bool = False
    c_a: int = 64
    k_a: int = 12
    seed: int = 0

    @property
    def num_classes(self) -> int:
        return self.n_event_classes + 1

    def validate(self) -> None:
        for name in ("n_videos", "n_event_classes", "T", "d_v", "k", "d_a", "c_a", "k_a"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.event_region_cells > self.k:
            raise ContractError(
                f"event_region_cells ({self.event_region_cells}) exceeds k ({self.k})"
            )
        if not self.min_event_len >= 2:
            raise ContractError("events must span at least 2 segments")
        if self.min_event_len > self.T:
            raise ContractError("min_event_len exceeds T")
        if not 0.0 <= self.short_event_fraction <= 1.0:
            raise ContractError("short_event_fraction must lie in [0, 1]")
        for name in ("audio_informativeness", "visual_informativeness"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")


@dataclass
class ClassProfile:
    """Per-class signal signatures planted by the generator."""

    audio_mean: np.ndarray      # (C-1, d_a)
    visual_mean: np.ndarray     # (C-1, d_v)
    region_cells: np.ndarray    # (C-1, event_region_cells)
    audio_spatial_mean: np.ndarray | None = None   # (C-1, c_a)
    audio_spatial_cells: np.ndarray | None = None  # (C-1, spatial cells)


def _draw_profile(rng: np.random.Generator, spec: SynthSpec) -> ClassProfile:
    n = spec.n_event_classes
    audio_mean = rng.standard_normal((n, spec.d_a))
    visual_mean = rng.standard_normal((n, spec.d_v))
    region_cells = np.stack([
        rng.choice(spec.k, size=spec.event_region_cells, replace=False) for _ in range(n)
    ])
    audio_spatial_mean = audio_spatial_cells = None
    if spec.audio_spatial:
        audio_spatial_mean = rng.standard_normal((n, spec.c_a))
        n_cells = min(spec.event_region_cells, spec.k_a)
        audio_spatial_cells = np.stack([
            rng.choice(spec.k_a, size=n_cells, replace=False) for _ in range(n)
        ])
    return ClassProfile(audio_mean, visual_mean, region_cells,
                        audio_spatial_mean, audio_spatial_cells)


def synthetic_class_profile(spec: SynthSpec) -> ClassProfile:
    """Re-derive the class signatures the generator plants (same seed)."""
    spec.validate()
    return _draw_profile(np.random.default_rng(spec.seed), spec)


def generate_synthetic(spec: SynthSpec) -> list[FeatureSequence]:
    """Deterministically build a corpus of planted-event sequences."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    profile = _draw_profile(rng, spec)

    bg = background_index(spec.num_classes)
    delta = spec.signal_to_noise
    out = []
    width = max(4, len(str(spec.n_videos - 1)))
    for v in range(spec.n_videos):
        c = int(rng.integers(0, spec.n_event_classes))
        short = spec.T > spec.min_event_len and rng.random() < spec.short_event_fraction
        if short:
            length = int(rng.integers(spec.min_event_len, spec.T))
        else:
            length = spec.T
        start = int(rng.integers(0, spec.T - length + 1))

        visual = rng.standard_normal((spec.T, spec.d_v, spec.k))
        audio = rng.standard_normal((spec.T, spec.d_a))
        labels = np.full(spec.T, bg, dtype=np.int64)
        ev = slice(start, start + length)
        labels[ev] = c
        audio[ev] += delta * spec.audio_informativeness * profile.audio_mean[c]
        for cell in profile.region_cells[c]:
            visual[ev, :, cell] += delta * spec.visual_informativeness * profile.visual_mean[c]

        audio_spatial = None
        if spec.audio_spatial:
            audio_spatial = rng.standard_normal((spec.T, spec.c_a, spec.k_a))
            for cell in profile.audio_spatial_cells[c]:
                audio_spatial[ev, :, cell] += (
                    delta * spec.audio_informativeness * profile.audio_spatial_mean[c]
                )
            audio_spatial = audio_spatial.astype(np.float32).astype(np.float64)

        out.append(FeatureSequence(
            video_id=f"synth{v:0{width}d}",
            visual=visual.astype(np.float32).astype(np.float64),
            audio=audio.astype(np.float32).astype(np.float64),
            segment_labels=labels,
            video_label=c,
            num_classes=spec.num_classes,
            audio_spatial=audio_spatial,
        ))
    return out


def short_event_only(corpus: list[FeatureSequence]) -> list[FeatureSequence]:
    """Videos whose event is strictly shorter than the full sequence."""
    out = []
    for seq in corpus:
        interval = seq.event_interval()
        if interval is not None and interval[1] - interval[0] + 1 < seq.T:
            out.append(seq)
    return out


# ---------------------------------------------------------------------------
# pair construction for distance learning


@dataclass
class PairBatch:
    """Synchronized/mismatched visual-audio segment pairs with binary labels.

    Visual features are the region-averaged d_v vectors; y = 1 marks a
    same-video, same-timestep pair.
    """

    visual: np.ndarray   # (n, d_v)
    audio: np.ndarray    # (n, d_a)
    labels: np.ndarray   # (n,) in {0, 1}

    def __len__(self) -> int:
        return len(self.labels)


def pooled_visual(seq: FeatureSequence) -> np.ndarray:
    """Region-averaged visual vectors, shape (T, d_v)."""
    return seq.visual.mean(axis=2)


def make_pairs(corpus: list[FeatureSequence], ratio: float = 1.0,
               seed: int = 0) -> PairBatch:
    """Build a balanced pair batch over all segments of the corpus.

    Every (video, t) contributes one positive; negatives are sampled at
    ``n_pos / ratio`` count, split evenly between mismatched timesteps
    within the same video (hard) and cross-video pairs (easy).
    """
    if not corpus:
        raise ContractError("empty corpus")
    if ratio <= 0:
        raise ContractError("ratio must be positive")
    n_videos = len(corpus)
    if all(seq.T < 2 for seq in corpus) and n_videos < 2:
        raise ContractError("corpus too small to form negative pairs")

    rng = np.random.default_rng(seed)
    pooled = [pooled_visual(seq) for seq in corpus]
    vis_rows, aud_rows, labels = [], [], []
    for vi, seq in enumerate(corpus):
        for t in range(seq.T):
            vis_rows.append(pooled[vi][t])
            aud_rows.append(seq.audio[t])
            labels.append(1)
    n_pos = len(labels)
    n_neg = int(round(n_pos / ratio))
    has_multi_t = any(seq.T >= 2 for seq in corpus)

    for j in range(n_neg):
        hard = (j % 2 == 0) and has_multi_t
        if hard:
            while True:
                vi = int(rng.integers(0, n_videos))
                if corpus[vi].T >= 2:
                    break
            t_v = int(rng.integers(0, corpus[vi].T))
            t_a = int(rng.integers(0, corpus[vi].T - 1))
            if t_a >= t_v:
                t_a += 1
            vis_rows.append(pooled[vi][t_v])
            aud_rows.append(corpus[vi].audio[t_a])
        else:
            if n_videos < 2:
                # only hard negatives are possible
                vi = int(rng.integers(0, n_videos))
                t_v = int(rng.integers(0, corpus[vi].T))
                t_a = int(rng.integers(0, corpus[vi].T - 1))
                if t_a >= t_v:
                    t_a += 1
                vis_rows.append(pooled[vi][t_v])
                aud_rows.append(corpus[vi].audio[t_a])
            else:
                vi = int(rng.integers(0, n_videos))
                vj = int(rng.integers(0, n_videos - 1))
                if vj >= vi:
                    vj += 1
                t_v = int(rng.integers(0, corpus[vi].T))
                t_a = int(rng.integers(0, corpus[vj].T))
                vis_rows.append(pooled[vi][t_v])
                aud_rows.append(corpus[vj].audio[t_a])
        labels.append(0)

    return PairBatch(
        visual=np.asarray(vis_rows),
        audio=np.asarray(aud_rows),
        labels=np.asarray(labels, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# deterministic stratified splitting


@dataclass
class DatasetSplit:
    train: list[FeatureSequence] = field(default_factory=list)
    val: list[FeatureSequence] = field(default_factory=list)
    test: list[FeatureSequence] = field(default_factory=list)
    seed: int = 0

    def parts(self) -> tuple[list[FeatureSequence], ...]:
        return self.train, self.val, self.test


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    ideal = weights * total
    counts = np.floor(ideal).astype(int)
    remainder = total - counts.sum()
    order = np.argsort(-(ideal - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def split(corpus: list[FeatureSequence], fractions: tuple[float, float, float],
          seed: int = 0) -> DatasetSplit:
    """Stratified train/val/test split, deterministic under ``seed``.

    Per-class counts stay within one video of the fractional targets;
    global split sizes hit the largest-remainder rounding of
    ``fraction * len(corpus)`` exactly.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.shape != (3,) or np.any(fractions < 0):
        raise ContractError("fractions must be three nonnegative numbers")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise ContractError(f"fractions must sum to 1, got {fractions.sum()}")

    rng = np.random.default_rng(seed)
    by_class: dict[int, list[FeatureSequence]] = {}
    for seq in corpus:
        by_class.setdefault(seq.video_label, []).append(seq)

    global_targets = _largest_remainder(fractions, len(corpus))
    n_nonempty = sum(f > 0 for f in fractions)

    assigned: dict[int, list[list[FeatureSequence]]] = {}
    counts = np.zeros((len(by_class), 3), dtype=int)
    targets = np.zeros((len(by_class), 3), dtype=np.float64)
    class_order = sorted(by_class)
    for ci, cls in enumerate(class_order):
        vids = list(by_class[cls])
        if len(vids) < n_nonempty:
            warnings.warn(
                f"class {cls} has only {len(vids)} videos for {n_nonempty} splits; "
                "assigning best-effort",
                stacklevel=2,
            )
        rng.shuffle(vids)
        targets[ci] = fractions * len(vids)
        counts[ci] = _largest_remainder(fractions, len(vids))
        parts, pos = [], 0
        for n in counts[ci]:
            parts.append(vids[pos:pos + n])
            pos += n
        assigned[cls] = parts

    # Repair global totals with single-video moves from a split that is
    # above its global target into one below it, always moving a class
    # that sits strictly above / below its own fractional target so the
    # per-class counts stay within one video of target. A direct move may
    # not exist, but with three splits a two-step chain always does.
    def _move(ci: int, src: int, dst: int) -> None:
        seq = assigned[class_order[ci]][src].pop()
        assigned[class_order[ci]][dst].append(seq)
        counts[ci, src] -= 1
        counts[ci, dst] += 1

    def _class_above_below(src: int, dst: int) -> int | None:
        for ci in range(len(class_order)):
            if counts[ci, src] > targets[ci, src] and counts[ci, dst] < targets[ci, dst]:
                return ci
        return None

    for _round in range(2 * len(corpus) + 2):
        totals = counts.sum(axis=0)
        if np.array_equal(totals, global_targets):
            break
        over = int(np.argmax(totals - global_targets))
        under = int(np.argmin(totals - global_targets))
        ci = _class_above_below(over, under)
        if ci is not None:
            _move(ci, over, under)
            continue
        mid = ({0, 1, 2} - {over, under}).pop()
        c1 = _class_above_below(over, mid)
        c2 = _class_above_below(mid, under)
        if c1 is None or c2 is None:
            warnings.warn("could not balance split totals exactly", stacklevel=2)
            break
        _move(c1, over, mid)
        _move(c2, mid, under)

    result = DatasetSplit(seed=seed)
    buckets = result.parts()
    for cls in class_order:
        for si in range(3):
            buckets[si].extend(assigned[cls][si])
    return result
