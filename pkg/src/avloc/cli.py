"""Command-line entry points.

Subcommands: synth, train, eval, localize, attmaps, validate. Every
command accepts ``--config FILE`` holding ``key = value`` lines for any
of its flags; explicit flags win over the file. Exit codes: 0 success,
2 configuration error, 3 data/format error, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import crossmod, data, localizer
from .attention import write_attention_csv, write_attention_pgm
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .errors import (
    AvlocError,
    ConfigError,
    ContractError,
    FormatError,
    TrainingDivergedError,
)
from .fusion import OPERATORS, PLACEMENTS, FusionSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _fractions(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("fractions must be three comma-separated numbers")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected key = value")
        key, value = stripped.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Use config-file entries as subcommand defaults so explicit flags win."""
    peek = argparse.ArgumentParser(add_help=False)
    peek.add_argument("command", nargs="?")
    peek.add_argument("--config")
    known, _ = peek.parse_known_args(argv)
    if known.config:
        target = parser
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction) and known.command in action.choices:
                target = action.choices[known.command]
                break
        raw = load_config_file(known.config)
        by_dest = {a.dest: a for a in target._actions}
        converted = {}
        for key, value in raw.items():
            action = by_dest.get(key)
            if action is None:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                converted[key] = _bool(value)
            elif action.type is not None:
                try:
                    converted[key] = action.type(value)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ConfigError(f"config key {key!r}: {exc}") from exc
            else:
                converted[key] = value
        target.set_defaults(**converted)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# subcommand parsers


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avloc",
        description="Audio-visual event localization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic feature corpus")
    _add_common(p)
    p.add_argument("--out", required=True, help="corpus directory to create")
    p.add_argument("--videos", type=int, default=200)
    p.add_argument("--classes", type=int, default=5, help="event classes (background is extra)")
    p.add_argument("--t", type=int, default=10, help="segments per video")
    p.add_argument("--dv", type=int, default=512)
    p.add_argument("--k", type=int, default=49)
    p.add_argument("--da", type=int, default=128)
    p.add_argument("--cells", type=int, default=8, help="planted region cells per class")
    p.add_argument("--snr", type=float, default=3.0, help="class-signal separation")
    p.add_argument("--audio-informativeness", type=float, default=1.0)
    p.add_argument("--visual-informativeness", type=float, default=1.0)
    p.add_argument("--short-event-fraction", type=float, default=0.5)
    p.add_argument("--audio-spatial", action="store_true",
                   help="emit the optional audio spatial map block")

    p = sub.add_parser("train", help="train a localization or distance model")
    _add_common(p)
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="output directory for artifacts")
    p.add_argument("--task", default="supervised",
                   choices=["supervised", "weak", "crossmod"])
    p.add_argument("--variant", default="A+V-att",
                   help="A, V, V-att, A+V, A+V-att or W- prefixed")
    p.add_argument("--fusion", default="concat", help=f"one of {', '.join(OPERATORS)}")
    p.add_argument("--placement", default="late", help=f"one of {', '.join(PLACEMENTS)}")
    p.add_argument("--joint-dim", type=int, default=128)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--fractions", type=_fractions, default=(0.8, 0.1, 0.1),
                   help="train,val,test fractions")
    p.add_argument("--pair-ratio", type=float, default=1.0,
                   help="positive:negative ratio for crossmod pairs")
    p.add_argument("--margin", type=float, default=2.0, help="contrastive margin")
    p.add_argument("--embed-dim", type=int, default=128, help="crossmod embedding size")

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--report", help="optional JSON output path")

    p = sub.add_parser("localize", help="sliding-window cross-modality search")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--direction", required=True, choices=["a2v", "v2a"])
    p.add_argument("--checkpoint", help="trained AVDLN checkpoint; fresh model if omitted")
    p.add_argument("--window", type=int, help="override the per-video event length")
    p.add_argument("--out", required=True, help="JSON-lines results path")

    p = sub.add_parser("attmaps", help="export attention maps as CSV and PGM")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", help="trained localizer checkpoint; fresh model if omitted")
    p.add_argument("--variant", default="A+V-att")
    p.add_argument("--video", action="append", help="video id (repeatable; default all)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("validate", help="round-trip any toolkit artifact")
    p.add_argument("path", help="feature file, corpus dir, checkpoint, report, or results")

    return parser


# ---------------------------------------------------------------------------
# command implementations


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def cmd_synth(args) -> int:
    spec = data.SynthSpec(
        n_videos=args.videos,
        n_event_classes=args.classes,
        T=args.t, d_v=args.dv, k=args.k, d_a=args.da,
        event_region_cells=args.cells,
        signal_to_noise=args.snr,
        audio_informativeness=args.audio_informativeness,
        visual_informativeness=args.visual_informativeness,
        short_event_fraction=args.short_event_fraction,
        audio_spatial=args.audio_spatial,
        seed=args.seed,
    )
    corpus = data.generate_synthetic(spec)
    manifest = data.write_corpus(corpus, args.out)
    _emit({
        "command": "synth",
        "videos": len(corpus),
        "classes": spec.num_classes,
        "segments": sum(s.T for s in corpus),
        "out": str(args.out),
        "manifest": str(manifest),
    })
    return EXIT_OK


def _split_from(corpus, fractions, seed):
    return data.split(corpus, fractions, seed=seed)


def cmd_train(args) -> int:
    corpus = data.read_corpus(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    parts = _split_from(corpus, tuple(args.fractions), args.seed)

    if args.task == "crossmod":
        first = corpus[0]
        model_cfg = crossmod.AvdlnConfig(
            d_v=first.d_v, d_a=first.d_a, embed_dim=args.embed_dim,
            margin=args.margin, seed=args.seed)
        model = crossmod.AvdlnModel(model_cfg)
        pairs = data.make_pairs(parts.train, ratio=args.pair_ratio, seed=args.seed)
        train_cfg = crossmod.PairTrainConfig(
            epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
        report = crossmod.train_pairs(model, pairs, train_cfg)
        report.to_json(out_dir / "report.json")
        checkpoint_cfg = {
            "kind": "avdln",
            "model": model_cfg.to_dict(),
            "data": {"fractions": list(args.fractions), "split_seed": args.seed,
                     "pair_ratio": args.pair_ratio},
        }
        save_checkpoint(out_dir / "model.avck", model.named_params(), checkpoint_cfg)
        last = report.epochs[-1] if report.epochs else {}
        _emit({
            "command": "train", "task": "crossmod",
            "pairs": len(pairs),
            "final_loss": last.get("train_loss"),
            "mean_positive_distance": last.get("mean_positive_distance"),
            "mean_negative_distance": last.get("mean_negative_distance"),
            "checkpoint": str(out_dir / "model.avck"),
        })
        return EXIT_OK

    base_variant, weak = localizer.parse_variant(args.variant)
    task = "weak" if (weak or args.task == "weak") else "supervised"
    first = corpus[0]
    model_cfg = localizer.ModelConfig(
        variant=base_variant,
        num_classes=first.num_classes,
        d_v=first.d_v, k=first.k, d_a=first.d_a,
        hidden_dim=args.hidden,
        fusion=FusionSpec(operator=args.fusion, placement=args.placement,
                          joint_dim=args.joint_dim, blocks=args.blocks),
        seed=args.seed,
    )
    model = localizer.LocalizerModel(model_cfg)
    train_cfg = localizer.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, task=task, patience=args.patience)
    report = localizer.train(model, parts, train_cfg)
    report.to_json(out_dir / "report.json")
    report.to_csv(out_dir / "report.csv")
    checkpoint_cfg = {
        "kind": "localizer",
        "model": model_cfg.to_dict(),
        "train": asdict(train_cfg),
        "data": {"fractions": list(args.fractions), "split_seed": args.seed},
    }
    save_checkpoint(out_dir / "model.avck", model.named_params(), checkpoint_cfg)
    _emit({
        "command": "train", "task": task, "variant": args.variant,
        "epochs_run": len(report.epochs),
        "best_epoch": report.best_epoch,
        "best_val_accuracy": report.best_val_accuracy,
        "checkpoint": str(out_dir / "model.avck"),
    })
    return EXIT_OK


def _load_localizer(path):
    tensors, cfg = load_checkpoint(path)
    if cfg.get("kind") != "localizer":
        raise ConfigError(f"{path} is not a localizer checkpoint")
    model = localizer.LocalizerModel(localizer.ModelConfig.from_dict(cfg["model"]))
    restore_into(model.named_params(), tensors)
    return model, cfg


def _load_avdln(path):
    tensors, cfg = load_checkpoint(path)
    if cfg.get("kind") != "avdln":
        raise ConfigError(f"{path} is not an avdln checkpoint")
    model = crossmod.AvdlnModel(crossmod.AvdlnConfig.from_dict(cfg["model"]))
    restore_into(model.named_params(), tensors)
    return model, cfg


def cmd_eval(args) -> int:
    model, cfg = _load_localizer(args.checkpoint)
    corpus = data.read_corpus(args.data)
    data_cfg = cfg.get("data", {})
    parts = _split_from(corpus, tuple(data_cfg.get("fractions", (0.8, 0.1, 0.1))),
                        data_cfg.get("split_seed", 0))
    part = getattr(parts, args.split)
    accuracy = localizer.evaluate(model, part)
    summary = {
        "command": "eval",
        "split": args.split,
        "videos": len(part),
        "segments": sum(s.T for s in part),
        "accuracy": accuracy,
    }
    if args.report:
        with open(args.report, "w") as f:
            json.dump(summary, f, indent=2)
    _emit(summary)
    return EXIT_OK


def cmd_localize(args) -> int:
    corpus = data.read_corpus(args.data)
    short = data.short_event_only(corpus)
    direction = args.direction.upper()
    cases = crossmod.build_eval_cases(short, direction, window=args.window)
    if not cases:
        raise ContractError("no short-event videos available for localization")
    if args.checkpoint:
        model, _ = _load_avdln(args.checkpoint)
    else:
        first = corpus[0]
        model = crossmod.AvdlnModel(crossmod.AvdlnConfig(
            d_v=first.d_v, d_a=first.d_a, seed=args.seed))
    hits = crossmod.write_localization_results(model, cases, args.out)
    _emit({
        "command": "localize",
        "direction": direction,
        "queries": len(cases),
        "exact_matches": hits,
        "accuracy": hits / len(cases),
        "out": str(args.out),
    })
    return EXIT_OK


def cmd_attmaps(args) -> int:
    corpus = data.read_corpus(args.data)
    if args.checkpoint:
        model, _ = _load_localizer(args.checkpoint)
    else:
        first = corpus[0]
        base_variant, _ = localizer.parse_variant(args.variant)
        model = localizer.LocalizerModel(localizer.ModelConfig(
            variant=base_variant, num_classes=first.num_classes,
            d_v=first.d_v, k=first.k, d_a=first.d_a, seed=args.seed))
    if model.attention is None:
        raise ConfigError(
            f"variant {model.variant!r} has no attention stage; use V-att or A+V-att")
    wanted = set(args.video) if args.video else None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for seq in corpus:
        if wanted is not None and seq.video_id not in wanted:
            continue
        maps = model.attention_maps(seq)
        write_attention_csv(maps, out_dir / f"{seq.video_id}.csv")
        for t, weights in enumerate(maps):
            write_attention_pgm(weights, out_dir / f"{seq.video_id}_t{t}.pgm")
        written += 1
    if wanted is not None and written < len(wanted):
        raise ContractError("some requested video ids are not in the corpus")
    _emit({"command": "attmaps", "videos": written, "out": str(out_dir)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# artifact validation


def _validate_feature_file(path: Path) -> dict:
    import io

    raw = path.read_bytes()
    seq = data.read_features(io.BytesIO(raw))
    buf = io.BytesIO()
    data.write_features(seq, buf)
    if buf.getvalue() != raw:
        raise FormatError(f"{path}: re-serialization does not round-trip")
    return {"kind": "features", "video_id": seq.video_id, "segments": seq.T}


def _validate_checkpoint(path: Path) -> dict:
    import io
    import struct as struct_mod

    raw = path.read_bytes()
    tensors, cfg = load_checkpoint(path)
    buf = io.BytesIO()
    buf.write(b"AVCK")
    buf.write(struct_mod.pack("<H", 1))
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    buf.write(struct_mod.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct_mod.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        enc = name.encode("utf-8")
        buf.write(struct_mod.pack("<H", len(enc)))
        buf.write(enc)
        buf.write(struct_mod.pack("<B", arr.ndim))
        buf.write(struct_mod.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if buf.getvalue() != raw:
        raise FormatError(f"{path}: re-serialization does not round-trip")
    return {"kind": "checkpoint", "tensors": len(tensors)}


def _validate_jsonl(path: Path) -> dict:
    count = 0
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise FormatError(f"{path}:{line_no}: expected a JSON object")
        count += 1
    return {"kind": "jsonl", "records": count}


def _validate_json(path: Path) -> dict:
    try:
        json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return {"kind": "json"}


def _validate_csv(path: Path) -> dict:
    import csv as csv_mod

    with open(path, newline="") as f:
        rows = list(csv_mod.reader(f))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise FormatError(f"{path}: row {i} has {len(row)} fields, expected {width}")
    return {"kind": "csv", "rows": len(rows)}


def _validate_pgm(path: Path) -> dict:
    raw = path.read_bytes()
    if not raw.startswith(b"P5\n"):
        raise FormatError(f"{path}: not a binary PGM")
    header, _, rest = raw.partition(b"\n255\n")
    dims = header.split(b"\n")[1].split()
    w, h = int(dims[0]), int(dims[1])
    if len(rest) != w * h:
        raise FormatError(f"{path}: payload is {len(rest)} bytes, expected {w * h}")
    return {"kind": "pgm", "width": w, "height": h}


def cmd_validate(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise FormatError(f"no such path: {path}")
    if path.is_dir():
        manifest = path / "manifest.jsonl"
        if not manifest.exists():
            raise FormatError(f"{path}: corpus directory lacks manifest.jsonl")
        _validate_jsonl(manifest)
        checked = 0
        for line in manifest.read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            feature = path / f"{entry['id']}.avef"
            if not feature.exists():
                raise FormatError(f"{path}: missing feature file for {entry['id']!r}")
            _validate_feature_file(feature)
            checked += 1
        _emit({"command": "validate", "kind": "corpus", "videos": checked})
        return EXIT_OK

    suffix = path.suffix.lower()
    if suffix == ".avef":
        result = _validate_feature_file(path)
    elif suffix == ".avck":
        result = _validate_checkpoint(path)
    elif suffix == ".jsonl":
        result = _validate_jsonl(path)
    elif suffix == ".json":
        result = _validate_json(path)
    elif suffix == ".csv":
        result = _validate_csv(path)
    elif suffix == ".pgm":
        result = _validate_pgm(path)
    else:
        raise ConfigError(f"unrecognized artifact type: {path}")
    _emit({"command": "validate", **result})
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "localize": cmd_localize,
    "attmaps": cmd_attmaps,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        return COMMANDS[args.command](args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AvlocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
