"""End-to-end command-line tests on tiny corpora."""

import json

import numpy as np
import pytest

from avloc.cli import main

SYNTH_FLAGS = ["--videos", "12", "--classes", "3", "--t", "6", "--dv", "8",
               "--k", "4", "--da", "6", "--cells", "2", "--snr", "4.0", "--seed", "7"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    last_line = out.out.strip().splitlines()[-1] if out.out.strip() else ""
    return code, (json.loads(last_line) if last_line.startswith("{") else None), out.err


@pytest.fixture()
def corpus_dir(tmp_path, capsys):
    target = tmp_path / "corpus"
    code, summary, _ = run(capsys, "synth", "--out", str(target), *SYNTH_FLAGS)
    assert code == 0
    assert summary["videos"] == 12
    return target


class TestSynth:
    def test_writes_files_and_manifest(self, corpus_dir):
        files = sorted(p.name for p in corpus_dir.glob("*.avef"))
        assert len(files) == 12
        assert (corpus_dir / "manifest.jsonl").exists()

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(capsys, "synth", "--out", str(a), *SYNTH_FLAGS)[0] == 0
        assert run(capsys, "synth", "--out", str(b), *SYNTH_FLAGS)[0] == 0
        for pa in sorted(a.iterdir()):
            pb = b / pa.name
            assert pa.read_bytes() == pb.read_bytes()

    def test_validate_accepts_the_corpus(self, corpus_dir, capsys):
        code, summary, _ = run(capsys, "validate", str(corpus_dir))
        assert code == 0
        assert summary["videos"] == 12

    def test_unwritable_directory_fails_with_data_exit(self, corpus_dir, capsys):
        target = corpus_dir / "nested"
        blocker = corpus_dir / "nested"
        blocker.write_text("a file, not a directory")
        code, _, err = run(capsys, "synth", "--out", str(target), *SYNTH_FLAGS)
        assert code == 3
        assert err


class TestTrainEval:
    def test_train_then_eval_reproduces_best_val_accuracy(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code, summary, _ = run(
            capsys, "train", "--data", str(corpus_dir), "--out", str(out),
            "--variant", "A", "--hidden", "8", "--epochs", "4",
            "--batch-size", "4", "--lr", "0.005",
            "--fractions", "0.5,0.25,0.25", "--seed", "3")
        assert code == 0
        assert (out / "model.avck").exists()
        assert (out / "report.json").exists()
        assert (out / "report.csv").exists()

        code, eval_summary, _ = run(
            capsys, "eval", "--checkpoint", str(out / "model.avck"),
            "--data", str(corpus_dir), "--split", "val")
        assert code == 0
        assert eval_summary["accuracy"] == summary["best_val_accuracy"]

    def test_weak_variant_prefix_sets_task(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "weak"
        code, summary, _ = run(
            capsys, "train", "--data", str(corpus_dir), "--out", str(out),
            "--variant", "W-A", "--hidden", "8", "--epochs", "2",
            "--batch-size", "4", "--fractions", "0.5,0.25,0.25")
        assert code == 0
        assert summary["task"] == "weak"

    def test_invalid_variant_exits_config_code(self, corpus_dir, tmp_path, capsys):
        code, _, err = run(
            capsys, "train", "--data", str(corpus_dir), "--out", str(tmp_path / "x"),
            "--variant", "A-V")
        assert code == 2
        assert "valid" in err

    def test_invalid_fusion_name_lists_valid_values(self, corpus_dir, tmp_path, capsys):
        code, _, err = run(
            capsys, "train", "--data", str(corpus_dir), "--out", str(tmp_path / "x"),
            "--variant", "A+V", "--fusion", "blend")
        assert code == 2
        assert "additive" in err

    def test_checkpoint_dim_mismatch_exits_data_code(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "run"
        assert run(capsys, "train", "--data", str(corpus_dir), "--out", str(out),
                   "--variant", "A", "--hidden", "8", "--epochs", "1",
                   "--batch-size", "4", "--fractions", "0.5,0.25,0.25")[0] == 0
        other = tmp_path / "other"
        code, _, _ = run(capsys, "synth", "--out", str(other), "--videos", "4",
                         "--classes", "3", "--t", "6", "--dv", "8", "--k", "4",
                         "--da", "5", "--cells", "2")
        assert code == 0
        code, _, err = run(capsys, "eval", "--checkpoint", str(out / "model.avck"),
                           "--data", str(other))
        assert code in (2, 3)
        assert err


class TestConfigFile:
    def test_config_file_supplies_flags_and_cli_wins(self, tmp_path, capsys):
        cfg = tmp_path / "synth.cfg"
        cfg.write_text(
            "videos = 5\nclasses = 3\nt = 6\ndv = 8\nk = 4\nda = 6\n"
            "cells = 2\nseed = 1\n# comment line\n")
        out = tmp_path / "c1"
        code, summary, _ = run(capsys, "synth", "--config", str(cfg), "--out", str(out))
        assert code == 0
        assert summary["videos"] == 5
        out2 = tmp_path / "c2"
        code, summary, _ = run(capsys, "synth", "--config", str(cfg),
                               "--out", str(out2), "--videos", "7")
        assert code == 0
        assert summary["videos"] == 7

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("wibble = 3\n")
        code, _, err = run(capsys, "synth", "--config", str(cfg),
                           "--out", str(tmp_path / "x"))
        assert code == 2
        assert "wibble" in err


class TestLocalize:
    def test_untrained_localize_rows_satisfy_exhaustive_oracle(self, tmp_path, capsys):
        corpus_dir = tmp_path / "short"
        assert run(capsys, "synth", "--out", str(corpus_dir), "--videos", "10",
                   "--classes", "3", "--t", "6", "--dv", "8", "--k", "4",
                   "--da", "6", "--cells", "2", "--snr", "4.0",
                   "--short-event-fraction", "1.0", "--seed", "5")[0] == 0
        results = tmp_path / "loc.jsonl"
        code, summary, _ = run(capsys, "localize", "--data", str(corpus_dir),
                               "--direction", "a2v", "--out", str(results), "--seed", "2")
        assert code == 0
        rows = [json.loads(line) for line in results.read_text().splitlines()]
        assert len(rows) == summary["queries"]

        from avloc.crossmod import AvdlnConfig, AvdlnModel, build_eval_cases
        from avloc.data import read_corpus, short_event_only
        from helpers import euclidean_oracle, sliding_window_oracle

        corpus = read_corpus(corpus_dir)
        model = AvdlnModel(AvdlnConfig(d_v=8, d_a=6, seed=2))
        cases = build_eval_cases(short_event_only(corpus), "A2V")
        assert len(cases) == len(rows)
        for row, case in zip(rows, cases):
            t_emb = model.embed_visual_np(case.target)
            q_emb = model.embed_audio_np(case.query)
            want_t, want_cost = sliding_window_oracle(
                lambda ti, qi: euclidean_oracle(t_emb[ti], q_emb[qi]),
                len(case.target), len(case.query))
            assert row["t_star"] == want_t
            np.testing.assert_allclose(row["cumulative_distance"], want_cost, atol=1e-9)
            assert row["hit"] == (row["t_star"] == row["ground_truth"])

        code, v_summary, _ = run(capsys, "validate", str(results))
        assert code == 0 and v_summary["records"] == len(rows)

    def test_crossmod_training_pipeline(self, tmp_path, capsys):
        corpus_dir = tmp_path / "short"
        assert run(capsys, "synth", "--out", str(corpus_dir), "--videos", "16",
                   "--classes", "3", "--t", "6", "--dv", "8", "--k", "4",
                   "--da", "6", "--cells", "2", "--snr", "4.0",
                   "--short-event-fraction", "1.0", "--seed", "6")[0] == 0
        out = tmp_path / "avdln"
        code, summary, _ = run(
            capsys, "train", "--data", str(corpus_dir), "--out", str(out),
            "--task", "crossmod", "--epochs", "3", "--batch-size", "32",
            "--embed-dim", "8", "--fractions", "0.75,0.0,0.25", "--seed", "8")
        assert code == 0
        assert summary["mean_positive_distance"] < summary["mean_negative_distance"]
        results = tmp_path / "loc.jsonl"
        code, _, _ = run(capsys, "localize", "--data", str(corpus_dir),
                         "--direction", "v2a", "--checkpoint", str(out / "model.avck"),
                         "--out", str(results))
        assert code == 0


class TestAttmaps:
    def test_export_parses_and_is_simplex(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "maps"
        code, summary, _ = run(capsys, "attmaps", "--data", str(corpus_dir),
                               "--variant", "V-att", "--out", str(out))
        assert code == 0
        assert summary["videos"] == 12
        csvs = sorted(out.glob("*.csv"))
        assert len(csvs) == 12
        weights = np.loadtxt(csvs[0], delimiter=",")
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-9)
        pgms = sorted(out.glob("*.pgm"))
        assert len(pgms) == 12 * 6
        code, v_summary, _ = run(capsys, "validate", str(pgms[0]))
        assert code == 0 and v_summary["kind"] == "pgm"

    def test_variant_without_attention_rejected(self, corpus_dir, tmp_path, capsys):
        code, _, err = run(capsys, "attmaps", "--data", str(corpus_dir),
                           "--variant", "A", "--out", str(tmp_path / "x"))
        assert code == 2
        assert "attention" in err


class TestValidate:
    def test_corrupted_feature_file_rejected(self, corpus_dir, capsys):
        victim = sorted(corpus_dir.glob("*.avef"))[0]
        raw = bytearray(victim.read_bytes())
        raw = raw[:len(raw) // 2]
        victim.write_bytes(bytes(raw))
        code, _, err = run(capsys, "validate", str(victim))
        assert code == 3
        assert "offset" in err

    def test_checkpoint_validates(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "run"
        assert run(capsys, "train", "--data", str(corpus_dir), "--out", str(out),
                   "--variant", "A", "--hidden", "8", "--epochs", "1",
                   "--batch-size", "4", "--fractions", "0.5,0.25,0.25")[0] == 0
        code, summary, _ = run(capsys, "validate", str(out / "model.avck"))
        assert code == 0
        assert summary["kind"] == "checkpoint"
        code, summary, _ = run(capsys, "validate", str(out / "report.json"))
        assert code == 0
        code, summary, _ = run(capsys, "validate", str(out / "report.csv"))
        assert code == 0

    def test_unknown_artifact_type_is_config_error(self, tmp_path, capsys):
        weird = tmp_path / "thing.xyz"
        weird.write_text("hello")
        code, _, _ = run(capsys, "validate", str(weird))
        assert code == 2


class TestDownstream:
    def test_zero_snr_corpus_trains_to_chance(self, tmp_path, capsys):
        corpus_dir = tmp_path / "noise"
        assert run(capsys, "synth", "--out", str(corpus_dir), "--videos", "16",
                   "--classes", "3", "--t", "6", "--dv", "8", "--k", "4",
                   "--da", "6", "--cells", "2", "--snr", "0", "--seed", "9")[0] == 0
        out = tmp_path / "run"
        code, _, _ = run(capsys, "train", "--data", str(corpus_dir), "--out", str(out),
                         "--variant", "A", "--hidden", "8", "--epochs", "3",
                         "--batch-size", "4", "--fractions", "0.75,0.0,0.25", "--seed", "9")
        assert code == 0
        code, summary, _ = run(capsys, "eval", "--checkpoint", str(out / "model.avck"),
                               "--data", str(corpus_dir), "--split", "test")
        assert code == 0
        # 24 test segments, chance 1/4: allow three binomial deviations
        p = 0.25
        sigma = (p * (1 - p) / summary["segments"]) ** 0.5
        assert abs(summary["accuracy"] - p) <= 3 * sigma + 1e-9

    def test_divergent_training_exits_code_four(self, corpus_dir, tmp_path, capsys):
        code, _, err = run(
            capsys, "train", "--data", str(corpus_dir), "--out", str(tmp_path / "x"),
            "--variant", "A", "--hidden", "8", "--epochs", "2", "--batch-size", "4",
            "--lr", "1e308", "--fractions", "0.75,0.0,0.25")
        assert code == 4
        assert "non-finite" in err

    def test_weak_checkpoint_eval_scores_segments(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "weak"
        assert run(capsys, "train", "--data", str(corpus_dir), "--out", str(out),
                   "--variant", "A", "--task", "weak", "--hidden", "8",
                   "--epochs", "2", "--batch-size", "4",
                   "--fractions", "0.5,0.25,0.25")[0] == 0
        code, summary, _ = run(capsys, "eval", "--checkpoint", str(out / "model.avck"),
                               "--data", str(corpus_dir), "--split", "test")
        assert code == 0
        assert summary["segments"] == summary["videos"] * 6
        assert 0.0 <= summary["accuracy"] <= 1.0
