"""Guided attention mechanism tests."""

import numpy as np
import pytest

from avloc import tensor as T
from avloc.attention import (
    GuidedAttention,
    audio_guided_visual,
    co_attend,
    global_average_pool,
    read_attention_pgm,
    visual_guided_audio,
    write_attention_csv,
    write_attention_pgm,
)
from avloc.errors import DimensionError, UnavailableFeatureError
from avloc.tensor import Tensor

from helpers import finite_difference_check


def make_att(channels, guide, proj=6, score=5, seed=0):
    return GuidedAttention(channels, guide, proj_dim=proj, score_dim=score,
                           rng=np.random.default_rng(seed))


class TestGuidedAttend:
    def test_identical_regions_give_uniform_attention(self):
        rng = np.random.default_rng(1)
        att = make_att(5, 3)
        col = rng.standard_normal(5)
        fmap = Tensor(np.tile(col[:, None], (1, 7)))
        ctx, w = att(fmap, Tensor(rng.standard_normal(3)))
        np.testing.assert_allclose(w.data, np.full(7, 1 / 7), atol=1e-12)
        np.testing.assert_allclose(ctx.data, col, atol=1e-12)

    def test_single_region(self):
        rng = np.random.default_rng(2)
        att = make_att(4, 2)
        col = rng.standard_normal((4, 1))
        ctx, w = att(Tensor(col), Tensor(rng.standard_normal(2)))
        np.testing.assert_array_equal(w.data, [1.0])
        np.testing.assert_allclose(ctx.data, col[:, 0], atol=1e-15)

    def test_context_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        att = make_att(8, 3)
        fmap = rng.standard_normal((8, 4))
        ctx, w = att(Tensor(fmap), Tensor(rng.standard_normal(3)))
        want = np.zeros(8)
        for i in range(4):
            want += w.data[i] * fmap[:, i]
        np.testing.assert_allclose(ctx.data, want, atol=1e-10)

    def test_region_count_mismatch_ok_channel_mismatch_rejected(self):
        att = make_att(5, 3)
        ctx, w = att(Tensor(np.zeros((5, 11))), Tensor(np.zeros(3)))
        assert w.shape == (11,)
        with pytest.raises(DimensionError):
            att(Tensor(np.zeros((6, 7))), Tensor(np.zeros(3)))
        with pytest.raises(DimensionError):
            att(Tensor(np.zeros((5, 7))), Tensor(np.zeros(4)))

    def test_simplex_property(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            c = int(rng.integers(1, 8))
            g = int(rng.integers(1, 8))
            k = int(rng.integers(1, 10))
            att = make_att(c, g, seed=int(rng.integers(0, 10**6)))
            _, w = att(Tensor(rng.standard_normal((c, k)) * 3),
                       Tensor(rng.standard_normal(g) * 3))
            assert np.all(w.data >= 0)
            assert abs(w.data.sum() - 1.0) <= 1e-9

    def test_zero_guide_and_zero_biases_give_uniform_attention(self):
        rng = np.random.default_rng(5)
        att = make_att(4, 3)
        att.proj_guide.bias.data[:] = 0.0
        # the guide path contributes a constant per-region offset; with a
        # zero guide vector and zero bias that offset is tanh(0) = 0 into
        # W_g, shared by every region, so scores depend only on the map.
        fmap = Tensor(np.tile(rng.standard_normal(4)[:, None], (1, 6)))
        _, w = att(fmap, Tensor(np.zeros(3)))
        np.testing.assert_allclose(w.data, np.full(6, 1 / 6), atol=1e-12)

    def test_guide_shift_in_projection_null_space_leaves_attention_unchanged(self):
        rng = np.random.default_rng(6)
        att = make_att(4, 3)
        att.proj_guide.weight.data[:, 1] = 0.0  # guide coordinate 1 is ignored
        fmap = Tensor(rng.standard_normal((4, 5)))
        guide = rng.standard_normal(3)
        _, w1 = att(fmap, Tensor(guide))
        shifted = guide.copy()
        shifted[1] += 17.0
        _, w2 = att(fmap, Tensor(shifted))
        np.testing.assert_array_equal(w1.data, w2.data)

    def test_region_permutation_permutes_weights_and_preserves_context(self):
        rng = np.random.default_rng(7)
        att = make_att(5, 2)
        fmap = rng.standard_normal((5, 6))
        guide = Tensor(rng.standard_normal(2))
        ctx1, w1 = att(Tensor(fmap), guide)
        perm = rng.permutation(6)
        ctx2, w2 = att(Tensor(fmap[:, perm]), guide)
        np.testing.assert_allclose(w2.data, w1.data[perm], atol=1e-12)
        np.testing.assert_allclose(ctx2.data, ctx1.data, atol=1e-12)

    def test_gradients_pass_finite_difference_check(self):
        rng = np.random.default_rng(8)
        att = make_att(3, 2, proj=4, score=3, seed=9)
        fmap = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        guide = Tensor(rng.standard_normal(2), requires_grad=True)

        def build():
            ctx, w = att(fmap, guide)
            return T.add(T.reduce_sum(T.mul(ctx, ctx)), T.pick(w, 0))

        finite_difference_check(build, att.params() + [fmap, guide])


class TestDirections:
    def test_visual_guided_audio_requires_spatial_block(self):
        att = make_att(4, 3)
        with pytest.raises(UnavailableFeatureError):
            visual_guided_audio(att, None, Tensor(np.zeros(3)))

    def test_co_attention_matches_composed_directions(self):
        rng = np.random.default_rng(10)
        v_att = make_att(6, 3, seed=11)   # visual map guided by audio pool
        a_att = make_att(3, 6, seed=12)   # audio map guided by visual pool
        v_map = Tensor(rng.standard_normal((6, 5)))
        a_map = Tensor(rng.standard_normal((3, 4)))
        v_ctx, a_ctx = co_attend(v_att, a_att, v_map, a_map)
        v_ref, _ = v_att(v_map, T.reduce_mean(a_map, axis=1))
        a_ref, _ = a_att(a_map, T.reduce_mean(v_map, axis=1))
        np.testing.assert_array_equal(v_ctx.data, v_ref.data)
        np.testing.assert_array_equal(a_ctx.data, a_ref.data)

    def test_co_attention_visual_direction_independent_of_audio_map_values(self):
        # with the audio map held constant, the visual output equals the
        # plain audio-guided result bit for bit
        rng = np.random.default_rng(13)
        v_att = make_att(6, 3, seed=14)
        a_att = make_att(3, 6, seed=15)
        v_map = Tensor(rng.standard_normal((6, 5)))
        col = rng.standard_normal(3)
        a_map = Tensor(np.tile(col[:, None], (1, 4)))
        v_ctx, _ = co_attend(v_att, a_att, v_map, a_map)
        direct, _ = audio_guided_visual(v_att, v_map, Tensor(col))
        np.testing.assert_array_equal(v_ctx.data, direct.data)

    def test_global_average_pool(self):
        m = Tensor(np.array([[1.0, 3.0], [2.0, 4.0]]))
        np.testing.assert_array_equal(global_average_pool(m).data, [2.0, 3.0])


class TestExports:
    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(16)
        rows = [rng.dirichlet(np.ones(49)) for _ in range(3)]
        path = tmp_path / "att.csv"
        write_attention_csv(rows, path)
        back = np.loadtxt(path, delimiter=",")
        np.testing.assert_allclose(back, np.stack(rows), atol=1e-9)

    def test_pgm_is_seven_by_seven_for_default_regions(self, tmp_path):
        rng = np.random.default_rng(17)
        w = rng.dirichlet(np.ones(49))
        path = tmp_path / "att.pgm"
        write_attention_pgm(w, path)
        img = read_attention_pgm(path)
        assert img.shape == (7, 7)
        assert img.min() == 0 and img.max() == 255

    def test_pgm_constant_weights(self, tmp_path):
        path = tmp_path / "flat.pgm"
        write_attention_pgm(np.full(49, 1 / 49), path)
        img = read_attention_pgm(path)
        assert np.all(img == 0)

    def test_pgm_non_square_region_count_is_single_row(self, tmp_path):
        path = tmp_path / "row.pgm"
        write_attention_pgm(np.linspace(0, 1, 12), path)
        assert read_attention_pgm(path).shape == (1, 12)


class TestCalibration:
    def test_trained_attention_concentrates_on_planted_cells(self):
        from avloc.data import SynthSpec, generate_synthetic, split, synthetic_class_profile
        from avloc.localizer import LocalizerModel, ModelConfig, TrainConfig, train

        spec = SynthSpec(n_videos=24, n_event_classes=3, T=8, d_v=24, k=9, d_a=12,
                         event_region_cells=2, signal_to_noise=4.0, seed=50)
        corpus = generate_synthetic(spec)
        profile = synthetic_class_profile(spec)
        parts = split(corpus, (0.8, 0.0, 0.2), seed=50)
        model = LocalizerModel(ModelConfig(
            variant="V-att", num_classes=4, d_v=24, k=9, d_a=12,
            hidden_dim=16, att_proj_dim=12, att_score_dim=8, seed=50))
        train(model, parts, TrainConfig(epochs=8, batch_size=8, lr=5e-3, seed=50))

        masses = []
        for seq in parts.test:
            s, e = seq.event_interval()
            cells = profile.region_cells[seq.video_label]
            maps = model.attention_maps(seq)
            for t in range(s, e + 1):
                masses.append(maps[t][cells].sum())
        assert np.mean(masses) >= 0.6
