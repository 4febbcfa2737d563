"""LSTM step and sequence tests."""

import numpy as np
import pytest

from avloc import tensor as T
from avloc.errors import DimensionError
from avloc.lstm import GATES, LstmCell, run_sequence
from avloc.tensor import Tensor, backward

from helpers import finite_difference_check, lstm_step_oracle


def make_cell(input_dim, hidden_dim, seed=0):
    return LstmCell(input_dim, hidden_dim, rng=np.random.default_rng(seed))


class TestStep:
    def test_all_zero_parameters_give_zero_state(self):
        cell = make_cell(3, 4)
        for gate in GATES:
            cell.w[gate].data[:] = 0.0
            cell.u[gate].data[:] = 0.0
            cell.b[gate].data[:] = 0.0
        h0, c0 = cell.zero_state()
        h, c = cell.step(Tensor(np.random.default_rng(1).standard_normal(3)), h0, c0)
        np.testing.assert_array_equal(h.data, np.zeros(4))
        np.testing.assert_array_equal(c.data, np.zeros(4))

    def test_hidden_state_is_strictly_inside_unit_box(self):
        rng = np.random.default_rng(2)
        cell = make_cell(5, 6, seed=3)
        h, c = cell.zero_state()
        for _ in range(20):
            h, c = cell.step(Tensor(rng.standard_normal(5) * 5), h, c)
            assert np.all(np.abs(h.data) < 1.0)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            ind, hid = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            cell = make_cell(ind, hid, seed=int(rng.integers(0, 1000)))
            x = rng.standard_normal(ind)
            h_prev = rng.uniform(-0.9, 0.9, hid)
            c_prev = rng.standard_normal(hid)
            h, c = cell.step(Tensor(x), Tensor(h_prev), Tensor(c_prev))
            w = {g: cell.w[g].data for g in GATES}
            u = {g: cell.u[g].data for g in GATES}
            b = {g: cell.b[g].data for g in GATES}
            h_ref, c_ref = lstm_step_oracle(x, h_prev, c_prev, w, u, b)
            np.testing.assert_allclose(h.data, h_ref, atol=1e-10)
            np.testing.assert_allclose(c.data, c_ref, atol=1e-10)

    def test_dimension_mismatch_rejected(self):
        cell = make_cell(3, 4)
        h0, c0 = cell.zero_state()
        with pytest.raises(DimensionError):
            cell.step(Tensor(np.zeros(5)), h0, c0)
        with pytest.raises(DimensionError):
            cell.step(Tensor(np.zeros(3)), Tensor(np.zeros(5)), c0)


class TestSequence:
    def test_single_step_equals_step_from_zero(self):
        rng = np.random.default_rng(5)
        cell = make_cell(4, 3, seed=6)
        x = Tensor(rng.standard_normal(4))
        hs = run_sequence(cell, [x])
        h0, c0 = cell.zero_state()
        h_ref, _ = cell.step(x, h0, c0)
        np.testing.assert_array_equal(hs[0].data, h_ref.data)

    def test_truncation_reproduces_prefix_exactly(self):
        rng = np.random.default_rng(7)
        cell = make_cell(4, 5, seed=8)
        inputs = [Tensor(rng.standard_normal(4)) for _ in range(8)]
        full = run_sequence(cell, inputs)
        for t in range(1, 8):
            prefix = run_sequence(cell, inputs[:t])
            for a, b in zip(prefix, full[:t]):
                np.testing.assert_array_equal(a.data, b.data)

    def test_causality_under_future_perturbation(self):
        rng = np.random.default_rng(9)
        cell = make_cell(3, 4, seed=10)
        xs = [rng.standard_normal(3) for _ in range(6)]
        base = run_sequence(cell, [Tensor(x) for x in xs])
        for t in range(5):
            bumped = [x.copy() for x in xs]
            bumped[t + 1] += 10.0
            out = run_sequence(cell, [Tensor(x) for x in bumped])
            for s in range(t + 1):
                np.testing.assert_array_equal(out[s].data, base[s].data)
            assert not np.array_equal(out[t + 1].data, base[t + 1].data)

    def test_empty_sequence_rejected(self):
        with pytest.raises(DimensionError):
            run_sequence(make_cell(2, 2), [])

    def test_gradients_through_ten_step_unroll(self):
        rng = np.random.default_rng(11)
        cell = make_cell(2, 3, seed=12)
        inputs = [Tensor(rng.standard_normal(2)) for _ in range(10)]

        def build():
            hs = run_sequence(cell, inputs)
            return T.reduce_sum(T.concat(hs))

        finite_difference_check(build, cell.params())

    def test_gradients_reach_inputs(self):
        rng = np.random.default_rng(13)
        cell = make_cell(2, 3, seed=14)
        inputs = [Tensor(rng.standard_normal(2), requires_grad=True) for _ in range(4)]

        def build():
            return T.reduce_sum(T.concat(run_sequence(cell, inputs)))

        finite_difference_check(build, inputs)
