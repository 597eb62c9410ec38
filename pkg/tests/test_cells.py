"""Sequential and child-sum cell semantics, gradients and invariants."""

import math

import numpy as np
import pytest

from treectx.autodiff import Param, Tape, grad_check
from treectx.cells import (
    CellState,
    child_sum_step,
    glorot,
    init_lstm_params,
    lstm_step,
    zero_state,
)
from treectx.errors import ShapeError


def zeroed_params(input_dim, hidden):
    prm = init_lstm_params("k", input_dim, hidden, np.random.default_rng(0))
    for p in prm.params():
        p.value[...] = 0.0
    return prm


def random_params(input_dim, hidden, seed):
    return init_lstm_params("k", input_dim, hidden, np.random.default_rng(seed))


class TestLstmStep:
    def test_all_zero_params_give_zero_state(self):
        prm = zeroed_params(3, 4)
        t = Tape()
        out = lstm_step(t, t.constant([1.0, -2.0, 0.5]), zero_state(t, 4), prm)
        np.testing.assert_array_equal(t.value(out.h), np.zeros(4))
        np.testing.assert_array_equal(t.value(out.c), np.zeros(4))

    def test_hand_evaluated_one_dim_step(self):
        # zero weights and biases, x=0, previous state (h=0, c=1):
        # every gate is 0.5, the activation 0, so c = 0.5 and h = 0.5*tanh(0.5)
        prm = zeroed_params(1, 1)
        t = Tape()
        prev = CellState(h=t.constant([0.0]), c=t.constant([1.0]))
        out = lstm_step(t, t.constant([0.0]), prev, prm)
        assert t.value(out.c)[0] == pytest.approx(0.5, abs=1e-15)
        assert t.value(out.h)[0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-15)
        assert t.value(out.h)[0] == pytest.approx(0.23105857863000487, abs=1e-15)

    def test_gradient_of_squared_norm(self):
        prm = random_params(3, 4, seed=5)
        x = np.array([0.3, -0.7, 0.2])
        prev_h = np.array([0.1, 0.2, -0.1, 0.4])
        prev_c = np.array([-0.2, 0.3, 0.5, 0.0])

        def f():
            t = Tape()
            prev = CellState(h=t.constant(prev_h), c=t.constant(prev_c))
            out = lstm_step(t, t.constant(x), prev, prm)
            return t, t.apply("sum", t.apply("mul", out.h, out.h))

        assert grad_check(f, prm.params(), step=1e-5) < 1e-6

    def test_dim_mismatch_rejected(self):
        prm = random_params(3, 4, seed=1)
        t = Tape()
        with pytest.raises(ShapeError):
            lstm_step(t, t.constant([1.0, 2.0]), zero_state(t, 4), prm)


class TestChildSumStep:
    def test_empty_children_equal_lstm_from_zero_state(self):
        prm = random_params(5, 6, seed=9)
        x = np.random.default_rng(1).uniform(-1, 1, 5)
        t1 = Tape()
        a = child_sum_step(t1, t1.constant(x), [], prm)
        t2 = Tape()
        b = lstm_step(t2, t2.constant(x), zero_state(t2, 6), prm)
        np.testing.assert_array_equal(t1.value(a.h), t2.value(b.h))
        np.testing.assert_array_equal(t1.value(a.c), t2.value(b.c))

    def test_single_child_equals_lstm_step(self):
        prm = random_params(4, 3, seed=2)
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, 4)
        h = rng.uniform(-1, 1, 3)
        c = rng.uniform(-1, 1, 3)
        t1 = Tape()
        child = CellState(h=t1.constant(h), c=t1.constant(c))
        a = child_sum_step(t1, t1.constant(x), [child], prm)
        t2 = Tape()
        prev = CellState(h=t2.constant(h), c=t2.constant(c))
        b = lstm_step(t2, t2.constant(x), prev, prm)
        np.testing.assert_array_equal(t1.value(a.h), t2.value(b.h))
        np.testing.assert_array_equal(t1.value(a.c), t2.value(b.c))

    def test_chain_of_single_children_matches_sequence(self):
        # a path-shaped recursion is the sequential model, coordinate for coordinate
        prm = random_params(4, 5, seed=4)
        rng = np.random.default_rng(5)
        xs = rng.uniform(-1, 1, size=(6, 4))
        t = Tape()
        state = child_sum_step(t, t.constant(xs[0]), [], prm)
        for x in xs[1:]:
            state = child_sum_step(t, t.constant(x), [state], prm)
        t2 = Tape()
        seq = zero_state(t2, 5)
        for x in xs:
            seq = lstm_step(t2, t2.constant(x), seq, prm)
        np.testing.assert_allclose(t.value(state.h), t2.value(seq.h), atol=1e-12)
        np.testing.assert_allclose(t.value(state.c), t2.value(seq.c), atol=1e-12)

    def test_child_permutation_moves_output_below_1e9(self):
        prm = random_params(3, 4, seed=6)
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, 3)
        states = [
            (rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)) for _ in range(8)
        ]

        def run(order):
            t = Tape()
            kids = [CellState(h=t.constant(states[i][0]), c=t.constant(states[i][1])) for i in order]
            out = child_sum_step(t, t.constant(x), kids, prm)
            return t.value(out.h).copy(), t.value(out.c).copy()

        base_h, base_c = run(range(8))
        for _ in range(20):
            perm = rng.permutation(8)
            h, c = run(perm.tolist())
            assert np.max(np.abs(h - base_h)) <= 1e-9
            assert np.max(np.abs(c - base_c)) <= 1e-9

    def test_hidden_state_bounded_by_one(self):
        rng = np.random.default_rng(8)
        prm = random_params(3, 4, seed=8)
        for p in prm.params():
            p.value *= 5.0  # push toward saturation on purpose
        t = Tape()
        kids = [
            CellState(h=t.constant(rng.uniform(-1, 1, 4)), c=t.constant(rng.uniform(-3, 3, 4)))
            for _ in range(4)
        ]
        out = child_sum_step(t, t.constant(rng.uniform(-9, 9, 3)), kids, prm)
        assert np.all(np.abs(t.value(out.h)) <= 1.0)

    def test_five_node_tree_gradients(self):
        # child-sum recursion over a small tree: root with two children, one
        # of which has two children of its own
        prm = random_params(3, 4, seed=10)
        rng = np.random.default_rng(11)
        feats = rng.uniform(-1, 1, size=(5, 3))

        def f():
            t = Tape()
            leaf_a = child_sum_step(t, t.constant(feats[3]), [], prm)
            leaf_b = child_sum_step(t, t.constant(feats[4]), [], prm)
            mid = child_sum_step(t, t.constant(feats[1]), [leaf_a, leaf_b], prm)
            leaf_c = child_sum_step(t, t.constant(feats[2]), [], prm)
            root = child_sum_step(t, t.constant(feats[0]), [mid, leaf_c], prm)
            return t, t.apply("sum", t.apply("mul", root.h, root.h))

        assert grad_check(f, prm.params(), step=1e-5) < 1e-6

    def test_gradients_include_inputs_and_child_states(self):
        # treat x and a child state as Params so the check covers them too
        prm = random_params(3, 4, seed=12)
        x = Param("x", np.random.default_rng(13).uniform(-1, 1, 3))
        child_h = Param("child_h", np.random.default_rng(14).uniform(-1, 1, 4))
        child_c = Param("child_c", np.random.default_rng(15).uniform(-1, 1, 4))

        def f():
            t = Tape()
            child = CellState(h=t.param(child_h), c=t.param(child_c))
            out = child_sum_step(t, t.param(x), [child], prm)
            return t, t.apply("sum", t.apply("mul", out.h, out.c))

        assert grad_check(f, [x, child_h, child_c] + prm.params(), step=1e-5) < 1e-6


class TestInit:
    def test_glorot_bound(self):
        rng = np.random.default_rng(20)
        w = glorot(rng, 150, 70)
        bound = np.sqrt(6.0 / (150 + 70))
        assert w.shape == (150, 70)
        assert np.all(np.abs(w) <= bound)

    def test_biases_zero_except_forget(self):
        prm = init_lstm_params("k", 70, 150, np.random.default_rng(21))
        np.testing.assert_array_equal(prm.b_i.value, np.zeros(150))
        np.testing.assert_array_equal(prm.b_a.value, np.zeros(150))
        np.testing.assert_array_equal(prm.b_o.value, np.zeros(150))
        np.testing.assert_array_equal(prm.b_f.value, np.ones(150))

    def test_param_names_unique_and_prefixed(self):
        prm = init_lstm_params("bu", 4, 3, np.random.default_rng(22))
        names = [p.name for p in prm.params()]
        assert len(set(names)) == 12
        assert all(n.startswith("bu.") for n in names)
