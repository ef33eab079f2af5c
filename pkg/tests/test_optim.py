import numpy as np
import pytest

from texturefuse.optim import AdamState, LrSchedule, adam_init, adam_step, lr_at


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self, rng):
        params = [rng.normal(0, 1, (3, 4)), rng.normal(0, 1, 5)]
        before = [p.copy() for p in params]
        state = adam_init(params)
        adam_step(params, [np.zeros_like(p) for p in params], state, lr=0.1)
        for p, b in zip(params, before):
            np.testing.assert_array_equal(p, b)
        assert state.t == 1

    def test_zero_grad_noop_holds_for_any_state(self, rng):
        # even with accumulated moments pointing elsewhere, m stays zero when
        # every gradient so far was zero
        params = [rng.normal(0, 1, 4)]
        state = adam_init(params)
        before = params[0].copy()
        for _ in range(7):
            adam_step(params, [np.zeros(4)], state, lr=0.5)
        np.testing.assert_array_equal(params[0], before)
        assert state.t == 7

    def test_first_step_hand_computed(self):
        # bias-corrected first step has unit update ratio: 1.0 - 0.1 = 0.9
        params = [np.array([1.0])]
        state = adam_init(params)
        adam_step(params, [np.array([1.0])], state, lr=0.1)
        np.testing.assert_allclose(params[0], [0.9], atol=1e-6)

    def test_hundred_steps_quadratic_matches_reference_simulation(self):
        # reference oracle: the same recurrences written out longhand
        def reference(x0, lr, steps):
            x, m, v = x0, 0.0, 0.0
            b1, b2, eps = 0.9, 0.999, 1e-8
            for t in range(1, steps + 1):
                g = 2.0 * x
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * g * g
                x -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            return x

        params = [np.array([5.0])]
        state = adam_init(params)
        for _ in range(100):
            adam_step(params, [2.0 * params[0]], state, lr=0.1)
        ref = reference(5.0, 0.1, 100)
        np.testing.assert_allclose(params[0], [ref], rtol=1e-10)
        assert abs(params[0][0]) < 5.0

    def test_weight_decay_folded_into_gradient(self):
        params = [np.array([2.0])]
        state = adam_init(params, weight_decay=0.5)
        adam_step(params, [np.array([0.0])], state, lr=0.1)
        # g = 0 + 0.5*2 = 1 -> first step ratio 1 -> param 1.9
        np.testing.assert_allclose(params[0], [1.9], atol=1e-6)

    def test_nonfinite_gradient_rejected_naming_param(self):
        params = [np.ones(3), np.ones(2)]
        state = adam_init(params)
        grads = [np.ones(3), np.array([1.0, np.nan])]
        with pytest.raises(ValueError, match="non-finite gradient for net.fc.b"):
            adam_step(params, grads, state, lr=0.1, names=["net.fc.w", "net.fc.b"])
        # step rejected before any mutation
        assert state.t == 0
        np.testing.assert_array_equal(params[0], np.ones(3))

    def test_shape_mismatch_rejected(self):
        params = [np.ones(3)]
        state = adam_init(params)
        with pytest.raises(ValueError, match="shape"):
            adam_step(params, [np.ones(4)], state, lr=0.1)

    def test_second_moment_nonnegative(self, rng):
        params = [rng.normal(0, 1, 6)]
        state = adam_init(params)
        for _ in range(5):
            adam_step(params, [rng.normal(0, 1, 6)], state, lr=0.01)
        assert all(np.all(v >= 0) for v in state.v)
        assert state.t == 5


class TestLrSchedule:
    def test_base_rate_at_iteration_zero(self):
        sched = LrSchedule(1e-4, 0.3, 40_000, 100_000)
        assert lr_at(sched, 0) == 1e-4

    def test_one_decay_step_applied(self):
        sched = LrSchedule(1e-4, 0.3, 40_000, 100_000)
        np.testing.assert_allclose(lr_at(sched, 50_000), 3e-5)

    def test_unit_gamma_is_constant(self):
        sched = LrSchedule(0.01, 1.0, 10, 100)
        assert all(lr_at(sched, i) == 0.01 for i in range(0, 100, 7))

    def test_out_of_range_iteration_rejected(self):
        sched = LrSchedule(1e-4, 0.3, 10, 50)
        with pytest.raises(ValueError, match="outside"):
            lr_at(sched, 50)
        with pytest.raises(ValueError, match="outside"):
            lr_at(sched, -1)

    def test_strictly_positive_everywhere(self):
        sched = LrSchedule(1e-6, 0.1, 3, 30)
        assert all(lr_at(sched, i) > 0 for i in range(30))

    def test_effectively_constant_when_step_exceeds_total(self):
        # decay interval beyond the horizon: zero decay steps ever applied
        sched = LrSchedule(1e-6, 0.1, 4_000_000, 100_000)
        assert lr_at(sched, 99_999) == 1e-6
