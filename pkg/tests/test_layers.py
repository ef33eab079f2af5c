import numpy as np
import pytest

from texturefuse import layers as L
from conftest import conv_oracle, fd_gradient, max_rel_err, pool_windows_oracle, sample_indices


class TestLayerSpec:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown layer kind"):
            L.LayerSpec("dense")

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            L.LayerSpec("conv", kernel=0, out_channels=4)
        with pytest.raises(ValueError):
            L.LayerSpec("conv", out_channels=0)
        with pytest.raises(ValueError):
            L.LayerSpec("dropout", dropout_rate=1.0)
        with pytest.raises(ValueError):
            L.LayerSpec("lrn", lrn_params=(4, 1e-4, 0.75, 2.0))


class TestConvForward:
    def test_one_by_one_identity(self):
        x = np.arange(12.0).reshape(1, 3, 4)
        w = np.ones((1, 1, 1, 1))
        b = np.zeros(1)
        out = L.conv_forward(x, w, b)
        np.testing.assert_array_equal(out, x)

    def test_all_ones_constant_sum(self):
        x = np.ones((1, 5, 5))
        w = np.ones((1, 1, 3, 3))
        out = L.conv_forward(x, w, np.zeros(1))
        assert out.shape == (1, 3, 3)
        np.testing.assert_array_equal(out, np.full((1, 3, 3), 9.0))

    def test_matches_nested_loop_oracle(self, rng):
        x = rng.random((2, 7, 7))
        w = rng.normal(0, 1, (3, 2, 3, 3))
        b = rng.normal(0, 1, 3)
        out = L.conv_forward(x, w, b)
        np.testing.assert_allclose(out, conv_oracle(x, w, b), atol=1e-6)

    @pytest.mark.parametrize("stride,padding", [((1, 1), (1, 1)), ((2, 2), (0, 0)), ((2, 3), (2, 1))])
    def test_oracle_with_stride_and_padding(self, rng, stride, padding):
        x = rng.random((3, 9, 11))
        w = rng.normal(0, 1, (4, 3, 3, 4))
        b = rng.normal(0, 1, 4)
        out = L.conv_forward(x, w, b, stride, padding)
        np.testing.assert_allclose(out, conv_oracle(x, w, b, stride, padding), atol=1e-6)

    def test_large_kernel_uses_window_path(self, rng):
        # 4x12 kernel exceeds the shift-and-GEMM cutoff
        x = rng.random((2, 6, 15))
        w = rng.normal(0, 1, (5, 2, 4, 12))
        b = rng.normal(0, 1, 5)
        np.testing.assert_allclose(L.conv_forward(x, w, b), conv_oracle(x, w, b), atol=1e-6)

    def test_channel_mismatch_rejected_with_shapes(self, rng):
        x = rng.random((1, 3, 5, 5))
        w = rng.normal(0, 1, (2, 2, 3, 3))
        with pytest.raises(ValueError, match=r"channels 3 != weight in-channels 2"):
            L.conv_fwd(x, w, np.zeros(2))

    def test_kernel_larger_than_padded_input_rejected(self, rng):
        x = rng.random((1, 2, 2))
        w = np.ones((1, 1, 5, 5))
        with pytest.raises(ValueError, match="smaller than kernel"):
            L.conv_forward(x, w, np.zeros(1))

    def test_finite_on_finite_input(self, rng):
        x = rng.normal(0, 100, (1, 4, 8, 8))
        w = rng.normal(0, 10, (4, 4, 3, 3))
        out, _ = L.conv_fwd(x, w, rng.normal(0, 1, 4), (1, 1), (1, 1))
        assert np.all(np.isfinite(out))


class TestShapeFormulas:
    def test_conv_formula_matches_window_enumeration(self):
        for n in range(1, 13):
            for k in range(1, 5):
                for s in range(1, 4):
                    for p in range(0, 3):
                        if n + 2 * p < k:
                            continue
                        padded = n + 2 * p
                        count = sum(1 for start in range(0, padded - k + 1, s) if True)
                        assert L.conv_out_len(n, k, s, p) == count, (n, k, s, p)

    def test_pool_formula_matches_window_enumeration(self):
        for n in range(1, 13):
            for k in range(1, 5):
                for s in range(1, 4):
                    assert L.pool_out_len(n, k, s) == pool_windows_oracle(n, k, s), (n, k, s)

    def test_pool_spec_examples(self):
        assert L.pool_out_len(4, 2, 2) == 2
        assert L.pool_out_len(5, 2, 2) == 3  # ceil((5-2)/2)+1

    def test_frequency_axis_survives_four_pools(self):
        n = 50
        chain = []
        for _ in range(4):
            n = L.pool_out_len(n, 2, 2)
            chain.append(n)
        assert chain == [25, 13, 7, 4]


class TestMaxPool:
    def test_even_axis(self):
        x = np.arange(8.0).reshape(1, 2, 4)
        out = L.maxpool_forward(x, 2, 2)
        assert out.shape == (1, 1, 2)
        np.testing.assert_array_equal(out[0], [[5.0, 7.0]])

    def test_ceil_partial_window(self):
        x = np.array([[[1.0, 5.0, 2.0, 4.0, 9.0]]])
        out = L.maxpool_forward(x, (1, 2), (1, 2))
        np.testing.assert_array_equal(out[0], [[5.0, 4.0, 9.0]])

    def test_floor_mode_drops_partial_window(self):
        x = np.array([[[1.0, 5.0, 2.0, 4.0, 9.0]]])
        out = L.maxpool_forward(x, (1, 2), (1, 2), ceil_mode=False)
        np.testing.assert_array_equal(out[0], [[5.0, 4.0]])

    def test_matches_window_enumeration(self, rng):
        x = rng.random((2, 3, 7, 9))
        out, _ = L.maxpool_fwd(x, (2, 2), (2, 2))
        assert out.shape == (2, 3, 4, 5)
        for i in range(4):
            for j in range(5):
                win = x[:, :, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                np.testing.assert_array_equal(out[:, :, i, j], win.max(axis=(2, 3)))


class TestGradients:
    """Central finite differences, 64-bit, step 1e-4, per layer kind."""

    N_SHAPES = 5
    PROBES = 10
    TOL = 1e-4

    def _shapes(self, rng):
        return [tuple(int(rng.integers(3, 9)) for _ in range(2)) for _ in range(self.N_SHAPES)]

    def test_conv_gradients(self, rng):
        for hw in self._shapes(rng):
            x = rng.random((2, 3) + tuple(d + 2 for d in hw))
            w = rng.normal(0, 0.5, (4, 3, 3, 3))
            b = rng.normal(0, 0.5, 4)
            y, xp = L.conv_fwd(x, w, b, (1, 1), (1, 1))
            proj = rng.random(y.shape)
            dx, dw, db = L.conv_bwd(proj, w, xp, (1, 1), (1, 1))

            def loss():
                out, _ = L.conv_fwd(x, w, b, (1, 1), (1, 1))
                return float((proj * out).sum())

            for t, g in ((x, dx), (w, dw), (b, db)):
                idx = sample_indices(t.shape, self.PROBES, rng)
                assert max_rel_err([g[i] for i in idx], fd_gradient(loss, t, idx)) < self.TOL

    def test_conv_strided_gradients(self, rng):
        for hw in self._shapes(rng):
            x = rng.random((2, 2) + tuple(d + 6 for d in hw))
            w = rng.normal(0, 0.5, (3, 2, 3, 3))
            b = rng.normal(0, 0.5, 3)
            y, xp = L.conv_fwd(x, w, b, (2, 2), (0, 0))
            proj = rng.random(y.shape)
            dx, dw, db = L.conv_bwd(proj, w, xp, (2, 2), (0, 0))

            def loss():
                out, _ = L.conv_fwd(x, w, b, (2, 2), (0, 0))
                return float((proj * out).sum())

            for t, g in ((x, dx), (w, dw), (b, db)):
                idx = sample_indices(t.shape, self.PROBES, rng)
                assert max_rel_err([g[i] for i in idx], fd_gradient(loss, t, idx)) < self.TOL

    @pytest.mark.parametrize("kernel,stride", [((2, 2), (2, 2)), ((3, 3), (2, 2))])
    def test_maxpool_gradients(self, rng, kernel, stride):
        for hw in self._shapes(rng):
            x = rng.random((2, 3) + tuple(d + 2 for d in hw))
            y, idxc = L.maxpool_fwd(x, kernel, stride)
            proj = rng.random(y.shape)
            dx = L.maxpool_bwd(proj, idxc, x.shape, kernel, stride)

            def loss():
                out, _ = L.maxpool_fwd(x, kernel, stride)
                return float((proj * out).sum())

            idx = sample_indices(x.shape, self.PROBES, rng)
            assert max_rel_err([dx[i] for i in idx], fd_gradient(loss, x, idx)) < self.TOL

    def test_avgpool_gradients(self, rng):
        for hw in self._shapes(rng):
            x = rng.random((2, 3) + tuple(d + 2 for d in hw))
            y, counts = L.avgpool_fwd(x, (3, 3), (2, 2))
            proj = rng.random(y.shape)
            dx = L.avgpool_bwd(proj, counts, x.shape, (3, 3), (2, 2))

            def loss():
                out, _ = L.avgpool_fwd(x, (3, 3), (2, 2))
                return float((proj * out).sum())

            idx = sample_indices(x.shape, self.PROBES, rng)
            assert max_rel_err([dx[i] for i in idx], fd_gradient(loss, x, idx)) < self.TOL

    def test_lrn_gradients(self, rng):
        params = (5, 1e-2, 0.75, 2.0)
        for hw in self._shapes(rng):
            x = rng.normal(0, 1, (2, 7) + hw)
            y, cache = L.lrn_fwd(x, params)
            proj = rng.random(y.shape)
            dx = L.lrn_bwd(proj, cache, params)

            def loss():
                out, _ = L.lrn_fwd(x, params)
                return float((proj * out).sum())

            idx = sample_indices(x.shape, self.PROBES, rng)
            assert max_rel_err([dx[i] for i in idx], fd_gradient(loss, x, idx)) < self.TOL

    def test_relu_gradients(self, rng):
        for hw in self._shapes(rng):
            x = rng.normal(0, 1, (2, 4) + hw)
            y, cache = L.relu_fwd(x)
            proj = rng.random(y.shape)
            dx = L.relu_bwd(proj, cache)

            def loss():
                return float((proj * L.relu_fwd(x)[0]).sum())

            idx = sample_indices(x.shape, self.PROBES, rng)
            assert max_rel_err([dx[i] for i in idx], fd_gradient(loss, x, idx)) < self.TOL

    def test_dropout_gradients_fixed_mask(self, rng):
        for hw in self._shapes(rng):
            x = rng.random((2, 4) + hw)
            y, mask = L.dropout_fwd(x, 0.4, np.random.default_rng(7), True)
            proj = rng.random(y.shape)
            dx = L.dropout_bwd(proj, mask)

            def loss():
                out, _ = L.dropout_fwd(x, 0.4, np.random.default_rng(7), True)
                return float((proj * out).sum())

            idx = sample_indices(x.shape, self.PROBES, rng)
            assert max_rel_err([dx[i] for i in idx], fd_gradient(loss, x, idx)) < self.TOL

    def test_softmax_gradients(self, rng):
        for hw in self._shapes(rng):
            x = rng.normal(0, 1, (2, 5) + hw)
            p = L.softmax_fwd(x)
            proj = rng.random(p.shape)
            dx = L.softmax_bwd(proj, p)

            def loss():
                return float((proj * L.softmax_fwd(x)).sum())

            idx = sample_indices(x.shape, self.PROBES, rng)
            assert max_rel_err([dx[i] for i in idx], fd_gradient(loss, x, idx)) < self.TOL

    def test_cross_entropy_gradients(self, rng):
        x = rng.normal(0, 1, (3, 6, 2, 2))
        labels = np.array([0, 4, 2])

        def loss():
            return L.softmax_cross_entropy(L.softmax_fwd(x), labels)[0]

        _, dlogits = L.softmax_cross_entropy(L.softmax_fwd(x), labels)
        idx = sample_indices(x.shape, 30, rng)
        assert max_rel_err([dlogits[i] for i in idx], fd_gradient(loss, x, idx)) < self.TOL

    def test_two_class_symmetric_logits(self):
        probs = L.softmax_fwd(np.zeros((1, 2, 1, 1)))
        loss, dlogits = L.softmax_cross_entropy(probs, np.array([1]))
        np.testing.assert_allclose(dlogits[0, :, 0, 0], [0.5, -0.5])
        np.testing.assert_allclose(loss, np.log(2.0))

    def test_zero_upstream_gradient_gives_zero_parameter_gradients(self, rng):
        x = rng.random((1, 2, 6, 6))
        w = rng.normal(0, 1, (3, 2, 3, 3))
        _, xp = L.conv_fwd(x, w, np.zeros(3))
        dx, dw, db = L.conv_bwd(np.zeros((1, 3, 4, 4)), w, xp)
        assert not dx.any() and not dw.any() and not db.any()


class TestSoftmaxInvariants:
    def test_sums_to_one_and_nonnegative(self, rng):
        for _ in range(20):
            x = rng.normal(0, 5, (2, 9, 3, 4))
            p = L.softmax_fwd(x)
            assert p.min() >= 0
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_stable_for_large_logits(self):
        p = L.softmax_fwd(np.array([[[[1000.0]], [[999.0]]]]))
        assert np.all(np.isfinite(p))


class TestDropout:
    def test_inference_is_identity(self, rng):
        x = rng.random((2, 3, 4, 4))
        out, mask = L.dropout_fwd(x, 0.5, rng, False)
        assert mask is None
        np.testing.assert_array_equal(out, x)

    def test_training_mean_preserved_statistically(self):
        # inverted dropout: E[out] == in; 1e4 draws, 3 sigma
        rng = np.random.default_rng(5)
        rate = 0.5
        n = 10_000
        x = np.ones((n, 1, 1, 1))
        out, _ = L.dropout_fwd(x, rate, rng, True)
        per_draw_sd = np.sqrt(rate / (1 - rate))
        assert abs(out.mean() - 1.0) < 3 * per_draw_sd / np.sqrt(n)

    def test_zero_rate_training_is_identity(self, rng):
        x = rng.random((1, 2, 3, 3))
        out, _ = L.dropout_fwd(x, 0.0, rng, True)
        np.testing.assert_array_equal(out, x)
