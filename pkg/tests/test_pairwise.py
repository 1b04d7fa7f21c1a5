import numpy as np
import pytest

from crfstereo import cnn, pairwise

import oracles


@pytest.fixture
def rng():
    return np.random.default_rng(13)


class TestRho:
    def test_paper_cases(self):
        pen = pairwise.PenaltyParams(0.4, 1.7)
        assert pairwise.rho(0, pen) == 0.0
        assert pairwise.rho(1, pen) == 0.4
        assert pairwise.rho(7, pen) == 1.7

    def test_vectorized_and_monotone(self):
        pen = pairwise.PenaltyParams(0.5, 2.0)
        out = pairwise.rho(np.array([0, 1, 2, 5]), pen)
        np.testing.assert_array_equal(out, [0.0, 0.5, 2.0, 2.0])
        assert (np.diff(out) >= 0).all()

    def test_penalty_invariant(self):
        with pytest.raises(ValueError):
            pairwise.PenaltyParams(2.0, 1.0)
        with pytest.raises(ValueError):
            pairwise.PenaltyParams(-0.1, 1.0)


class TestContrastWeights:
    def test_zero_gradient_gives_one(self):
        w = pairwise.contrast_weights(np.full((3, 4, 2), 0.7), 2.0, 1.5)
        np.testing.assert_array_equal(w.horizontal[:, :-1], 1.0)
        np.testing.assert_array_equal(w.vertical[:-1], 1.0)

    def test_worked_example(self):
        img = np.zeros((1, 2, 1))
        img[0, 1, 0] = np.log(2.0)
        w = pairwise.contrast_weights(img, 1.0, 1.0)
        np.testing.assert_allclose(w.horizontal[0, 0], 0.5)

    def test_alpha_zero_ignores_image(self, rng):
        w = pairwise.contrast_weights(rng.uniform(0, 1, (4, 5, 3)), 0.0, 1.0)
        np.testing.assert_array_equal(w.horizontal[:, :-1], 1.0)
        np.testing.assert_array_equal(w.vertical[:-1], 1.0)

    def test_monotone_in_gradient_magnitude(self):
        deltas = np.linspace(0, 3, 7)
        img = np.cumsum(np.concatenate([[0.0], deltas]))[None, :, None]
        w = pairwise.contrast_weights(img, 1.3, 0.8)
        assert (np.diff(w.horizontal[0, :-1]) <= 0).all()

    def test_boundary_entries_zero(self, rng):
        w = pairwise.contrast_weights(rng.uniform(0, 1, (3, 4, 1)), 1.0, 1.0)
        assert not w.horizontal[:, -1].any()
        assert not w.vertical[-1].any()

    def test_parameter_validation(self):
        img = np.zeros((2, 2, 1))
        with pytest.raises(ValueError):
            pairwise.contrast_weights(img, -1.0, 1.0)
        with pytest.raises(ValueError):
            pairwise.contrast_weights(img, 1.0, 0.0)


class TestPairwiseCnn:
    def test_outputs_non_negative(self, rng):
        layers = pairwise.default_pairwise_layers(rng, 1, filters=8)
        w = pairwise.pairwise_cnn_forward(rng.standard_normal((6, 7, 1)), layers)
        assert (w.horizontal >= 0).all() and (w.vertical >= 0).all()

    def test_zero_final_weights_give_constant_bias(self, rng):
        layers = pairwise.default_pairwise_layers(rng, 1, filters=4)
        layers[-1].kernel[:] = 0.0
        layers[-1].bias[:] = [0.8, -0.6]
        w = pairwise.pairwise_cnn_forward(rng.standard_normal((5, 6, 1)), layers)
        np.testing.assert_allclose(w.horizontal[:, :-1], 0.8)
        np.testing.assert_allclose(w.vertical[:-1], 0.6)
        assert not w.horizontal[:, -1].any() and not w.vertical[-1].any()

    def test_geometry_checked(self, rng):
        with pytest.raises(cnn.DimensionError):
            pairwise.pairwise_cnn_forward(
                np.zeros((4, 4, 1)),
                [cnn.glorot_layer(rng, 4, 1, 3, 3)],
            )

    def test_abs_grad_antisymmetric_and_zero_at_kink(self):
        pre = np.array([-2.0, 0.0, 3.0])
        grad = cnn._activation_grad(pre, np.abs(pre), "abs")
        np.testing.assert_array_equal(grad, [-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(
            cnn._activation_grad(-pre, np.abs(pre), "abs"), [1.0, 0.0, -1.0]
        )

    def test_zero_grad_out(self, rng):
        layers = pairwise.default_pairwise_layers(rng, 1, filters=4)
        w, caches = pairwise.pairwise_cnn_forward(
            rng.standard_normal((5, 5, 1)), layers, want_cache=True
        )
        grads, gi = pairwise.pairwise_cnn_backward(
            layers, caches, (np.zeros(w.shape), np.zeros(w.shape))
        )
        assert not gi.any()
        for gk, gb in grads:
            assert not gk.any() and not gb.any()

    def test_finite_differences_away_from_kink(self, rng):
        layers = pairwise.default_pairwise_layers(rng, 1, filters=3)
        img = rng.standard_normal((4, 5, 1))
        w, caches = pairwise.pairwise_cnn_forward(img, layers, want_cache=True)
        # keep abs inputs clear of the kink so the sign pattern is stable
        pre = caches[-1][1]
        assert np.abs(pre).min() > 1e-3
        probe_h = rng.standard_normal(w.shape)
        probe_v = rng.standard_normal(w.shape)
        grads, _ = pairwise.pairwise_cnn_backward(layers, caches, (probe_h, probe_v))

        def objective():
            ww = pairwise.pairwise_cnn_forward(img, layers)
            return float((ww.horizontal * probe_h).sum() + (ww.vertical * probe_v).sum())

        for li in range(3):
            kern = layers[li].kernel
            for flat_index in np.linspace(0, kern.size - 1, 3, dtype=int):
                index = tuple(np.unravel_index(flat_index, kern.shape))
                fd = oracles.central_difference(objective, kern, index)
                assert oracles.relative_error(fd, grads[li][0][index]) < 1e-4


class TestEdgeWeights:
    def test_non_negativity_enforced(self):
        with pytest.raises(ValueError):
            pairwise.EdgeWeights(np.array([[-1.0]]), np.array([[0.0]]))

    def test_shape_property(self):
        w = pairwise.zero_weights(3, 4)
        assert w.shape == (3, 4)


class TestWeightDump:
    def test_two_channel_layout(self, rng):
        from crfstereo import correlation

        w = pairwise.contrast_weights(rng.uniform(0, 1, (3, 4, 1)), 1.0, 1.0)
        vol = correlation.load_volume(pairwise.dump_weights(w))
        assert vol.shape == (3, 4, 2)
        np.testing.assert_array_equal(vol[:, :, 0], w.horizontal)
        np.testing.assert_array_equal(vol[:, :, 1], w.vertical)
