import numpy as np
import pytest
from scipy import integrate

from gradcheck import check_param_grads, numeric_grad, rel_error
from seads.neural import (
    LOG_STD_MAX,
    AdamState,
    Mlp,
    NonFiniteError,
    adam_step,
    gaussian_sample,
    log_sigmoid,
    sigmoid,
    softplus,
    squashed_gaussian,
    squashed_gaussian_backward,
)


class TestActivations:
    def test_stable_at_extremes(self):
        x = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
        assert np.all(np.isfinite(sigmoid(x)))
        assert np.all(np.isfinite(softplus(x)))
        assert np.all(np.isfinite(log_sigmoid(x)))
        np.testing.assert_allclose(log_sigmoid(x[1:4]), -np.log1p(np.exp(-x[1:4])), rtol=1e-12)
        np.testing.assert_allclose(sigmoid(x[1:4]), 1.0 / (1.0 + np.exp(-x[1:4])), rtol=1e-12)

    def test_softplus_matches_definition(self):
        x = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(softplus(x), np.log1p(np.exp(x)))


class TestMlp:
    def test_shapes_and_squeeze(self, rng):
        net = Mlp([4, 8, 3], rng)
        assert net(rng.normal(size=(5, 4))).shape == (5, 3)
        assert net(rng.normal(size=4)).shape == (3,)
        assert [w.shape for w, _ in net.layers] == [(4, 8), (8, 3)]

    def test_wrong_input_width_rejected(self, rng):
        with pytest.raises(ValueError):
            Mlp([4, 3], rng)(np.zeros(5))

    @pytest.mark.parametrize("head", ["linear", "sigmoid", "gaussian"])
    def test_parameter_gradients(self, rng, head):
        net = Mlp([5, 16, 16, 6], rng, head=head)
        x = rng.normal(size=(7, 5))
        w = rng.normal(size=(7, 6))

        def loss():
            return float(np.sum(net(x) * w))

        _, cache = net.forward(x)
        grads, _ = net.backward(cache, w)
        check_param_grads(loss, net.params, grads, tol=1e-6)

    def test_input_gradient(self, rng):
        net = Mlp([5, 16, 2], rng)
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(3, 2))
        _, cache = net.forward(x)
        _, gx = net.backward(cache, w, need_params=False)
        assert rel_error(gx, numeric_grad(lambda: float(np.sum(net(x) * w)), x)) < 1e-6

    def test_logit_gradient_skips_head(self, rng):
        net = Mlp([3, 8, 2], rng, head="sigmoid")
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(4, 2))
        _, cache = net.forward(x)
        grads, _ = net.backward(cache, w, through_head=False)

        def logits_loss():
            return float(np.sum(net.forward(x)[1].preacts[-1] * w))

        check_param_grads(logits_loss, net.params, grads, tol=1e-6)

    def test_clamped_log_std_passes_no_gradient(self, rng):
        net = Mlp([2, 2], rng, head="gaussian")
        net.params[1][1] = 50.0  # pushes the log-std output far above the clamp
        _, cache = net.forward(np.ones((1, 2)))
        assert cache.output[0, 1] == LOG_STD_MAX
        grads, _ = net.backward(cache, np.ones((1, 2)))
        assert grads[1][1] == 0.0 and grads[1][0] != 0.0

    def test_copy_is_independent(self, rng):
        net = Mlp([2, 4, 1], rng)
        other = net.copy()
        other.params[0] += 1.0
        assert not np.allclose(net.params[0], other.params[0])
        net.load(other.params)
        assert np.array_equal(net.params[0], other.params[0])


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        p = [np.array([1.0, -2.0])]
        state = AdamState.for_params(p, lr=0.1)
        adam_step(p, [np.array([0.5, -3.0])], state)
        # bias-corrected first step is lr * sign(g) (up to eps)
        np.testing.assert_allclose(p[0], [0.9, -1.9], atol=1e-6)

    def test_matches_reference_recursion(self, rng):
        p = [rng.normal(size=3)]
        ref = p[0].copy()
        state = AdamState.for_params(p, lr=0.01)
        m = np.zeros(3)
        v = np.zeros(3)
        for t in range(1, 6):
            g = rng.normal(size=3)
            adam_step(p, [g], state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p[0], ref, rtol=1e-12)

    def test_non_finite_gradient_rejected(self):
        p = [np.zeros(2)]
        state = AdamState.for_params(p, lr=0.1)
        with pytest.raises(NonFiniteError):
            adam_step(p, [np.array([np.nan, 0.0])], state)
        assert state.t == 0 and not p[0].any()


class TestSquashedGaussian:
    @pytest.mark.parametrize("mean,log_std", [(0.0, 0.0), (0.7, -0.5), (-1.5, 0.3)])
    def test_density_integrates_to_one(self, mean, log_std):
        def density(a):
            u = np.arctanh(a)
            noise = (u - mean) / np.exp(log_std)
            return float(np.exp(squashed_gaussian(np.array([mean]), np.array([log_std]), np.array([noise])).log_prob))

        total, _ = integrate.quad(density, -1 + 1e-12, 1 - 1e-12, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_log_prob_stable_for_saturated_actions(self):
        s = squashed_gaussian(np.array([30.0]), np.array([0.0]), np.array([0.0]))
        assert np.isfinite(s.log_prob).all()

    def test_reparameterised_gradients(self, rng):
        mean = rng.normal(size=(4, 3))
        log_std = rng.normal(scale=0.3, size=(4, 3))
        noise = rng.normal(size=(4, 3))
        wa = rng.normal(size=(4, 3))
        wl = rng.normal(size=4)

        def loss():
            s = squashed_gaussian(mean, log_std, noise)
            return float(np.sum(s.action * wa) + np.sum(s.log_prob * wl))

        s = squashed_gaussian(mean, log_std, noise)
        dm, dls = squashed_gaussian_backward(s, wa, wl)
        assert rel_error(dm, numeric_grad(loss, mean)) < 1e-6
        assert rel_error(dls, numeric_grad(loss, log_std)) < 1e-6

    def test_deterministic_sample_is_tanh_of_mean(self):
        a, _ = gaussian_sample(np.array([0.3, -2.0]), np.zeros(2), deterministic=True)
        np.testing.assert_allclose(a, np.tanh([0.3, -2.0]))
