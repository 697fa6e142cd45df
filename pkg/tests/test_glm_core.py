import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logitbandits.glm_core import (
    LogisticObservation,
    MNLObservation,
    MNLParam,
    a_matrix,
    bregman_logexpsum,
    bregman_logpartition,
    dsigmoid,
    kl_bernoulli,
    kl_categorical,
    logexpsum,
    logexpsum_hessian,
    logistic_loss,
    logistic_loss_grad,
    mnl_loss,
    mnl_loss_grad,
    sigmoid,
    softmax_probs,
    softmax_invert,
)

import oracles

finite = st.floats(-50, 50, allow_nan=False)


def unit_vector(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v) * rng.random() ** (1 / d)


class TestSigmoid:
    def test_values(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(1.0) == pytest.approx(float(oracles.sigmoid(1)), abs=1e-15)
        assert sigmoid(1.0) == pytest.approx(0.7310585786, abs=1e-10)

    @given(finite)
    def test_symmetry_and_range(self, z):
        s = sigmoid(z)
        assert 0.0 < s < 1.0 or abs(z) > 36
        assert sigmoid(z) + sigmoid(-z) == pytest.approx(1.0, abs=2.3e-16)

    def test_no_overflow(self):
        with np.errstate(over="raise", invalid="raise"):
            assert sigmoid(800.0) == 1.0
            assert sigmoid(-800.0) == 0.0

    def test_derivative(self):
        z = np.linspace(-12, 12, 97)
        num = (sigmoid(z + 1e-6) - sigmoid(z - 1e-6)) / 2e-6
        np.testing.assert_allclose(dsigmoid(z), num, rtol=1e-6, atol=1e-9)


class TestLogisticLoss:
    def test_examples(self):
        e1 = np.array([1.0, 0.0])
        assert logistic_loss(LogisticObservation(e1, 1), np.zeros(2)) == pytest.approx(math.log(2))
        val = logistic_loss(LogisticObservation(e1, 1), np.array([10.0, 0.0]))
        assert val == pytest.approx(float(mp_log1p_exp(-10)), rel=1e-12)
        assert val == pytest.approx(4.53989e-5, rel=1e-5)
        np.testing.assert_allclose(logistic_loss_grad(LogisticObservation(e1, 1), np.zeros(2)),
                                   [-0.5, 0.0])

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            LogisticObservation(np.array([1.0, 1.0]), 1)
        with pytest.raises(ValueError):
            LogisticObservation(np.array([1.0, 0.0]), 2)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = unit_vector(rng, 3)
            th = rng.uniform(-4, 4, 3)
            obs = LogisticObservation(x, int(rng.integers(2)))
            num = np.array([(logistic_loss(obs, th + 1e-6 * e) - logistic_loss(obs, th - 1e-6 * e)) / 2e-6
                            for e in np.eye(3)])
            np.testing.assert_allclose(logistic_loss_grad(obs, th), num, rtol=1e-5, atol=1e-9)

    @settings(max_examples=200)
    @given(st.integers(0, 2**31), st.floats(0.01, 0.99))
    def test_convex(self, seed, t):
        rng = np.random.default_rng(seed)
        obs = LogisticObservation(unit_vector(rng, 2), int(rng.integers(2)))
        a, b = rng.uniform(-5, 5, (2, 2))
        lhs = logistic_loss(obs, t * a + (1 - t) * b)
        assert lhs <= t * logistic_loss(obs, a) + (1 - t) * logistic_loss(obs, b) + 1e-12


def mp_log1p_exp(z):
    return oracles.softplus(z)


class TestKLBernoulli:
    def test_examples(self):
        assert kl_bernoulli(0.3, 0.3) == 0.0
        assert kl_bernoulli(0.5, sigmoid(1.0)) == pytest.approx(0.1201145070, abs=1e-10)
        assert kl_bernoulli(0.9, 0.1) == pytest.approx(kl_bernoulli(0.1, 0.9), rel=1e-15)

    @pytest.mark.parametrize("p,q", [(0.0, 0.5), (0.5, 1.0), (1.2, 0.3)])
    def test_rejects_boundary(self, p, q):
        with pytest.raises(ValueError):
            kl_bernoulli(p, q)

    def test_against_mpmath(self):
        rng = np.random.default_rng(1)
        for p, q in rng.uniform(0.001, 0.999, (100, 2)):
            assert kl_bernoulli(p, q) == pytest.approx(float(oracles.kl_bernoulli(p, q)),
                                                       rel=1e-11, abs=1e-15)


class TestBregman:
    def test_examples(self):
        assert bregman_logpartition(0.7, 0.7) == 0.0
        assert bregman_logpartition(0.3, -1.2) == pytest.approx(
            kl_bernoulli(sigmoid(-1.2), sigmoid(0.3)), abs=1e-12)
        # log(1 + e^5) - log 2 - 5/2
        assert bregman_logpartition(5.0, 0.0) == pytest.approx(
            float(oracles.bregman_logpartition(5, 0)), abs=1e-13)
        assert bregman_logpartition(5.0, 0.0) == pytest.approx(1.8135681679, abs=1e-9)

    def test_kl_identity(self):
        rng = np.random.default_rng(2)
        z = rng.uniform(-10, 10, (1000, 2))
        kl = kl_bernoulli(sigmoid(z[:, 1]), sigmoid(z[:, 0]))
        np.testing.assert_allclose(bregman_logpartition(z[:, 0], z[:, 1]), kl, rtol=0, atol=1e-11)

    def test_logexpsum_kl_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            K = int(rng.integers(1, 6))
            z1, z2 = rng.uniform(-5, 5, (2, K))
            p1 = softmax_probs(np.array([1.0]), z1[:, None])
            p2 = softmax_probs(np.array([1.0]), z2[:, None])
            assert abs(kl_categorical(p2, p1) - bregman_logexpsum(z1, z2)) <= 1e-10

    def test_logexpsum_reduces_to_softplus(self):
        z = np.linspace(-20, 20, 41)
        np.testing.assert_allclose(logexpsum(z[:, None]), np.logaddexp(0, z), rtol=1e-14)

    def test_logexpsum_hessian_matches_a_matrix(self):
        rng = np.random.default_rng(4)
        x = unit_vector(rng, 2)
        Th = rng.standard_normal((3, 2))
        np.testing.assert_allclose(logexpsum_hessian(Th @ x), a_matrix(x, Th), atol=1e-15)


class TestSoftmax:
    def test_uniform_at_zero(self):
        p = softmax_probs(np.array([0.6, 0.8]), np.zeros((4, 2)))
        np.testing.assert_allclose(p, np.full(5, 0.2))

    def test_binary_consistency(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = unit_vector(rng, 3)
            th = rng.uniform(-3, 3, 3)
            z = float(x @ th)
            np.testing.assert_allclose(softmax_probs(x, th[None, :]), [1 - sigmoid(z), sigmoid(z)],
                                       atol=1e-15)

    def test_example_quarter_half_quarter(self):
        x = np.array([1.0, 0.0])
        Th = np.array([[math.log(2), 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(softmax_probs(x, Th), [0.25, 0.5, 0.25], atol=1e-15)

    def test_large_logits(self):
        with np.errstate(over="raise", invalid="raise"):
            p = softmax_probs(np.array([1.0]), np.array([[700.0], [-700.0]]))
        assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)


class TestMNLLoss:
    def test_examples(self):
        x = np.array([1.0, 0.0])
        assert mnl_loss(MNLObservation(x, 0, 1), np.zeros((1, 2))) == pytest.approx(math.log(2))
        g = mnl_loss_grad(MNLObservation(x, 1, 2), np.zeros((2, 2)))
        np.testing.assert_allclose(g, [[1 / 3 - 1, 0.0], [1 / 3, 0.0]], atol=1e-15)

    def test_negative_log_probability(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            K = int(rng.integers(1, 5))
            x = unit_vector(rng, 3)
            Th = rng.uniform(-2, 2, (K, 3))
            y = int(rng.integers(K + 1))
            p = softmax_probs(x, Th)
            assert mnl_loss(MNLObservation(x, y, K), Th) == pytest.approx(-math.log(p[y]), abs=1e-14)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            x = unit_vector(rng, 2)
            Th = rng.uniform(-2, 2, (3, 2))
            obs = MNLObservation(x, int(rng.integers(4)), 3)
            num = np.zeros_like(Th)
            for idx in np.ndindex(*Th.shape):
                e = np.zeros_like(Th)
                e[idx] = 1e-6
                num[idx] = (mnl_loss(obs, Th + e) - mnl_loss(obs, Th - e)) / 2e-6
            np.testing.assert_allclose(mnl_loss_grad(obs, Th), num, rtol=1e-5, atol=1e-9)

    def test_outcome_range(self):
        with pytest.raises(ValueError):
            MNLObservation(np.array([1.0]), 3, 2)


class TestAMatrix:
    def test_examples(self):
        x = np.array([1.0])
        np.testing.assert_allclose(a_matrix(x, np.zeros((1, 1))), [[0.25]])
        np.testing.assert_allclose(a_matrix(x, np.zeros((2, 1))), [[2 / 9, -1 / 9], [-1 / 9, 2 / 9]],
                                   atol=1e-15)

    @settings(max_examples=200)
    @given(st.integers(0, 2**31), st.integers(1, 5))
    def test_eigenvalues_in_range(self, seed, K):
        rng = np.random.default_rng(seed)
        x = unit_vector(rng, 3)
        lam = np.linalg.eigvalsh(a_matrix(x, rng.uniform(-5, 5, (K, 3))))
        assert lam[0] >= -1e-12 and lam[-1] <= 0.5

    def test_binary_equals_link_derivative(self):
        x = np.array([0.6, 0.8])
        th = np.array([[1.5, -0.3]])
        assert a_matrix(x, th)[0, 0] == pytest.approx(dsigmoid(float(x @ th[0])), rel=1e-14)


class TestKLCategorical:
    def test_examples(self):
        p = np.array([0.2, 0.3, 0.5])
        assert kl_categorical(p, p) == 0.0
        val = kl_categorical(np.full(3, 1 / 3), [0.5, 0.25, 0.25])
        assert val == pytest.approx(float(oracles.kl_categorical([1 / 3] * 3, [0.5, 0.25, 0.25])),
                                    abs=1e-14)
        assert val == pytest.approx(0.0566330123, abs=1e-10)

    def test_rejects_boundary(self):
        with pytest.raises(ValueError):
            kl_categorical([0.5, 0.5, 0.0], [0.2, 0.3, 0.5])
        with pytest.raises(ValueError):
            kl_categorical([0.5, 0.6], [0.5, 0.5])


class TestSoftmaxInvert:
    def test_uniform(self):
        theta = softmax_invert([1 / 3, 1 / 3], np.array([0.6, 0.8]))
        np.testing.assert_allclose(theta.matrix, 0.0, atol=1e-15)

    def test_closed_form(self):
        theta = softmax_invert([0.5, 0.25], np.array([1.0, 0.0]))
        np.testing.assert_allclose(theta.matrix, [[math.log(2), 0.0], [0.0, 0.0]], atol=1e-15)

    def test_round_trip(self):
        x = np.array([0.6, 0.8])
        theta = softmax_invert([0.2, 0.5], x)
        np.testing.assert_allclose(softmax_probs(x, theta), [0.3, 0.2, 0.5], atol=1e-10)

    @given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5), st.integers(0, 2**31))
    def test_round_trip_random(self, weights, seed):
        w = np.asarray(weights + [1.0])
        p = w / w.sum()
        x = unit_vector(np.random.default_rng(seed), 3)
        if np.linalg.norm(x) < 1e-3:
            return
        theta = softmax_invert(p[:-1], x)
        np.testing.assert_allclose(softmax_probs(x, theta)[1:], p[:-1], atol=1e-10)


class TestMNLParam:
    def test_bound(self):
        with pytest.raises(ValueError):
            MNLParam(np.ones((2, 2)), 1.0)
        assert MNLParam(np.ones((2, 2)), 2.0).n_categories == 2
