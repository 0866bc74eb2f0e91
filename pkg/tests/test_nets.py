from __future__ import annotations

import numpy as np
import pytest

from crewload.nets import Adam, Mlp, categorical_entropy, categorical_sample, log_softmax, softmax


def numeric_gradient(f, flat, h=1e-6):
    grad = np.zeros_like(flat)
    for i in range(len(flat)):
        up, down = flat.copy(), flat.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


class TestMlpBackward:
    def test_matches_finite_differences_scalar_loss(self):
        rng = np.random.default_rng(0)
        net = Mlp(2, [3], 2, rng, out_scale=1.0)  # 17 params
        x = rng.normal(size=(5, 2))
        target = rng.normal(size=(5, 2))

        def loss_of(flat):
            net.set_flat(flat)
            out, _ = net.forward(x)
            return 0.5 * np.sum((out - target) ** 2)

        flat0 = net.get_flat()
        net.set_flat(flat0)
        out, cache = net.forward(x)
        grads = net.backward(cache, out - target)
        analytic = np.concatenate([g.ravel() for pair in grads for g in pair])
        numeric = numeric_gradient(loss_of, flat0)
        assert rel_err(analytic, numeric).max() < 1e-4

    def test_param_count_and_flat_round_trip(self):
        net = Mlp(3, [4, 4], 2, np.random.default_rng(1))
        assert net.n_params == (3 * 4 + 4) + (4 * 4 + 4) + (4 * 2 + 2)
        flat = net.get_flat()
        net.set_flat(flat * 2)
        assert np.allclose(net.get_flat(), flat * 2)
        with pytest.raises(ValueError):
            net.set_flat(flat[:-1])

    def test_serialization_round_trip(self):
        net = Mlp(3, [4], 2, np.random.default_rng(2))
        clone = Mlp.from_dict(net.to_dict())
        assert np.array_equal(clone.get_flat(), net.get_flat())

    def test_from_dict_shape_validation(self):
        net = Mlp(3, [4], 2, np.random.default_rng(2))
        doc = net.to_dict()
        doc["weights"][0] = [[0.0] * 4] * 2  # wrong fan-in
        with pytest.raises(ValueError):
            Mlp.from_dict(doc)


class TestSoftmax:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(scale=10, size=(40, 7))
        probs = softmax(logits)
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9

    def test_log_probs_consistent_with_probs(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(10, 5))
        assert np.allclose(np.exp(log_softmax(logits)), softmax(logits), atol=1e-12)

    def test_mask_zeroes_excluded_actions(self):
        logits = np.array([[1.0, 2.0, 3.0]])
        mask = np.array([[True, False, True]])
        probs = softmax(logits, mask)
        assert probs[0, 1] == 0.0
        assert probs.sum() == pytest.approx(1.0)

    def test_numerical_stability_with_large_logits(self):
        probs = softmax(np.array([[1e4, 0.0]]))
        assert np.isfinite(probs).all()
        assert probs[0, 0] == pytest.approx(1.0)

    def test_entropy_of_uniform(self):
        logits = np.zeros((1, 8))
        probs = softmax(logits)
        ent = categorical_entropy(probs, log_softmax(logits))
        assert ent[0] == pytest.approx(np.log(8))

    def test_sampling_respects_distribution(self):
        rng = np.random.default_rng(5)
        probs = np.array([0.7, 0.2, 0.1])
        n = 20_000
        counts = np.bincount([categorical_sample(probs, rng) for _ in range(n)], minlength=3)
        assert np.abs(counts / n - probs).max() < 0.02


class TestAdam:
    def test_minimizes_quadratic(self):
        target = np.array([1.0, -2.0, 3.0])
        param = np.zeros(3)
        opt = Adam([param], lr=0.05)
        for _ in range(2000):
            opt.step([param - target])
        assert np.allclose(param, target, atol=1e-3)

    def test_grad_count_mismatch(self):
        opt = Adam([np.zeros(2)], lr=0.1)
        with pytest.raises(ValueError):
            opt.step([np.zeros(2), np.zeros(2)])
