"""Minimal feed-forward networks with hand-written backprop.

Everything is float64 numpy: a tanh MLP whose backward pass is explicit (so
gradients can be validated against finite differences), a stable masked
softmax/categorical toolkit, and an Adam optimizer. No autograd framework is
involved anywhere in training.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np


class Mlp:
    """Tanh MLP with linear output and explicit forward/backward passes."""

    def __init__(
        self,
        in_dim: int,
        hidden: Sequence[int],
        out_dim: int,
        rng: np.random.Generator,
        out_scale: float = 0.01,
    ):
        self.in_dim = in_dim
        self.hidden = tuple(hidden)
        self.out_dim = out_dim
        sizes = [in_dim, *hidden, out_dim]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            scale = 1.0 / np.sqrt(fan_in)
            if i == len(sizes) - 2:
                scale *= out_scale  # near-zero head: ~uniform policy / ~zero value at init
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Return (output, cache). ``cache`` holds the input and every hidden
        activation, as needed by :meth:`backward`."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.tanh(z)
            cache.append(a)
        return a, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, cache: list[np.ndarray], grad_out: np.ndarray
    ) -> list[tuple[np.ndarray, np.ndarray]]:
        """Backprop ``grad_out`` (dL/d output) through the cached forward pass;
        returns per-layer (dW, db) in layer order."""
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)  # type: ignore
        g = np.atleast_2d(grad_out)
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = cache[i]
            grads[i] = (a_prev.T @ g, g.sum(axis=0))
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - cache[i] ** 2)
        return grads

    # -- parameter plumbing (checkpoints, optimizers, gradient checks) --

    def param_tensors(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.param_tensors()])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.param_tensors():
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {i}")

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.param_tensors())

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.param_tensors())

    def to_dict(self) -> dict[str, Any]:
        return {
            "in_dim": self.in_dim,
            "hidden": list(self.hidden),
            "out_dim": self.out_dim,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Mlp":
        net = cls.__new__(cls)
        net.in_dim = int(data["in_dim"])
        net.hidden = tuple(int(h) for h in data["hidden"])
        net.out_dim = int(data["out_dim"])
        net.weights = [np.asarray(w, dtype=np.float64) for w in data["weights"]]
        net.biases = [np.asarray(b, dtype=np.float64) for b in data["biases"]]
        sizes = [net.in_dim, *net.hidden, net.out_dim]
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValueError(
                    f"layer {i} has shape {w.shape}/{b.shape}, "
                    f"expected {(sizes[i], sizes[i + 1])}/({sizes[i + 1]},)"
                )
        return net


def log_softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise stable log-softmax; masked-out entries get -inf."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if mask is not None:
        z = np.where(np.atleast_2d(mask), z, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - log_norm


def softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    return np.exp(log_softmax(logits, mask))


def categorical_sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one index from a probability row via inverse CDF."""
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(probs) - 1))


def categorical_entropy(probs: np.ndarray, logp: np.ndarray) -> np.ndarray:
    """Row-wise entropy -sum(p * log p), treating p=0 terms as 0."""
    plogp = np.where(probs > 0, probs * logp, 0.0)
    return -plogp.sum(axis=1)


class Adam:
    """Per-tensor Adam with bias correction; updates parameters in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"got {len(grads)} grads for {len(self.params)} tensors")
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
