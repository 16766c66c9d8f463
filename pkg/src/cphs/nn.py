"""Small fully connected networks with hand-written backpropagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

ACTIVATIONS = ("tanh", "sigmoid", "linear")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _act_grad(name, a):
    # derivative expressed through the activation output
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


@dataclass
class Mlp:
    """Weights ``W[l]`` have shape (fan_in, fan_out); inputs are row vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise ContractError("need one weight, bias and activation per layer")
        for i, (w, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            if a not in ACTIVATIONS:
                raise ContractError(f"unknown activation {a!r}")
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ContractError(f"layer {i}: bias shape {b.shape} does not match weights {w.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ContractError(f"layer {i}: fan-in {w.shape[0]} != previous fan-out")

    @classmethod
    def init(cls, sizes, rng, hidden="tanh", output="sigmoid"):
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        acts = [hidden] * (len(sizes) - 2) + [output]
        return cls(weights, biases, acts)

    @classmethod
    def zeros(cls, sizes, hidden="tanh", output="sigmoid"):
        weights = [np.zeros((i, o)) for i, o in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(o) for o in sizes[1:]]
        return cls(weights, biases, [hidden] * (len(sizes) - 2) + [output])

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self):
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], list(self.activations))

    def parameters(self):
        return self.weights + self.biases

    def forward(self, x):
        """Return the output and the per-layer activations needed by ``backward``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ContractError(f"input width {x.shape[-1]} != network input size {self.sizes[0]}")
        outs = [x]
        for w, b, a in zip(self.weights, self.biases, self.activations):
            outs.append(_act(a, outs[-1] @ w + b))
        return outs[-1], outs

    def backward(self, outs, upstream):
        """Gradients of ``sum(output * upstream)`` w.r.t. parameters and input."""
        delta = np.asarray(upstream, dtype=float)
        if delta.shape != outs[-1].shape:
            raise ContractError(f"upstream shape {delta.shape} != output shape {outs[-1].shape}")
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        for i in reversed(range(len(self.weights))):
            delta = delta * _act_grad(self.activations[i], outs[i + 1])
            inp = outs[i]
            if inp.ndim == 1:
                grad_w[i] = np.outer(inp, delta)
                grad_b[i] = delta.copy()
            else:
                grad_w[i] = inp.T @ delta
                grad_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return grad_w, grad_b, delta

    def sgd_step(self, grad_w, grad_b, lr):
        for w, g in zip(self.weights, grad_w):
            w -= lr * g
        for b, g in zip(self.biases, grad_b):
            b -= lr * g

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def __call__(self, x):
        return self.forward(x)[0]


def mlp_forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)[0]


def mlp_gradient(net: Mlp, x, upstream):
    """Parameter gradients ``(grad_weights, grad_biases)`` of ``output . upstream``."""
    _, outs = net.forward(x)
    grad_w, grad_b, _ = net.backward(outs, upstream)
    return grad_w, grad_b
