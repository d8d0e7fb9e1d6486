"""Delay-buffer multilayer perceptron (TDNN).

The delay buffer is the input window itself: 100 buffered values feed one
hidden dense layer and a single sigmoid output unit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(z):
    return np.maximum(z, 0.0)


ACTIVATIONS = {"sigmoid": sigmoid, "tanh": np.tanh, "relu": relu}


def activation_grad(name, out):
    """Derivative of the activation expressed through its output."""
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - out * out
    return (out > 0).astype(out.dtype)


def bce_from_logits(z, y):
    """Mean binary cross-entropy, stable for large |z|."""
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.biases.shape[0]:
            raise ValueError(f"inconsistent layer shapes {self.weights.shape} / {self.biases.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    def pre(self, X):
        return X @ self.weights.T + self.biases

    def __call__(self, X):
        return ACTIVATIONS[self.activation](self.pre(X))


@dataclass
class TDNNModel:
    hidden: DenseLayer
    output: DenseLayer

    kind = "tdnn"

    def __post_init__(self):
        if self.output.n_out != 1 or self.output.n_in != self.hidden.n_out:
            raise ValueError("output layer must map the hidden layer to one unit")
        if self.output.activation != "sigmoid":
            raise ValueError("output unit must be sigmoid")
        self._h = np.empty(self.hidden.n_out)

    @classmethod
    def init(cls, hidden_size, input_width=100, seed=0, activation="tanh"):
        rng = np.random.default_rng(seed)
        hidden = DenseLayer(glorot(rng, hidden_size, input_width), np.zeros(hidden_size), activation)
        output = DenseLayer(glorot(rng, 1, hidden_size), np.zeros(1), "sigmoid")
        return cls(hidden, output)

    @property
    def input_width(self):
        return self.hidden.n_in

    @property
    def size(self):
        return self.hidden.n_out

    def params(self):
        """Parameter arrays in serialisation order."""
        return [self.hidden.weights, self.hidden.biases, self.output.weights, self.output.biases]

    def logits(self, X):
        return self.output.pre(self.hidden(np.atleast_2d(X)))[:, 0]

    def predict_proba(self, X):
        return sigmoid(self.logits(X))

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.uint8)

    def predict_proba_one(self, x):
        """Single-window forward pass into preallocated scratch."""
        h = self._h
        np.dot(self.hidden.weights, x, out=h)
        h += self.hidden.biases
        if self.hidden.activation == "tanh":
            np.tanh(h, out=h)
        else:
            h[:] = ACTIVATIONS[self.hidden.activation](h)
        z = float(self.output.weights[0] @ h) + float(self.output.biases[0])
        return 1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z))

    def loss_and_grads(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n = len(y)
        h = self.hidden(X)
        z = self.output.pre(h)[:, 0]
        loss = bce_from_logits(z, y)
        dz = (sigmoid(z) - y) / n
        dWo = dz[None, :] @ h
        dbo = np.array([dz.sum()])
        dh = dz[:, None] * self.output.weights[0][None, :]
        dpre = dh * activation_grad(self.hidden.activation, h)
        dWh = dpre.T @ X
        dbh = dpre.sum(axis=0)
        return loss, [dWh, dbh, dWo, dbo]


def tdnn_forward(model, window):
    x = np.asarray(getattr(window, "values", window), dtype=np.float64)
    if x.shape != (model.input_width,):
        raise ValueError(f"window of shape {x.shape}, model expects ({model.input_width},)")
    return float(model.predict_proba(x[None, :])[0])
