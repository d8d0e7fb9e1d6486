"""Single-layer LSTM over a scalar input stream with a sigmoid readout.

Gate rows of the stacked weight matrix are ordered input, forget,
candidate, output. Column 0 holds the input weight, columns 1..H the
recurrent weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._accel import njit, pick
from .tdnn import DenseLayer, bce_from_logits, glorot, sigmoid


@njit
def _sig(z):
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    ez = np.exp(z)
    return ez / (1.0 + ez)


@njit
def _forward_numba(W, b, wr, br, X):
    B, T = X.shape
    H = wr.shape[0]
    out = np.empty(B)
    h = np.zeros(H)
    c = np.zeros(H)
    z = np.empty(4 * H)
    for s in range(B):
        h[:] = 0.0
        c[:] = 0.0
        for t in range(T):
            x = X[s, t]
            for r in range(4 * H):
                acc = b[r] + W[r, 0] * x
                for k in range(H):
                    acc += W[r, 1 + k] * h[k]
                z[r] = acc
            for k in range(H):
                ig = _sig(z[k])
                fg = _sig(z[H + k])
                gg = np.tanh(z[2 * H + k])
                og = _sig(z[3 * H + k])
                c[k] = fg * c[k] + ig * gg
                h[k] = og * np.tanh(c[k])
        acc = br
        for k in range(H):
            acc += wr[k] * h[k]
        out[s] = acc
    return out


@njit
def _grads_numba(W, b, wr, br, X, y):
    B, T = X.shape
    H = wr.shape[0]
    dW = np.zeros_like(W)
    db = np.zeros_like(b)
    dwr = np.zeros(H)
    dbr = 0.0
    loss = 0.0
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.zeros((T, 4 * H))
    dz = np.empty(4 * H)
    dh = np.empty(H)
    dc = np.empty(H)
    for s in range(B):
        for t in range(T):
            x = X[s, t]
            for r in range(4 * H):
                acc = b[r] + W[r, 0] * x
                for k in range(H):
                    acc += W[r, 1 + k] * hs[t, k]
                if r >= 2 * H and r < 3 * H:
                    gates[t, r] = np.tanh(acc)
                else:
                    gates[t, r] = _sig(acc)
            for k in range(H):
                cs[t + 1, k] = gates[t, H + k] * cs[t, k] + gates[t, k] * gates[t, 2 * H + k]
                hs[t + 1, k] = gates[t, 3 * H + k] * np.tanh(cs[t + 1, k])
        logit = br
        for k in range(H):
            logit += wr[k] * hs[T, k]
        loss += max(logit, 0.0) - logit * y[s] + np.log1p(np.exp(-abs(logit)))
        dlogit = (_sig(logit) - y[s]) / B
        dbr += dlogit
        for k in range(H):
            dwr[k] += dlogit * hs[T, k]
            dh[k] = dlogit * wr[k]
            dc[k] = 0.0
        for t in range(T - 1, -1, -1):
            for k in range(H):
                ig = gates[t, k]
                fg = gates[t, H + k]
                gg = gates[t, 2 * H + k]
                og = gates[t, 3 * H + k]
                tc = np.tanh(cs[t + 1, k])
                dck = dc[k] + dh[k] * og * (1.0 - tc * tc)
                dz[k] = dck * gg * ig * (1.0 - ig)
                dz[H + k] = dck * cs[t, k] * fg * (1.0 - fg)
                dz[2 * H + k] = dck * ig * (1.0 - gg * gg)
                dz[3 * H + k] = dh[k] * tc * og * (1.0 - og)
                dc[k] = dck * fg
            x = X[s, t]
            for r in range(4 * H):
                db[r] += dz[r]
                dW[r, 0] += dz[r] * x
                for k in range(H):
                    dW[r, 1 + k] += dz[r] * hs[t, k]
            for k in range(H):
                acc = 0.0
                for r in range(4 * H):
                    acc += W[r, 1 + k] * dz[r]
                dh[k] = acc
    return loss / B, dW, db, dwr, dbr


def _forward_numpy(W, b, wr, br, X):
    B, T = X.shape
    H = wr.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    Wx, Wh = W[:, 0], W[:, 1:]
    for t in range(T):
        z = X[:, t:t + 1] * Wx + h @ Wh.T + b
        i, f, o = sigmoid(z[:, :H]), sigmoid(z[:, H:2 * H]), sigmoid(z[:, 3 * H:])
        g = np.tanh(z[:, 2 * H:3 * H])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h @ wr + br


def _grads_numpy(W, b, wr, br, X, y):
    B, T = X.shape
    H = wr.shape[0]
    Wx, Wh = W[:, 0], W[:, 1:]
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gs = np.zeros((T, B, 4 * H))
    for t in range(T):
        z = X[:, t:t + 1] * Wx + hs[t] @ Wh.T + b
        gs[t, :, :2 * H] = sigmoid(z[:, :2 * H])
        gs[t, :, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        gs[t, :, 3 * H:] = sigmoid(z[:, 3 * H:])
        i, f, g, o = (gs[t, :, k * H:(k + 1) * H] for k in range(4))
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
    logit = hs[T] @ wr + br
    loss = bce_from_logits(logit, y)
    dlogit = (sigmoid(logit) - y) / B
    dwr = hs[T].T @ dlogit
    dbr = float(dlogit.sum())
    dW = np.zeros_like(W)
    db = np.zeros_like(b)
    dh = dlogit[:, None] * wr[None, :]
    dc = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        i, f, g, o = (gs[t, :, k * H:(k + 1) * H] for k in range(4))
        tc = np.tanh(cs[t + 1])
        dck = dc + dh * o * (1.0 - tc * tc)
        dz[:, :H] = dck * g * i * (1.0 - i)
        dz[:, H:2 * H] = dck * cs[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dck * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc = dck * f
        db += dz.sum(axis=0)
        dW[:, 0] += dz.T @ X[:, t]
        dW[:, 1:] += dz.T @ hs[t]
        dh = dz @ Wh
    return loss, dW, db, dwr, dbr


lstm_logits = pick(_forward_numba, _forward_numpy)
lstm_grads = pick(_grads_numba, _grads_numpy)


@dataclass
class LSTMModel:
    W: np.ndarray  # (4H, 1 + H), gate rows i, f, g, o
    b: np.ndarray  # (4H,)
    readout: DenseLayer  # H -> 1, sigmoid
    input_width: int = 100

    kind = "lstm"

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64).reshape(-1)
        H = self.readout.n_in
        if self.W.shape != (4 * H, 1 + H) or self.b.shape != (4 * H,):
            raise ValueError(f"gate shapes {self.W.shape}/{self.b.shape} do not match H={H}")
        if self.readout.n_out != 1 or self.readout.activation != "sigmoid":
            raise ValueError("readout must be a single sigmoid unit")
        self._one = np.empty((1, self.input_width))

    @classmethod
    def init(cls, hidden_size, input_width=100, seed=0):
        rng = np.random.default_rng(seed)
        H = hidden_size
        W = glorot(rng, 4 * H, 1 + H)
        b = np.zeros(4 * H)
        readout = DenseLayer(glorot(rng, 1, H), np.zeros(1), "sigmoid")
        return cls(W, b, readout, input_width)

    @property
    def size(self):
        return self.readout.n_in

    def params(self):
        return [self.W, self.b, self.readout.weights, self.readout.biases]

    def _args(self):
        return (self.W, self.b, np.ascontiguousarray(self.readout.weights[0]),
                float(self.readout.biases[0]))

    def logits(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return lstm_logits(*self._args(), X)

    def predict_proba(self, X):
        return sigmoid(self.logits(X))

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.uint8)

    def predict_proba_one(self, x):
        self._one[0] = x
        z = float(lstm_logits(*self._args(), self._one)[0])
        return 1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z))

    def loss_and_grads(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        loss, dW, db, dwr, dbr = lstm_grads(*self._args(), X, y)
        return float(loss), [dW, db, dwr[None, :], np.array([dbr])]

    def trace(self, sequence):
        """Per-step gate activations, cell and hidden states for one sequence."""
        H = self.size
        h = np.zeros(H)
        c = np.zeros(H)
        steps = []
        for x in np.asarray(sequence, dtype=np.float64):
            z = self.W[:, 0] * x + self.W[:, 1:] @ h + self.b
            i, f, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), sigmoid(z[3 * H:])
            g = np.tanh(z[2 * H:3 * H])
            c = f * c + i * g
            h = o * np.tanh(c)
            steps.append({"i": i, "f": f, "g": g, "o": o, "c": c.copy(), "h": h.copy()})
        return steps


def lstm_forward(model, sequence):
    x = np.asarray(getattr(sequence, "values", sequence), dtype=np.float64)
    if x.shape != (model.input_width,):
        raise ValueError(f"sequence of shape {x.shape}, model expects ({model.input_width},)")
    return float(model.predict_proba(x[None, :])[0])
