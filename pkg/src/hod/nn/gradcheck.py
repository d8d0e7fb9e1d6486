"""Analytic gradients against central finite differences."""
import numpy as np


def _loss(model, X, y):
    return model.loss_and_grads(X, y)[0]


def gradient_check(model, X, y, epsilon=1e-5):
    """Max over parameters of |analytic - numeric| / max(1, |numeric|)."""
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    _, grads = model.loss_and_grads(X, y)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        g = np.asarray(g).reshape(p.shape)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite analytic gradient")
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + epsilon
            up = _loss(model, X, y)
            flat[k] = keep - epsilon
            down = _loss(model, X, y)
            flat[k] = keep
            numeric = (up - down) / (2.0 * epsilon)
            if not np.isfinite(numeric):
                raise FloatingPointError("non-finite numeric gradient")
            worst = max(worst, abs(gflat[k] - numeric) / max(1.0, abs(numeric)))
    return worst
