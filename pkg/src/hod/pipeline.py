"""Default recipes tying simulator, preprocessing and training together."""
from __future__ import annotations

import hashlib
import json
import time

import numpy as np

from . import scenarios
from .forest import train_forest
from .nn import LSTMModel, TDNNModel, TrainConfig, train
from .preprocess import WINDOW, Mode, NormalizationSpec, block_split, build_dataset
from .seeding import derive_seed
from .sim import CircuitParams, simulate_scenario, touch_delta

# largest per-step change kept unclipped: about the first step of a
# two-finger contact, so weak touches still span a useful input range
MAX_RATE = 2.5e-13

TRAIN_DEFAULTS = {
    "tdnn": TrainConfig(learning_rate=0.5, epochs=15, batch_size=64),
    "lstm": TrainConfig(learning_rate=0.3, epochs=10, batch_size=64, clip_norm=2.0),
}
RF_DEFAULTS = {"max_features": 10, "max_depth": 12, "min_leaf": 5}


def config_hash(config):
    """sha256 of the canonical JSON form of a config mapping."""
    text = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def default_spec(mode, series_list=None, max_rate=MAX_RATE):
    """Normalisation for ``mode``.

    Absolute mode spans the untouched level to the strongest touch, taken
    from the data when given, else from the circuit defaults.
    """
    mode = Mode(mode)
    if mode is Mode.GRADIENT:
        return NormalizationSpec(mode, max_rate=max_rate)
    if series_list:
        lo = min(float(np.median(s.values[:250])) for s in series_list)
        hi = max(float(np.max(s.values)) for s in series_list)
    else:
        lo = CircuitParams().base_sensor_capacitance
        hi = lo + touch_delta("two-hands")
    return NormalizationSpec(mode, min_value=lo, max_value=hi)


def training_series(minutes=4.0, seed=0, **settings):
    """One simulated recording per dataset touch kind."""
    return [simulate_scenario(sc, seed=derive_seed(seed, "series", k))
            for k, sc in enumerate(scenarios.training_scenarios(minutes=minutes, **settings))]


def training_dataset(mode=Mode.GRADIENT, minutes=4.0, seed=0, max_rate=MAX_RATE, series=None,
                     **kw):
    """Balanced, auto-labelled windows over the default training recordings."""
    series = series if series is not None else training_series(minutes, seed)
    spec = default_spec(mode, series, max_rate)
    return build_dataset(series, spec, seed=seed, **kw)


def fit(kind, size, dataset, seed=0, config=None, split=None, **rf_options):
    """Train one model of ``kind`` and ``size``; returns (model, info dict)."""
    if split is None:
        split = block_split(len(dataset), 0.2, gap=dataset.width)
    if kind in TRAIN_DEFAULTS:
        base = config or TRAIN_DEFAULTS[kind]
        config = TrainConfig(base.learning_rate, base.epochs, base.batch_size, seed,
                             base.val_fraction, base.clip_norm)
        cls = TDNNModel if kind == "tdnn" else LSTMModel
        model = cls.init(size, dataset.width, seed=derive_seed(seed, "init"))
        result = train(model, dataset, config, split)
        info = {"best_epoch": result.best_epoch, "val_accuracy": result.best_val_accuracy,
                "seconds": result.seconds, "history": result.history,
                "config": config.__dict__}
        return model, info
    if kind == "rf":
        opts = {**RF_DEFAULTS, **rf_options}
        t0 = time.perf_counter()
        tr, va = split
        model = train_forest(dataset.X[tr], dataset.y[tr], size, opts["max_features"],
                             opts["max_depth"], opts["min_leaf"], seed=seed)
        acc = float(np.mean(model.predict(dataset.X[va]) == dataset.y[va]))
        return model, {"val_accuracy": acc, "seconds": time.perf_counter() - t0, "config": opts}
    raise ValueError(f"unknown model kind {kind!r}")


__all__ = ["MAX_RATE", "TRAIN_DEFAULTS", "WINDOW", "config_hash", "default_spec", "fit",
           "training_dataset", "training_series"]
