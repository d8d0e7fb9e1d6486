"""Confusion counts, precision/recall/F0.5, inference timing and the benchmark grid."""
from __future__ import annotations

import csv
import io
import logging
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import modelio
from .nn import TrainConfig
from .pipeline import RF_DEFAULTS, TRAIN_DEFAULTS, fit
from .preprocess import block_split
from .seeding import derive_seed

log = logging.getLogger(__name__)

BETA = 0.5

TDNN_SIZES = (1, 5, 10, 20, 50)
LSTM_SIZES = (1, 5, 10, 20, 50)
# (estimators, features per split), in report order
RF_CELLS = ((1, 10), (5, 10), (10, 10), (100, 10), (5, 15))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions, labels):
    """Counts with hands-on as the positive class."""
    p = np.asarray(predictions).astype(bool)
    y = np.asarray(labels).astype(bool)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("empty prediction set")
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    fn = int(np.sum(~p & y))
    return ConfusionMatrix(tp, fp, int(p.size) - tp - fp - fn, fn)


def _ratio(num, den):
    return num / den if den else None


def f_beta(precision, recall, beta=BETA):
    if precision is None or recall is None:
        return None
    b2 = beta * beta
    return _ratio((1 + b2) * precision * recall, b2 * precision + recall)


def metrics(cm):
    """Accuracy, precision, recall and F0.5; undefined ratios come back as None."""
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    return {
        "accuracy": (cm.tp + cm.tn) / cm.total,
        "precision": precision,
        "recall": recall,
        "f_half": f_beta(precision, recall),
    }


@dataclass
class MetricsReport:
    model: str
    size: str
    mode: str
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f_half: float | None = None
    memory_bytes: int | None = None
    inference_time: float | None = None  # seconds per forward pass, median
    error: str | None = field(default=None, compare=False)


CSV_COLUMNS = ("model", "size", "mode", "accuracy", "precision", "recall", "f05",
               "memory_bytes", "exec_time_us")


def _fmt(v):
    return "" if v is None else repr(v)


def reports_to_csv(reports):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([r.model, r.size, r.mode, _fmt(r.accuracy), _fmt(r.precision),
                    _fmt(r.recall), _fmt(r.f_half), _fmt(r.memory_bytes),
                    "" if r.inference_time is None else repr(r.inference_time * 1e6)])
    return out.getvalue()


def reports_from_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        def num(key, cast=float):
            return cast(row[key]) if row[key] != "" else None
        us = num("exec_time_us")
        out.append(MetricsReport(row["model"], row["size"], row["mode"], num("accuracy"),
                                 num("precision"), num("recall"), num("f05"),
                                 num("memory_bytes", int), None if us is None else us / 1e6))
    return out


def _pct(v):
    return "-" if v is None else f"{100 * v:.2f}%"


def _mem(v):
    return "-" if v is None else f"{v / 1000:.1f}kB"


def _time(v):
    if v is None:
        return "-"
    return f"{v * 1e6:.0f}us" if v < 1e-3 else f"{v * 1e3:.2f}ms"


def format_table(reports):
    """Aligned text table, one section per data mode."""
    lines = []
    for mode in dict.fromkeys(r.mode for r in reports):
        rows = [r for r in reports if r.mode == mode]
        head = ("Model", "Size", "Accuracy", "Precision", "Recall", "F0.5", "Memory", "Exec. time")
        body = []
        for r in rows:
            body.append((r.model.upper(), r.size, _pct(r.accuracy), _pct(r.precision),
                         _pct(r.recall), _pct(r.f_half), _mem(r.memory_bytes),
                         "failed" if r.error else _time(r.inference_time)))
        widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
        lines.append(f"[{mode} data]")
        lines.append("  ".join(h.rjust(w) for h, w in zip(head, widths)))
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(str(x).rjust(w) for x, w in zip(row, widths)))
        lines.append("")
    return "\n".join(lines)


# -- timing -----------------------------------------------------------------

def _noop(x):
    return 0.5


def _per_pass(fn, windows):
    t0 = time.perf_counter()
    for x in windows:
        fn(x)
    return (time.perf_counter() - t0) / len(windows)


def time_inference(model, windows, repetitions=30, warmup=3, subtract_overhead=True):
    """Median wall time of one forward pass, seconds.

    Each repetition times a sweep of single-window passes over ``windows``;
    warm-up sweeps are discarded and the same harness around a no-op is
    subtracted.
    """
    if repetitions < 30:
        raise ValueError("need at least 30 repetitions")
    windows = [np.ascontiguousarray(w, dtype=np.float64) for w in np.atleast_2d(windows)]
    fn = model if callable(model) else model.predict_proba_one
    for _ in range(warmup):
        _per_pass(fn, windows)
        _per_pass(_noop, windows)
    samples = [_per_pass(fn, windows) for _ in range(repetitions)]
    median = statistics.median(samples)
    if subtract_overhead:
        base = statistics.median(_per_pass(_noop, windows) for _ in range(repetitions))
        median = max(median - base, 0.0)
    return median


# -- grid -------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    model: str
    size: int
    features: int = 10

    @property
    def label(self):
        return f"{self.size}/{self.features}" if self.model == "rf" else str(self.size)


@dataclass
class GridSpec:
    cells: tuple = ()
    modes: tuple = ("absolute", "gradient")
    tdnn_config: TrainConfig = TRAIN_DEFAULTS["tdnn"]
    lstm_config: TrainConfig = TRAIN_DEFAULTS["lstm"]
    rf_max_depth: int = RF_DEFAULTS["max_depth"]
    # None trains each forest on every training window
    rf_train_limit: int | None = None
    seed: int = 0
    timing_windows: int = 20
    timing_repetitions: int = 30

    @classmethod
    def full(cls, only=None, **kw):
        cells = ([Cell("tdnn", h) for h in TDNN_SIZES] + [Cell("lstm", h) for h in LSTM_SIZES]
                 + [Cell("rf", n, f) for n, f in RF_CELLS])
        if only:
            keep = {only} if isinstance(only, str) else set(only)
            cells = [c for c in cells if c.model in keep]
        return cls(cells=tuple(cells), **kw)


def fit_cell(cell, dataset, grid, split):
    seed = derive_seed(grid.seed, cell.model, cell.size, cell.features)
    if cell.model == "rf":
        tr, va = split
        if grid.rf_train_limit and len(tr) > grid.rf_train_limit:
            rng = np.random.default_rng(derive_seed(seed, "subsample"))
            tr = np.sort(rng.choice(tr, grid.rf_train_limit, replace=False))
        model, _ = fit("rf", cell.size, dataset, seed, split=(tr, va),
                       max_features=cell.features, max_depth=grid.rf_max_depth)
        return model
    config = {"tdnn": grid.tdnn_config, "lstm": grid.lstm_config}.get(cell.model)
    model, _ = fit(cell.model, cell.size, dataset, seed, config, split)
    return model


def evaluate_model(model, X, y, descriptor=("", "", ""), timing_windows=None, repetitions=30):
    cm = confusion(model.predict(X), y)
    report = MetricsReport(*descriptor, **metrics(cm))
    report.memory_bytes = modelio.serialized_size(model)
    if timing_windows is not None and len(timing_windows):
        report.inference_time = time_inference(model, timing_windows, repetitions)
    return report


def run_cell(cell, mode, dataset, grid):
    try:
        split = block_split(len(dataset), 0.2, gap=dataset.width)
        model = fit_cell(cell, dataset, grid, split)
        va = split[1]
        timing = dataset.X[va[:grid.timing_windows]].astype(np.float64)
        if cell.model == "rf" and cell.size >= 100:
            # forests are not timed per pass beyond a handful of windows
            timing = timing[:5]
        return evaluate_model(model, dataset.X[va], dataset.y[va], (cell.model, cell.label, mode),
                              timing, grid.timing_repetitions)
    except Exception as exc:  # a failed cell must not sink the grid
        log.exception("grid cell %s/%s failed", cell, mode)
        return MetricsReport(cell.model, cell.label, mode, error=f"{type(exc).__name__}: {exc}")


def run_grid(dataset_abs, dataset_grad, grid=None, threads=None):
    """Train and score every (cell, data mode) pair of ``grid``."""
    grid = grid or GridSpec.full()
    datasets = {"absolute": dataset_abs, "gradient": dataset_grad}
    jobs = [(cell, mode) for mode in grid.modes for cell in grid.cells]
    if threads is None:
        threads = int(os.environ.get("HOD_THREADS", "1"))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_cell, c, m, datasets[m], grid) for c, m in jobs]
            return [f.result() for f in futures]
    return [run_cell(c, m, datasets[m], grid) for c, m in jobs]


def report_dict(report):
    return asdict(report)


REPORT_FIELDS = tuple(f.name for f in fields(MetricsReport))
