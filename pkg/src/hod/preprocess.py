"""Edge labelling, windowing and normalisation of capacitance series.

Gradient windows hold 100 first differences, i.e. they span 101 raw
samples; absolute windows hold 100 raw samples. In both cases the window
label is the label of its last raw sample.
"""
from __future__ import annotations

import enum
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .seeding import derive_seed
from .sim import Label, intervals_from_labels

log = logging.getLogger(__name__)

WINDOW = 100


class Direction(enum.Enum):
    RISING = "rising"
    FALLING = "falling"


class Mode(str, enum.Enum):
    ABSOLUTE = "absolute"
    GRADIENT = "gradient"

    @property
    def code(self):
        return 0 if self is Mode.ABSOLUTE else 1

    @classmethod
    def from_code(cls, code):
        return (cls.ABSOLUTE, cls.GRADIENT)[code]


@dataclass(frozen=True)
class EdgeEvent:
    index: int
    direction: Direction
    magnitude: float


@dataclass(frozen=True)
class LabeledSegment:
    start_index: int
    end_index: int
    label: Label


@dataclass(frozen=True)
class Window:
    values: np.ndarray
    label: Label
    source_index: int


@dataclass(frozen=True)
class NormalizationSpec:
    mode: Mode
    min_value: float = 0.0
    max_value: float = 1.0
    max_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.ABSOLUTE and not self.min_value < self.max_value:
            raise ValueError("absolute normalisation needs min_value < max_value")
        if self.mode is Mode.GRADIENT and not self.max_rate > 0:
            raise ValueError("gradient normalisation needs max_rate > 0")

    def to_dict(self):
        return {"mode": self.mode.value, "min_value": self.min_value,
                "max_value": self.max_value, "max_rate": self.max_rate}

    @classmethod
    def from_dict(cls, d):
        return cls(Mode(d["mode"]), d.get("min_value", 0.0), d.get("max_value", 1.0),
                   d.get("max_rate", 1.0))


def _values(series):
    return np.asarray(getattr(series, "values", series), dtype=np.float64)


def detect_edges(series, threshold):
    """Every step whose absolute difference exceeds ``threshold``."""
    if not threshold > 0:
        raise ValueError("edge threshold must be > 0")
    v = _values(series)
    if len(v) < 2:
        return []
    d = np.diff(v)
    idx = np.flatnonzero(np.abs(d) > threshold)
    return [EdgeEvent(int(i) + 1, Direction.RISING if d[i] > 0 else Direction.FALLING,
                      float(abs(d[i]))) for i in idx]


def auto_label(series, threshold, debounce=0):
    """Split a series into alternating hands-off/hands-on segments.

    A rising edge switches to hands-on and a falling edge back to hands-off.
    Edges that would not change the label, and any edge within ``debounce``
    samples of the last accepted one, are ignored. The series starts
    hands-off.
    """
    if debounce < 0:
        raise ValueError("debounce must be >= 0")
    n = len(_values(series))
    state = Label.OFF
    last = None
    cuts = []
    for edge in detect_edges(series, threshold):
        if last is not None and edge.index - last <= debounce:
            continue
        wanted = Label.ON if edge.direction is Direction.RISING else Label.OFF
        if wanted == state:
            continue
        cuts.append(edge.index)
        state = wanted
        last = edge.index
    bounds = [0] + cuts + [n]
    segments = []
    label = Label.OFF
    for a, b in zip(bounds[:-1], bounds[1:]):
        segments.append(LabeledSegment(a, b, label))
        label = Label(1 - label)
    return [s for s in segments if s.end_index > s.start_index] if n else []


def segments_to_labels(segments, n):
    labels = np.zeros(n, dtype=np.uint8)
    for seg in segments:
        labels[seg.start_index:seg.end_index] = seg.label
    return labels


def estimate_noise(series, block=250, quantile=1.0):
    """Noise sigma of the step-to-step differences, in units per step.

    A robust (MAD) sigma of the first differences is taken per block of
    ``block`` samples; the ``quantile`` over blocks is returned, so hold
    periods with contact fluctuation set the level rather than the quiet
    untouched stretches.
    """
    d = np.diff(_values(series))
    if len(d) == 0:
        return 0.0
    nb = max(1, len(d) // block)
    blocks = d[:nb * block].reshape(nb, -1) if len(d) >= block else d[None, :]
    med = np.median(blocks, axis=1, keepdims=True)
    sig = np.median(np.abs(blocks - med), axis=1) / 0.6744897501960817
    return float(np.quantile(sig, quantile))


def to_gradient(values):
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        raise ValueError("gradient needs at least two samples")
    return np.diff(v)


def normalize(values, spec):
    v = np.asarray(values, dtype=np.float64)
    if spec.mode is Mode.ABSOLUTE:
        return (v - spec.min_value) / (spec.max_value - spec.min_value)
    return np.clip(v / spec.max_rate, -1.0, 1.0)


@dataclass
class Windows:
    """A stack of windows; ``values[k]`` ends at raw sample ``source_index[k]``."""

    values: np.ndarray
    labels: np.ndarray
    source_index: np.ndarray

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return Window(self.values[k], Label(int(self.labels[k])), int(self.source_index[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))


def sliding_windows(values, width=WINDOW, stride=1, labels=None, offset=0):
    """Stride-``stride`` windows of ``width`` consecutive values.

    ``labels`` gives one label per value; each window takes the label at its
    last position. ``offset`` shifts the reported source index (gradient
    values sit one raw sample later than their position).
    """
    v = np.asarray(values)
    n = len(v)
    if n < width:
        log.warning("series of %d values is shorter than window %d; no windows", n, width)
        return Windows(np.zeros((0, width), dtype=v.dtype), np.zeros(0, np.uint8),
                       np.zeros(0, np.int64))
    view = sliding_window_view(v, width)[::stride]
    last = np.arange(width - 1, n, stride)
    labs = (np.asarray(labels, dtype=np.uint8)[last] if labels is not None
            else np.zeros(len(last), np.uint8))
    return Windows(view, labs, last + offset)


def make_windows(series, spec, labels=None, width=WINDOW):
    """Normalised windows from a raw series in the mode of ``spec``."""
    v = _values(series)
    if labels is None:
        labels = series.label_array()
    labels = np.asarray(labels, dtype=np.uint8)
    if spec.mode is Mode.GRADIENT:
        if len(v) < 2:
            return sliding_windows(np.zeros(0), width)
        g = normalize(to_gradient(v), spec).astype(np.float32)
        return sliding_windows(g, width, labels=labels[1:], offset=1)
    a = normalize(v, spec).astype(np.float32)
    return sliding_windows(a, width, labels=labels)


# -- datasets ---------------------------------------------------------------

@dataclass
class WindowDataset:
    X: np.ndarray
    y: np.ndarray
    # position in acquisition order; windows of one series are contiguous
    order: np.ndarray = None
    spec: NormalizationSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.uint8)
        if self.order is None:
            self.order = np.arange(len(self.y))

    def __len__(self):
        return len(self.y)

    @property
    def width(self):
        return self.X.shape[1]

    def subset(self, idx):
        return WindowDataset(self.X[idx], self.y[idx], self.order[idx], self.spec, dict(self.meta))

    def class_counts(self):
        return np.bincount(self.y, minlength=2)


def block_split(n, val_fraction=0.2, n_blocks=10, gap=WINDOW):
    """Contiguous time-block train/validation split.

    The index range is cut into ``n_blocks`` equal blocks and every
    ``1/val_fraction``-th block goes to validation. Training windows within
    ``gap`` positions of a validation block are dropped so that overlapping
    windows never straddle the split.
    """
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must be in (0, 1)")
    n_val_blocks = max(1, int(round(n_blocks * val_fraction)))
    step = n_blocks / n_val_blocks
    val_blocks = {int(step * (k + 1)) - 1 for k in range(n_val_blocks)}
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    is_val = np.zeros(n, dtype=bool)
    for b in val_blocks:
        is_val[edges[b]:edges[b + 1]] = True
    near = np.zeros(n, dtype=bool)
    for b in val_blocks:
        near[max(0, edges[b] - gap):edges[b]] = True
        near[edges[b + 1]:min(n, edges[b + 1] + gap)] = True
    train = np.flatnonzero(~is_val & ~near)
    val = np.flatnonzero(is_val)
    if len(train) == 0 or len(val) == 0:
        raise ValueError(f"split of {n} windows leaves an empty partition")
    return train, val


def balance(dataset, seed):
    """Downsample the majority class; keeps acquisition order."""
    counts = dataset.class_counts()
    if counts.min() == 0 or counts[0] == counts[1]:
        return dataset
    rng = np.random.default_rng(seed)
    major = int(np.argmax(counts))
    major_idx = np.flatnonzero(dataset.y == major)
    keep_major = rng.choice(major_idx, size=int(counts.min()), replace=False)
    idx = np.sort(np.concatenate([np.flatnonzero(dataset.y != major), keep_major]))
    return dataset.subset(idx)


def build_dataset(series_list, spec, threshold=None, debounce=25, labels="auto",
                  balanced=True, seed=0, width=WINDOW):
    """Label and window several series into one dataset.

    ``labels="auto"`` runs the edge labeller per series with its own
    threshold (default five times that series' noise estimate);
    ``labels="truth"`` uses the simulator ground truth.
    """
    if isinstance(threshold, (int, float)) or threshold is None:
        threshold = [threshold] * len(series_list)
    parts_X, parts_y = [], []
    used = []
    for series, thr in zip(series_list, threshold):
        if labels == "truth":
            lab = series.label_array()
        else:
            if thr is None:
                thr = 5.0 * estimate_noise(series)
            lab = segments_to_labels(auto_label(series, thr, debounce), len(series))
        used.append(thr)
        w = make_windows(series, spec, lab, width)
        parts_X.append(np.asarray(w.values))
        parts_y.append(w.labels)
    X = np.concatenate(parts_X) if parts_X else np.zeros((0, width), np.float32)
    y = np.concatenate(parts_y) if parts_y else np.zeros(0, np.uint8)
    ds = WindowDataset(X, y, spec=spec, meta={"thresholds": used, "labels": labels})
    if balanced:
        ds = balance(ds, derive_seed(seed, "balance"))
    return ds


# -- HODW binary window file ------------------------------------------------

HODW_MAGIC = b"HODW"
HODW_VERSION = 1
_HODW_HEADER = struct.Struct("<4sHHQ")


def _record_dtype(width):
    return np.dtype([("values", "<f4", (width,)), ("label", "u1")])


def write_windows(dest, dataset):
    X = np.asarray(dataset.X, dtype="<f4")
    n, width = X.shape
    rec = np.empty(n, dtype=_record_dtype(width))
    rec["values"] = X
    rec["label"] = dataset.y
    with open(dest, "wb") as fh:
        fh.write(_HODW_HEADER.pack(HODW_MAGIC, HODW_VERSION, width, n))
        fh.write(rec.tobytes())


def read_windows(source):
    with open(source, "rb") as fh:
        head = fh.read(_HODW_HEADER.size)
        if len(head) < _HODW_HEADER.size:
            raise ValueError(f"{source}: truncated header")
        magic, version, width, n = _HODW_HEADER.unpack(head)
        if magic != HODW_MAGIC:
            raise ValueError(f"{source}: not a HODW file")
        if version != HODW_VERSION:
            raise ValueError(f"{source}: unsupported HODW version {version}")
        rec = np.frombuffer(fh.read(), dtype=_record_dtype(width))
    if len(rec) != n:
        raise ValueError(f"{source}: header says {n} records, found {len(rec)}")
    return WindowDataset(rec["values"].copy(), rec["label"].copy())


def write_manifest(path, **fields):
    with open(path, "w") as fh:
        json.dump(fields, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
