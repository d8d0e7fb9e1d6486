"""Streaming hands-on decisions, reaction-time measurement and the dynamic-threshold baseline."""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

import numpy as np

from .preprocess import WINDOW, Mode, NormalizationSpec
from .sim import Label

HYSTERESIS = 5
AMBIENT_ALPHA = 1e-3  # per sample, about a 2 s time constant at 2 ms
BASELINE_FRACTION = 0.4
TIMEOUT_S = 10.0


@dataclass(frozen=True)
class DetectorEvent:
    index: int
    label: Label
    probability: float


class Detector:
    """One stream's decision state: raw ring buffer, ambient estimate, debounced decision.

    The ring buffer is stored twice back to back so the most recent samples
    are always one contiguous slice, no copying per sample.
    """

    def __init__(self, model, spec, hysteresis=HYSTERESIS, ambient_alpha=AMBIENT_ALPHA,
                 width=WINDOW, track_ambient=True):
        if hysteresis < 1:
            raise ValueError("hysteresis must be >= 1")
        if not 0 < ambient_alpha <= 1:
            raise ValueError("ambient_alpha must be in (0, 1]")
        if model.input_width != width:
            raise ValueError(f"model expects windows of {model.input_width}, detector uses {width}")
        self.model = model
        self.spec = spec if isinstance(spec, NormalizationSpec) else NormalizationSpec.from_dict(spec)
        self.hysteresis = hysteresis
        self.ambient_alpha = ambient_alpha
        self.track_ambient = track_ambient
        self.width = width
        self.capacity = width + 1 if self.spec.mode is Mode.GRADIENT else width
        self._buf = np.zeros(2 * self.capacity)
        self._x = np.zeros(width)
        # forests vote by strict majority, networks by p >= 0.5
        self._strict = model.kind == "rf"
        self.reset()

    def reset(self):
        self._buf[:] = 0.0
        self._pos = 0
        self.count = 0
        self.ambient = None
        self.decision = Label.OFF
        self.agree = 0
        self.last_probability = None

    @property
    def filled(self):
        return min(self.count, self.capacity)

    def window(self):
        """The most recent raw samples, oldest first (a view)."""
        return self._buf[self._pos:self._pos + self.capacity][self.capacity - self.filled:]

    def update_ambient(self, sample):
        if self.ambient is None:
            self.ambient = float(sample)
        elif self.decision is Label.OFF:
            self.ambient += self.ambient_alpha * (sample - self.ambient)
        return self.ambient

    def _features(self, raw):
        x = self._x
        if self.spec.mode is Mode.GRADIENT:
            np.subtract(raw[1:], raw[:-1], out=x)
            x *= 1.0 / self.spec.max_rate
            np.clip(x, -1.0, 1.0, out=x)
        else:
            lo = self.ambient if self.track_ambient else self.spec.min_value
            np.subtract(raw, lo, out=x)
            x *= 1.0 / (self.spec.max_value - self.spec.min_value)
        return x

    def push_sample(self, sample):
        """Feed one raw sample; returns a DetectorEvent when the decision flips."""
        sample = float(sample)
        if not math.isfinite(sample):
            raise ValueError(f"non-finite sample {sample!r} at index {self.count}")
        index = self.count
        cap = self.capacity
        self._buf[self._pos] = sample
        self._buf[self._pos + cap] = sample
        self._pos = (self._pos + 1) % cap
        self.count += 1
        if self.track_ambient:
            self.update_ambient(sample)
        if self.count < cap:
            return None
        raw = self._buf[self._pos:self._pos + cap]
        p = self.model.predict_proba_one(self._features(raw))
        self.last_probability = p
        on = p > 0.5 if self._strict else p >= 0.5
        if on == (self.decision is Label.ON):
            self.agree = 0
            return None
        self.agree += 1
        if self.agree < self.hysteresis:
            return None
        self.agree = 0
        self.decision = Label.ON if on else Label.OFF
        return DetectorEvent(index, self.decision, p)

    def run(self, samples):
        """Push every sample; list of the emitted events."""
        events = []
        for s in samples:
            ev = self.push_sample(s)
            if ev is not None:
                events.append(ev)
        return events


# -- reaction time ----------------------------------------------------------

@dataclass(frozen=True)
class ReactionRecord:
    kind: Label
    stimulus_index: int
    decision_index: int | None
    sample_period: float
    # decision flipped before the threshold crossing; latency clamped to 0
    early: bool = False

    @property
    def latency(self):
        if self.decision_index is None:
            return None
        return (self.decision_index - self.stimulus_index) * self.sample_period

    @property
    def timed_out(self):
        return self.decision_index is None


def threshold_crossings(values, threshold):
    """(index, Label) for each crossing of ``threshold``; ON when rising above it."""
    above = np.asarray(values) > threshold
    change = np.flatnonzero(above[1:] != above[:-1]) + 1
    return [(int(i), Label.ON if above[i] else Label.OFF) for i in change]


def measure_reaction(series, detector, contact_threshold, timeout=TIMEOUT_S, events=None):
    """Latency from each crossing of the contact threshold to the matching decision flip.

    A flip matches a crossing if it has the same direction and falls between
    the previous crossing and the earlier of the next crossing and the
    timeout. Flips that came before the crossing count as latency 0.
    """
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    period = getattr(series, "sample_period", 0.002)
    if events is None:
        detector.reset()
        events = detector.run(values)
    crossings = threshold_crossings(values, contact_threshold)
    limit = int(round(timeout / period))
    records = []
    for k, (s, kind) in enumerate(crossings):
        lo = crossings[k - 1][0] if k else 0
        hi = min(s + limit, crossings[k + 1][0] if k + 1 < len(crossings) else len(values))
        match = next((e.index for e in events if e.label is kind and lo <= e.index < hi), None)
        if match is None:
            records.append(ReactionRecord(kind, s, None, period))
        elif match < s:
            records.append(ReactionRecord(kind, s, s, period, early=True))
        else:
            records.append(ReactionRecord(kind, s, match, period))
    return records


def latency_summary(records):
    """Per event kind: count, timeouts and min/median/max latency in seconds."""
    out = {}
    for kind in (Label.ON, Label.OFF):
        lat = [r.latency for r in records if r.kind is kind and r.latency is not None]
        out[kind.text] = {
            "count": sum(r.kind is kind for r in records),
            "timeouts": sum(r.kind is kind and r.timed_out for r in records),
            "min": min(lat) if lat else None,
            "median": statistics.median(lat) if lat else None,
            "max": max(lat) if lat else None,
        }
    return out


# -- dynamic-threshold baseline ---------------------------------------------

class DynamicThresholdBaseline:
    """Threshold at a fixed fraction between ambient and the average touch maximum.

    Ambient follows an EMA while untouched; each completed touch pulls the
    average maximum toward that touch's peak by ``max_alpha``.
    """

    def __init__(self, ambient_level, avg_max_touch_value, fraction=BASELINE_FRACTION,
                 ambient_alpha=AMBIENT_ALPHA, max_alpha=0.5):
        if not 0 < fraction < 1:
            raise ValueError("fraction must be in (0, 1)")
        if not avg_max_touch_value > ambient_level:
            raise ValueError("average touch maximum must lie above ambient")
        self.ambient_level = float(ambient_level)
        self.avg_max_touch_value = float(avg_max_touch_value)
        self.fraction = fraction
        self.ambient_alpha = ambient_alpha
        self.max_alpha = max_alpha
        self.decision = Label.OFF
        self._peak = None

    @property
    def threshold(self):
        return self.ambient_level + self.fraction * (self.avg_max_touch_value - self.ambient_level)

    def baseline_step(self, sample):
        sample = float(sample)
        if self.decision is Label.OFF:
            if sample > self.threshold:
                self.decision = Label.ON
                self._peak = sample
            else:
                self.ambient_level += self.ambient_alpha * (sample - self.ambient_level)
        else:
            self._peak = max(self._peak, sample)
            if sample <= self.threshold:
                self.decision = Label.OFF
                self.avg_max_touch_value += self.max_alpha * (self._peak - self.avg_max_touch_value)
                self._peak = None
        # keep the threshold strictly above ambient
        floor = np.nextafter(self.ambient_level, np.inf)
        self.avg_max_touch_value = max(self.avg_max_touch_value, floor)
        return self.decision

    def run(self, samples):
        return np.array([self.baseline_step(s) for s in samples], dtype=np.uint8)
