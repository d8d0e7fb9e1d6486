"""Synthetic capacitive steering-wheel sensor.

The sensor mat is the variable capacitor of an LC tank; a hand raises its
capacitance and lowers the tank frequency. Touch strength comes from a plate
capacitor model (contact area per touch kind, attenuated by wheel position
and side), and the time course of each touch is a first-order response.

Units are SI throughout: henries, farads, hertz, seconds.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from ._accel import njit, pick

EPSILON_0 = 8.8541878128e-12

TOUCH_KINDS = ("two-finger", "four-finger", "one-hand", "two-hands")
CLOCK_POSITIONS = (12, 10, 2, 3, 9, 8, 4, 6)
SIDES = ("front", "back", "inside", "outside")

# contact area in m^2 per touch kind
CONTACT_AREA = {
    "two-finger": 2.0e-4,
    "four-finger": 4.0e-4,
    "one-hand": 1.2e-3,
    "two-hands": 2.4e-3,
}
# spokes meet the rim at 3, 6 and 9 o'clock; the inside carries the seam
POSITION_GAIN = {12: 1.0, 10: 1.0, 2: 1.0, 8: 1.0, 4: 1.0, 3: 0.75, 9: 0.75, 6: 0.5}
SIDE_GAIN = {"front": 1.0, "back": 0.9, "outside": 0.8, "inside": 0.3}

# leather cover between mat and skin
COVER_PERMITTIVITY = 3.0
COVER_THICKNESS = 1.0e-3


class DomainError(ValueError):
    """Physical parameters outside the model's domain."""


class Label(enum.IntEnum):
    OFF = 0
    ON = 1

    @property
    def text(self):
        return "hands-on" if self else "hands-off"


@dataclass(frozen=True)
class CircuitParams:
    inductance: float = 10e-6
    fixed_capacitance: float = 100e-12
    base_sensor_capacitance: float = 100e-12

    def __post_init__(self):
        if not self.inductance > 0 or not self.fixed_capacitance > 0:
            raise DomainError("inductance and fixed capacitance must be > 0")
        if not self.base_sensor_capacitance >= 0:
            raise DomainError("base sensor capacitance must be >= 0")

    @property
    def untouched_frequency(self):
        return resonant_frequency(self, self.base_sensor_capacitance)


@dataclass(frozen=True)
class PlateModel:
    relative_permittivity: float = 1.0
    area: float = 1.0
    distance: float = 1.0
    permittivity: float = EPSILON_0


def resonant_frequency(params, sensor_capacitance):
    """f0 = 1 / (2 pi sqrt(L (Ck + Cs)))."""
    total = params.fixed_capacitance + sensor_capacitance
    if params.inductance <= 0 or total <= 0 or sensor_capacitance < 0:
        raise DomainError(f"no resonance for L={params.inductance}, Ck+Cs={total}")
    return 1.0 / (2.0 * math.pi * math.sqrt(params.inductance * total))


def capacitance_from_frequency(params, frequency):
    """Sensor capacitance implied by a measured tank frequency."""
    if not frequency > 0:
        raise DomainError("frequency must be > 0")
    cs = 1.0 / (params.inductance * (2.0 * math.pi * frequency) ** 2) - params.fixed_capacitance
    if cs < 0:
        # within rounding of Cs = 0 is still the empty sensor
        if cs > -1e-12 * params.fixed_capacitance:
            return 0.0
        raise DomainError(f"{frequency} Hz is above the untouched maximum")
    return cs


def plate_capacitance(model):
    if model.distance <= 0 or model.area <= 0:
        raise DomainError("plate area and distance must be > 0")
    if model.relative_permittivity < 1:
        raise DomainError("relative permittivity must be >= 1")
    return model.permittivity * model.relative_permittivity * model.area / model.distance


def touch_delta(kind, position=12, side="front"):
    """Capacitance added by a full contact of ``kind`` at ``position``/``side``."""
    plate = PlateModel(COVER_PERMITTIVITY, CONTACT_AREA[kind], COVER_THICKNESS)
    return plate_capacitance(plate) * POSITION_GAIN[position] * SIDE_GAIN[side]


@dataclass(frozen=True)
class TouchEvent:
    kind: str
    position: int
    side: str
    start: float
    duration: float
    # False: hands approach and hover without touching (stays hands-off)
    contact: bool = True

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class TouchScenario:
    events: tuple = ()
    total_duration: float = 60.0
    rise_time_constant: float = 0.010
    noise_sigma: float = 5e-15
    sample_period: float = 0.002
    release_time_constant: float | None = 0.004
    approach_duration: float = 0.15
    approach_fraction: float = 0.3
    contact_noise_fraction: float = 0.005
    ambient_drift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def validate(self):
        if not self.total_duration > 0:
            raise ValueError("total_duration must be > 0")
        if not self.sample_period > 0 or not self.rise_time_constant > 0:
            raise ValueError("sample_period and rise_time_constant must be > 0")
        if self.release_time_constant is not None and not self.release_time_constant > 0:
            raise ValueError("release_time_constant must be > 0")
        if self.noise_sigma < 0 or self.contact_noise_fraction < 0:
            raise ValueError("noise levels must be >= 0")
        if not 0 <= self.approach_fraction < 1 or self.approach_duration < 0:
            raise ValueError("approach_fraction must be in [0, 1), approach_duration >= 0")
        prev_end = 0.0
        for ev in self.events:
            if ev.kind not in TOUCH_KINDS:
                raise ValueError(f"unknown touch kind {ev.kind!r}")
            if ev.position not in CLOCK_POSITIONS:
                raise ValueError(f"unknown clock position {ev.position!r}")
            if ev.side not in SIDES:
                raise ValueError(f"unknown side {ev.side!r}")
            if ev.start < prev_end or ev.duration <= 0:
                raise ValueError(f"events must be ordered and non-overlapping (at t={ev.start})")
            if ev.end > self.total_duration + 1e-9:
                raise ValueError(f"event at t={ev.start} runs past total_duration")
            prev_end = ev.end
        return self

    @property
    def n_samples(self):
        return int(round(self.total_duration / self.sample_period))


@dataclass
class SampleSeries:
    values: np.ndarray
    sample_period: float = 0.002
    truth_intervals: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)

    @property
    def times(self):
        return np.arange(len(self.values)) * self.sample_period

    def label_array(self):
        labels = np.zeros(len(self.values), dtype=np.uint8)
        for start, end, label in self.truth_intervals:
            labels[start:end] = label
        return labels

    def on_intervals(self):
        return [(s, e) for s, e, lab in self.truth_intervals if lab == Label.ON]


def intervals_from_labels(labels):
    """Run-length encode a 0/1 label array into (start, end, Label) triples."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return []
    cuts = np.flatnonzero(np.diff(labels)) + 1
    bounds = np.concatenate(([0], cuts, [len(labels)]))
    return [(int(a), int(b), Label(int(labels[a]))) for a, b in zip(bounds[:-1], bounds[1:])]


# -- first-order response: y[i] = a[i] y[i-1] + (1 - a[i]) x[i] ------------

@njit
def _first_order_numba(x, a, y0):
    y = np.empty_like(x)
    prev = y0
    for i in range(x.shape[0]):
        prev = a[i] * prev + (1.0 - a[i]) * x[i]
        y[i] = prev
    return y


def _first_order_numpy(x, a, y0):
    # a is piecewise constant; run one linear filter per constant stretch
    y = np.empty_like(x)
    cuts = np.flatnonzero(np.diff(a)) + 1
    bounds = np.concatenate(([0], cuts, [len(x)]))
    prev = y0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi <= lo:
            continue
        coef = a[lo]
        y[lo:hi], _ = lfilter([1.0 - coef], [1.0, -coef], x[lo:hi], zi=[coef * prev])
        prev = y[hi - 1]
    return y


first_order_response = pick(_first_order_numba, _first_order_numpy)


def _targets(scenario, n):
    """Per-sample targets (approach part, contact part) and filter pole."""
    T = scenario.sample_period
    approach = np.zeros(n)
    contact = np.zeros(n)
    a_rise = math.exp(-T / scenario.rise_time_constant)
    a_fall = math.exp(-T / (scenario.release_time_constant or scenario.rise_time_constant))
    pole = np.full(n, a_rise)
    prev_end = 0
    for ev in scenario.events:
        delta = touch_delta(ev.kind, ev.position, ev.side)
        s = min(int(round(ev.start / T)), n)
        e = min(int(round(ev.end / T)), n)
        ramp = int(round(scenario.approach_duration / T))
        level = scenario.approach_fraction * delta
        a0 = max(s - ramp, prev_end)
        if ramp and s > a0:
            k = np.arange(a0, s) - (s - ramp) + 1
            approach[a0:s] = level * k / ramp
        if ev.contact:
            contact[s:e] = delta
            approach[s:e] = 0.0
            pole[e:] = a_fall
            pole[s:e] = a_rise
        else:
            approach[s:e] = level
            # withdrawal mirrors the approach ramp
            w = min(ramp, n - e)
            if w > 0:
                approach[e:e + w] = level * (1.0 - np.arange(1, w + 1) / ramp)
            pole[s:e + max(w, 0)] = a_rise
            e = e + max(w, 0)
        if a0 < s:
            pole[a0:s] = a_rise
        prev_end = e
    return approach, contact, pole


def simulate_scenario(scenario, circuit=None, seed=0):
    """Render a touch scenario into a sampled capacitance series.

    Deterministic for a given seed. Contact adds body-coupled fluctuation
    proportional to the instantaneous contact capacitance on top of the
    white sensor noise.
    """
    scenario.validate()
    circuit = circuit or CircuitParams()
    n = scenario.n_samples
    approach, contact, pole = _targets(scenario, n)
    approach_y = first_order_response(approach, pole, 0.0)
    contact_y = first_order_response(contact, pole, 0.0)

    rng = np.random.default_rng(seed)
    sensor_noise = rng.standard_normal(n)
    body_noise = rng.standard_normal(n)

    values = circuit.base_sensor_capacitance + approach_y + contact_y
    if scenario.ambient_drift:
        values = values + scenario.ambient_drift * np.arange(n) * scenario.sample_period
    if scenario.contact_noise_fraction:
        values = values + scenario.contact_noise_fraction * contact_y * body_noise
    if scenario.noise_sigma:
        values = values + scenario.noise_sigma * sensor_noise

    labels = np.zeros(n, dtype=np.uint8)
    T = scenario.sample_period
    for ev in scenario.events:
        if ev.contact:
            labels[int(round(ev.start / T)):int(round(ev.end / T))] = 1
    return SampleSeries(values, T, intervals_from_labels(labels))


# -- scenario files ---------------------------------------------------------

_GLOBAL_KEYS = {
    "total_duration": float,
    "rise_time_constant": float,
    "release_time_constant": float,
    "noise_sigma": float,
    "sample_period": float,
    "approach_duration": float,
    "approach_fraction": float,
    "contact_noise_fraction": float,
    "ambient_drift": float,
}


def _parse_bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_scenario(text):
    """Read a scenario from ``key=value`` text.

    Global settings take one ``key=value`` per line; each event is one line
    of space separated pairs::

        total_duration=20
        noise_sigma=1e-14
        kind=two-finger position=10 side=front start=2 duration=5
    """
    glob = {}
    events = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        pairs = {}
        for token in line.split():
            if "=" not in token:
                raise ValueError(f"line {lineno}: expected key=value, got {token!r}")
            key, value = token.split("=", 1)
            pairs[key.strip()] = value.strip()
        if "kind" in pairs:
            try:
                events.append(TouchEvent(
                    kind=pairs["kind"],
                    position=int(pairs.get("position", 12)),
                    side=pairs.get("side", "front"),
                    start=float(pairs["start"]),
                    duration=float(pairs["duration"]),
                    contact=_parse_bool(pairs.get("contact", "true")),
                ))
            except KeyError as exc:
                raise ValueError(f"line {lineno}: event missing {exc.args[0]}") from None
            continue
        for key, value in pairs.items():
            if key not in _GLOBAL_KEYS:
                raise ValueError(f"line {lineno}: unknown setting {key!r}")
            if key == "release_time_constant" and value.lower() == "none":
                glob[key] = None
            else:
                glob[key] = _GLOBAL_KEYS[key](value)
    return TouchScenario(events=tuple(events), **glob).validate()


def format_scenario(scenario):
    lines = []
    for key in _GLOBAL_KEYS:
        lines.append(f"{key}={getattr(scenario, key)!r}")
    for ev in scenario.events:
        line = (f"kind={ev.kind} position={ev.position} side={ev.side} "
                f"start={ev.start!r} duration={ev.duration!r}")
        if not ev.contact:
            line += " contact=false"
        lines.append(line)
    return "\n".join(lines) + "\n"


def scenario_hash(scenario):
    return hashlib.sha256(format_scenario(scenario).encode()).hexdigest()


# -- series CSV -------------------------------------------------------------

CSV_HEADER = ("index", "time_s", "capacitance", "label")


def write_series_csv(series, dest):
    labels = series.label_array()
    T = series.sample_period
    out = io.StringIO()
    out.write(",".join(CSV_HEADER) + "\n")
    names = ("off", "on")
    for i, (v, lab) in enumerate(zip(series.values.tolist(), labels.tolist())):
        out.write(f"{i},{i * T:.6f},{v:.9e},{names[lab]}\n")
    text = out.getvalue()
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="") as fh:
            fh.write(text)


def read_series_csv(source):
    """Load a series CSV. The label column may be blank (unlabelled stream)."""
    fh = open(source, newline="") if not hasattr(source, "read") else source
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return SampleSeries(np.zeros(0), 0.002, [])
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        times, values, labels = [], [], []
        for row in reader:
            if not row:
                continue
            times.append(float(row[1]))
            values.append(float(row[2]))
            labels.append(1 if row[3].strip() == "on" else 0)
    finally:
        if fh is not source:
            fh.close()
    period = times[1] - times[0] if len(times) > 1 else 0.002
    return SampleSeries(np.asarray(values), round(period, 9), intervals_from_labels(labels))


def with_events(scenario, events):
    return replace(scenario, events=tuple(events))
