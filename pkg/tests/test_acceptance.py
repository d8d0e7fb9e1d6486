"""Acceptance criteria, one test each.

Every test appends a PASS/FAIL line with the measured values; the lines are
printed together at the end of the pytest run.
"""
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from hod import evaluation, modelio, scenarios
from hod import preprocess as pp
from hod.detector import Detector, DynamicThresholdBaseline, latency_summary, measure_reaction
from hod.forest import train_forest
from hod.nn import LSTMModel, TDNNModel, gradient_check
from hod.pipeline import default_spec
from hod.preprocess import Mode, NormalizationSpec, block_split
from hod.seeding import derive_seed
from hod.sim import CircuitParams, Label, simulate_scenario, touch_delta

REFERENCE = Path(__file__).resolve().parents[1] / "paper.md"
BASE = CircuitParams().base_sensor_capacitance


def paper_text():
    """Published reference text with whitespace collapsed, for checking quoted values."""
    if not REFERENCE.exists():
        pytest.skip("reference text not available")
    return " ".join(REFERENCE.read_text().split())


def record(log, number, title, ok, detail):
    log.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})")
    assert ok, detail


def test_1_gradient_correctness(acceptance_log):
    t0 = time.perf_counter()
    worst = {}
    for cls, sizes in ((TDNNModel, (1, 5, 50)), (LSTMModel, (1, 5))):
        for h in sizes:
            for seed in range(3):
                rng = np.random.default_rng(derive_seed(seed, "gradcheck", h))
                X = rng.uniform(-1, 1, size=(10, 100))
                y = rng.integers(0, 2, 10)
                err = gradient_check(cls.init(h, seed=seed), X, y)
                key = f"{cls.kind}-{h}"
                worst[key] = max(worst.get(key, 0.0), err)
    elapsed = time.perf_counter() - t0
    top = max(worst.values())
    record(acceptance_log, 1, "gradient check", top <= 1e-4 and elapsed < 60,
           f"max rel err {top:.2e} <= 1e-4, {elapsed:.1f}s < 60s")


def test_2_gradient_mode_accuracy(acceptance_log, full_gradient_dataset, tdnn50, lstm1):
    text = paper_text()
    assert "TDNN & 50 & 99,08\\%" in text and "LSTM & 1 & 99,86\\%" in text
    counts = full_gradient_dataset.class_counts()
    a_t = tdnn50.info["val_accuracy"]
    a_l = lstm1.info["val_accuracy"]
    seconds = tdnn50.info["seconds"] + lstm1.info["seconds"]
    ok = (len(full_gradient_dataset) >= 100_000 and counts[0] == counts[1]
          and a_t >= 0.99 and a_l >= 0.99 and abs(a_t - a_l) <= 0.01 and seconds < 1800)
    record(acceptance_log, 2, "gradient-mode accuracy", ok,
           f"{len(full_gradient_dataset)} windows, TDNN-50 {a_t:.4f}, LSTM-1 {a_l:.4f}, "
           f"gap {abs(a_t - a_l):.4f}, trained in {seconds:.0f}s")


def test_3_footprint_arithmetic(acceptance_log):
    text = paper_text()
    assert "25kB" in text and "84kB" in text
    count = modelio.parameter_count(TDNNModel.init(50))
    sizes = {cls.kind: [modelio.serialized_size(cls.init(h)) for h in (1, 5, 10, 20, 50)]
             for cls in (TDNNModel, LSTMModel)}
    mono = all(all(a < b for a, b in zip(s, s[1:])) for s in sizes.values())
    record(acceptance_log, 3, "footprint", count == 5101 and mono,
           f"TDNN-50 {count} parameters, sizes {sizes}")


def test_4_forest_scaling(acceptance_log, full_gradient_dataset):
    text = paper_text()
    assert "146kB" in text and "14.444kB" in text
    t0 = time.perf_counter()
    ds = full_gradient_dataset
    tr, va = block_split(len(ds), 0.2, gap=ds.width)

    def subsample(seed):
        rng = np.random.default_rng(derive_seed(seed, "rf-subsample"))
        return np.sort(rng.choice(tr, 20_000, replace=False))

    rows = subsample(0)
    memory = [modelio.serialized_size(train_forest(ds.X[rows], ds.y[rows], n, 10, seed=0))
              for n in (1, 5, 10, 100)]
    acc = {1: [], 10: []}
    for seed in range(5):
        rows = subsample(seed)
        for n in acc:
            f = train_forest(ds.X[rows], ds.y[rows], n, 10, seed=seed)
            acc[n].append(float(np.mean(f.predict(ds.X[va]) == ds.y[va])))
    elapsed = time.perf_counter() - t0
    m1, m10 = np.mean(acc[1]), np.mean(acc[10])
    ok = all(a < b for a, b in zip(memory, memory[1:])) and m10 >= m1 and elapsed < 600
    record(acceptance_log, 4, "forest scaling", ok,
           f"bytes {memory}, mean acc RF(1) {m1:.4f} RF(10) {m10:.4f}, {elapsed:.0f}s")


def test_5_reaction_time(acceptance_log, tdnn50):
    text = paper_text()
    assert "108ms and 294ms" in text and "30--60ms" in text
    t0 = time.perf_counter()
    series = simulate_scenario(scenarios.reaction_scenario("two-finger"), seed=0)
    # the approach ramp tops out at 0.3 of the contact step, so this level
    # is only reached once the fingers are on the rim
    threshold = BASE + 0.35 * touch_delta("two-finger", 10, "front")
    records = measure_reaction(series, Detector(tdnn50, default_spec(Mode.GRADIENT)), threshold)
    on = [r.latency for r in records if r.kind is Label.ON]
    off = [r.latency for r in records if r.kind is Label.OFF]
    summary = latency_summary(records)
    elapsed = time.perf_counter() - t0
    complete = len(on) == len(off) == 10 and None not in on + off
    med_on = float(np.median(on)) if complete else math.nan
    bounds = complete and max(on) <= 0.3 and med_on <= 0.2
    faster_off = complete and all(x < med_on for x in off)
    ms = lambda v: f"{1e3 * v:.0f}ms"
    record(acceptance_log, 5, "reaction time", bounds and faster_off and elapsed < 120,
           f"on max {ms(max(on))} <= 300ms, median {ms(med_on)} <= 200ms: {bounds}; "
           f"off max {ms(max(off))} < on median: {faster_off}; "
           f"timeouts {summary['hands-on']['timeouts']}/{summary['hands-off']['timeouts']}")


def test_6_throughput(acceptance_log, tdnn50):
    text = paper_text()
    assert "every 2 ms" in text
    series = simulate_scenario(scenarios.alternating("two-finger", total_duration=60.0), seed=1)
    det = Detector(tdnn50, default_spec(Mode.GRADIENT))
    times = np.empty(len(series))
    for k, v in enumerate(series.values):
        t0 = time.perf_counter()
        det.push_sample(v)
        times[k] = time.perf_counter() - t0
    p99 = float(np.percentile(times[det.capacity:], 99))
    record(acceptance_log, 6, "push_sample budget", p99 < 2e-3,
           f"p99 {1e6 * p99:.0f}us < 2000us over {len(series)} samples")


def test_7_metric_oracles(acceptance_log):
    rng = np.random.default_rng(derive_seed(7, "oracle"))
    pred = rng.integers(0, 2, 1000)
    labels = rng.integers(0, 2, 1000)
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for p, y in zip(pred.tolist(), labels.tolist()):
        counts[("t" if p == y else "f") + ("p" if p else "n")] += 1
    cm = evaluation.confusion(pred, labels)
    got = evaluation.metrics(cm)
    P = Fraction(counts["tp"], counts["tp"] + counts["fp"])
    R = Fraction(counts["tp"], counts["tp"] + counts["fn"])
    exact = (1 + Fraction(1, 4)) * P * R / (Fraction(1, 4) * P + R)
    same_counts = cm == evaluation.ConfusionMatrix(**counts)
    f_err = abs(got["f_half"] - float(exact))
    edge = evaluation.f_beta(1.0, 0.5)
    ok = same_counts and f_err <= 4 * math.ulp(float(exact)) and abs(edge - 5 / 6) <= 1e-9
    record(acceptance_log, 7, "metric oracles", ok,
           f"counts equal: {same_counts}, F0.5 off by {f_err:.1e}, F0.5(1, 0.5) = {edge:.10f}")


def test_8_baseline_failure(acceptance_log, tdnn50):
    text = paper_text()
    assert "erroneously recognized as a touch" in text
    sc = scenarios.light_touch_sequence()
    series = simulate_scenario(sc, seed=0)
    period = series.sample_period
    hover = sc.events[-1]
    assert not hover.contact
    lo = int((hover.start - 0.5) * 500)
    hi = int((hover.start + hover.duration + 0.5) * 500)
    baseline = DynamicThresholdBaseline(BASE, BASE + touch_delta("two-hands", 12, "front"))
    base_dec = baseline.run(series.values)
    events = Detector(tdnn50, default_spec(Mode.GRADIENT)).run(series.values)
    state = np.zeros(len(series), dtype=np.uint8)
    for a, b in zip(events, events[1:] + [None]):
        if a.label is Label.ON:
            state[a.index:None if b is None else b.index] = 1
    truth = series.label_array()
    tdnn_false = int(np.sum(state[lo:hi] & (truth[lo:hi] == 0)))
    base_false = int(np.sum(base_dec[lo:hi] & (truth[lo:hi] == 0)))
    touches = sum(e.label is Label.ON for e in events)
    ok = base_false > 0 and tdnn_false == 0
    record(acceptance_log, 8, "baseline hover failure", ok,
           f"baseline {base_false * period:.2f}s false hands-on during the hover, "
           f"TDNN-50 {tdnn_false * period:.2f}s; TDNN-50 found {touches}/10 touches")


def test_9_pipeline_properties(acceptance_log):
    rng = np.random.default_rng(derive_seed(9, "lengths"))
    lengths = rng.integers(100, 5000, 10)
    spec = NormalizationSpec(Mode.ABSOLUTE, min_value=0.0, max_value=1.0)
    counts_ok = all(len(pp.make_windows(rng.random(n), spec, np.zeros(n))) == n - 99 for n in lengths)

    worst = 0
    for k, kind in enumerate(("two-finger", "four-finger", "one-hand", "two-hands")):
        sc = scenarios.alternating(kind, total_duration=60.0, positions=(12, 3, 6),
                                   sides=("front", "outside"), noise_sigma=2e-15)
        s = simulate_scenario(sc, seed=k)
        segs = pp.auto_label(s, 5 * pp.estimate_noise(s), debounce=25)
        if len(segs) != len(s.truth_intervals):
            worst = math.inf
            break
        for seg, (a, b, _) in zip(segs, s.truth_intervals):
            worst = max(worst, abs(seg.start_index - a), abs(seg.end_index - b))

    exact = True
    for _ in range(10):
        inc = rng.integers(-2 ** 40, 2 ** 40, int(rng.integers(1, 500))).astype(np.float64)
        exact &= np.array_equal(pp.to_gradient(np.r_[0.0, np.cumsum(inc)]), inc)

    ok = counts_ok and worst <= 5 and exact
    record(acceptance_log, 9, "pipeline properties", ok,
           f"window counts N-99: {counts_ok}, label boundary error {worst} <= 5 samples, "
           f"cumsum gradient exact: {exact}")

