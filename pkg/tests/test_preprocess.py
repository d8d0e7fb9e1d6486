import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hod import preprocess as pp
from hod.preprocess import Direction, Mode, NormalizationSpec
from hod.scenarios import alternating
from hod.sim import Label, SampleSeries, TouchEvent, TouchScenario, simulate_scenario


def brute_edges(v, thr):
    out = []
    for i in range(1, len(v)):
        d = v[i] - v[i - 1]
        if abs(d) > thr:
            out.append((i, d > 0))
    return out


def test_constant_series_has_no_edges():
    assert pp.detect_edges(np.full(50, 3.0), 0.1) == []
    assert pp.detect_edges(np.zeros(0), 0.1) == []


def test_single_step_edge():
    (edge,) = pp.detect_edges(np.array([0.0, 0.0, 5.0, 5.0]), 1.0)
    assert (edge.index, edge.direction, edge.magnitude) == (2, Direction.RISING, 5.0)


def test_edge_threshold_must_be_positive():
    with pytest.raises(ValueError):
        pp.detect_edges(np.zeros(3), 0.0)


def test_noisy_alternation_edge_count():
    # transients well inside one sample, so each touch gives one step per side
    # one extra second so the last release lands inside the recording
    sc = alternating("two-finger", total_duration=61.0, noise_sigma=2e-15, contact_noise_fraction=0.0,
                     approach_fraction=0.0, rise_time_constant=5e-4, release_time_constant=5e-4)
    s = simulate_scenario(sc, seed=9)
    thr = 0.5e-12
    edges = pp.detect_edges(s, thr)
    assert [(e.index, e.direction is Direction.RISING) for e in edges] == brute_edges(s.values, thr)
    assert len(edges) == 2 * len(sc.events)
    on = s.on_intervals()
    assert [e.index for e in edges] == sorted(i for iv in on for i in iv)


def test_auto_label_without_edges():
    (seg,) = pp.auto_label(np.ones(30), 0.5)
    assert (seg.start_index, seg.end_index, seg.label) == (0, 30, Label.OFF)


def test_auto_label_one_touch():
    v = np.r_[np.zeros(10), np.full(10, 5.0), np.zeros(10)]
    segs = pp.auto_label(v, 1.0)
    assert [(s.start_index, s.end_index, s.label) for s in segs] == [
        (0, 10, Label.OFF), (10, 20, Label.ON), (20, 30, Label.OFF)]


def test_auto_label_debounce_and_redundant_edges():
    v = np.r_[np.zeros(10), 5.0, 0.0, np.full(8, 5.0), 10.0, np.full(9, 10.0), np.zeros(10)]
    segs = pp.auto_label(v, 1.0, debounce=3)
    # the dip at 11 is inside the debounce, the second rise keeps hands-on
    assert [(s.start_index, s.label) for s in segs] == [(0, Label.OFF), (10, Label.ON), (30, Label.OFF)]
    with pytest.raises(ValueError):
        pp.auto_label(v, 1.0, debounce=-1)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=200), st.floats(0.1, 3), st.integers(0, 5))
def test_auto_label_alternates(values, thr, debounce):
    segs = pp.auto_label(np.asarray(values), thr, debounce)
    assert segs[0].start_index == 0 and segs[-1].end_index == len(values)
    assert segs[0].label is Label.OFF
    for a, b in zip(segs, segs[1:]):
        assert a.label is not b.label
        assert a.end_index == b.start_index
    assert all(s.start_index < s.end_index for s in segs)


@pytest.mark.parametrize("kind", ["two-finger", "four-finger", "two-hands"])
def test_auto_label_matches_truth(kind):
    sc = alternating(kind, total_duration=60.0, positions=(12, 3, 6), sides=("front", "outside"),
                     noise_sigma=2e-15)
    s = simulate_scenario(sc, seed=2)
    segs = pp.auto_label(s, 5 * pp.estimate_noise(s), debounce=25)
    truth = s.truth_intervals
    assert len(segs) == len(truth)
    for seg, (a, b, lab) in zip(segs, truth):
        assert seg.label == lab
        assert abs(seg.start_index - a) <= 5 and abs(seg.end_index - b) <= 5


def test_noise_estimate_on_white_noise(rng):
    x = rng.normal(scale=2.0, size=20000)
    # first differences of white noise carry sqrt(2) sigma
    assert pp.estimate_noise(x, quantile=0.5) == pytest.approx(2.0 * np.sqrt(2), rel=0.05)
    assert pp.estimate_noise(np.zeros(1)) == 0.0


@given(st.integers(0, 400), st.integers(1, 120))
def test_window_count(n, width):
    w = pp.sliding_windows(np.arange(n, dtype=float), width)
    assert len(w) == max(0, n - width + 1)


def test_window_examples():
    assert len(pp.sliding_windows(np.zeros(100))) == 1
    w = pp.sliding_windows(np.arange(150.0), labels=np.r_[np.zeros(120), np.ones(30)])
    assert len(w) == 51
    assert np.array_equal(w.values[7][1:], w.values[8][:-1])
    assert w[0].source_index == 99 and w[0].label is Label.OFF
    assert w[50].label is Label.ON and w[21].label is Label.ON and w[20].label is Label.OFF
    assert len(pp.sliding_windows(np.zeros(99))) == 0


def test_gradient_windows_span_101_samples():
    v = np.arange(201.0) ** 2
    spec = NormalizationSpec(Mode.GRADIENT, max_rate=1000.0)
    w = pp.make_windows(v, spec, labels=np.zeros(201))
    assert len(w) == 101
    assert w.source_index[0] == 100
    assert np.allclose(w.values[0], np.diff(v[:101]) / 1000.0)
    assert np.all(np.abs(w.values) <= 1.0)


def test_to_gradient_examples():
    assert np.all(pp.to_gradient(np.full(5, 2.0)) == 0)
    assert np.allclose(pp.to_gradient(3.0 + 0.5 * np.arange(10)), 0.5)
    with pytest.raises(ValueError):
        pp.to_gradient([1.0])


@given(st.lists(st.integers(-2 ** 40, 2 ** 40), min_size=1, max_size=300))
def test_gradient_of_cumsum_is_exact(steps):
    # integer-valued doubles keep every partial sum exact
    inc = np.asarray(steps, dtype=np.float64)
    series = np.concatenate([[0.0], np.cumsum(inc)])
    assert np.array_equal(pp.to_gradient(series), inc)


def test_one_hand_approach_gradient_shape():
    sc = TouchScenario((TouchEvent("one-hand", 12, "front", 1.0, 2.0),), total_duration=4.0,
                       noise_sigma=0.0, contact_noise_fraction=0.0)
    g = pp.to_gradient(simulate_scenario(sc).values)
    onset = g[495:520]
    assert onset.max() > 20 * np.abs(g[:400]).max() + 1e-15
    assert np.all(g[420:510] >= 0)
    hold = g[700:1400]
    assert np.abs(hold).max() < 1e-3 * onset.max()


def test_normalize_examples():
    a = NormalizationSpec(Mode.ABSOLUTE, min_value=2.0, max_value=6.0)
    assert pp.normalize([2.0, 6.0, 4.0], a).tolist() == [0.0, 1.0, 0.5]
    g = NormalizationSpec(Mode.GRADIENT, max_rate=0.5)
    assert pp.normalize([0.5, -0.5, 1.0, -7.0], g).tolist() == [1.0, -1.0, 1.0, -1.0]


@pytest.mark.parametrize("kw", [dict(mode="absolute", min_value=1.0, max_value=1.0),
                                dict(mode="gradient", max_rate=0.0), dict(mode="sideways")])
def test_degenerate_spec_rejected(kw):
    with pytest.raises(ValueError):
        NormalizationSpec(**kw)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50),
       st.sampled_from([Mode.ABSOLUTE, Mode.GRADIENT]))
def test_normalize_monotone(values, mode):
    spec = NormalizationSpec(mode, min_value=-10.0, max_value=30.0, max_rate=7.0)
    v = np.sort(np.asarray(values))
    assert np.all(np.diff(pp.normalize(v, spec)) >= 0)


def test_spec_dict_round_trip():
    spec = NormalizationSpec(Mode.GRADIENT, max_rate=2.5e-13)
    assert NormalizationSpec.from_dict(spec.to_dict()) == spec


def test_end_to_end_window_labels(short_series, gradient_spec):
    s = short_series[0]
    lab = pp.segments_to_labels(pp.auto_label(s, 5 * pp.estimate_noise(s), 25), len(s))
    w = pp.make_windows(s, gradient_spec, lab)
    truth = s.label_array()
    # windows fully inside one truth interval: 101 raw samples ending at source_index
    ends = w.source_index
    change = np.r_[0, np.cumsum(np.diff(truth) != 0)]
    inside = change[ends] == change[ends - 100]
    agree = np.mean(w.labels[inside] == truth[ends[inside]])
    assert inside.sum() > 0.9 * len(w)
    assert agree >= 0.99


def test_block_split_keeps_gap():
    tr, va = pp.block_split(10000, 0.2, gap=100)
    assert len(set(tr) & set(va)) == 0
    assert len(va) == 2000
    dist = np.min(np.abs(tr[:, None] - va[None, :]), axis=1)
    assert dist.min() > 100
    with pytest.raises(ValueError):
        pp.block_split(5, 0.2, gap=100)


def test_balance_downsamples_majority():
    ds = pp.WindowDataset(np.zeros((10, 4)), np.r_[np.zeros(7), np.ones(3)])
    b = pp.balance(ds, seed=1)
    assert b.class_counts().tolist() == [3, 3]
    assert np.all(np.diff(b.order) > 0)


def test_build_dataset_is_balanced(gradient_dataset):
    c = gradient_dataset.class_counts()
    assert c[0] == c[1] and c[0] > 10000
    assert len(gradient_dataset.meta["thresholds"]) == 3


def test_hodw_round_trip(tmp_path, rng):
    ds = pp.WindowDataset(rng.normal(size=(37, 100)), rng.integers(0, 2, 37))
    path = tmp_path / "w.hodw"
    pp.write_windows(path, ds)
    raw = path.read_bytes()
    assert raw[:4] == b"HODW" and len(raw) == 16 + 37 * 401
    back = pp.read_windows(path)
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)


def test_hodw_rejects_corruption(tmp_path):
    path = tmp_path / "w.hodw"
    pp.write_windows(path, pp.WindowDataset(np.zeros((3, 100)), np.zeros(3)))
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ValueError):
        pp.read_windows(path)
    path.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ValueError):
        pp.read_windows(path)


def test_short_series_yields_no_windows(caplog):
    s = SampleSeries(np.zeros(50), 0.002, [(0, 50, Label.OFF)])
    w = pp.make_windows(s, NormalizationSpec(Mode.GRADIENT))
    assert len(w) == 0
    assert "shorter than window" in caplog.text
