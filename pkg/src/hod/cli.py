"""Command-line entry point: simulate, preprocess, train, evaluate, bench, detect.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import modelio, pipeline, scenarios
from .detector import HYSTERESIS, Detector, latency_summary, measure_reaction
from .evaluation import (GridSpec, confusion, format_table, metrics, reports_to_csv,
                         run_grid)
from .nn import TrainConfig
from .preprocess import (WINDOW, Mode, NormalizationSpec, build_dataset, estimate_noise,
                         read_manifest, read_windows, write_manifest, write_windows)
from .sim import (DomainError, SampleSeries, format_scenario, parse_scenario, read_series_csv,
                  scenario_hash, simulate_scenario, write_series_csv)

log = logging.getLogger("hod")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MODEL_KINDS = ("tdnn", "lstm", "rf")


class UsageError(Exception):
    """Arguments are individually valid but inconsistent with each other or the inputs."""


def sidecar(path):
    return Path(str(path) + ".json")


def _write_sidecar(path, command, config, seed, **extra):
    write_manifest(sidecar(path), command=command, seed=seed, config=config,
                   config_hash=pipeline.config_hash(config), **extra)


def _load_sidecar(path):
    p = sidecar(path)
    return read_manifest(p) if p.exists() else None


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    if args.scenario:
        scenario = parse_scenario(Path(args.scenario).read_text())
    else:
        scenario = scenarios.alternating(args.kind, total_duration=args.duration,
                                         on=args.on, off=args.off,
                                         noise_sigma=args.noise)
    scenario.validate()
    series = simulate_scenario(scenario, seed=args.seed)
    out = Path(args.out)
    write_series_csv(series, out)
    config = {"scenario": format_scenario(scenario)}
    _write_sidecar(out, "simulate", config, args.seed, scenario_hash=scenario_hash(scenario),
                   samples=len(series), sample_period=series.sample_period,
                   truth_intervals=[(s, e, int(lab)) for s, e, lab in series.truth_intervals])
    print(f"wrote {len(series)} samples to {out}")
    return EXIT_OK


# -- preprocess -------------------------------------------------------------

def cmd_preprocess(args):
    series = [read_series_csv(p) for p in args.inputs]
    mode = Mode(args.mode)
    spec = pipeline.default_spec(mode, series, args.max_rate)
    thresholds = args.threshold or [None]
    if len(thresholds) not in (1, len(series)):
        raise UsageError("give one --threshold or one per input series")
    if len(thresholds) == 1:
        thresholds = thresholds * len(series)
    labels = "truth" if args.truth_labels else "auto"
    ds = build_dataset(series, spec, thresholds, args.debounce, labels,
                       balanced=not args.no_balance, seed=args.seed, width=args.window)
    out = Path(args.out)
    write_windows(out, ds)
    config = {"inputs": [str(p) for p in args.inputs], "mode": mode.value, "debounce": args.debounce,
              "labels": labels, "balanced": not args.no_balance, "window": args.window,
              "thresholds": ds.meta["thresholds"]}
    _write_sidecar(out, "preprocess", config, args.seed, normalization=spec.to_dict(),
                   windows=len(ds), class_counts=ds.class_counts().tolist(),
                   noise_estimates=[estimate_noise(s) for s in series])
    print(f"wrote {len(ds)} windows ({ds.class_counts().tolist()} off/on) to {out}")
    return EXIT_OK


def _dataset_with_spec(path, mode_flag=None):
    ds = read_windows(path)
    manifest = _load_sidecar(path)
    if manifest and "normalization" in manifest:
        ds.spec = NormalizationSpec.from_dict(manifest["normalization"])
    if mode_flag is not None:
        flag = Mode(mode_flag)
        if ds.spec is not None and ds.spec.mode is not flag:
            raise UsageError(f"{path} holds {ds.spec.mode.value} windows, --mode says {flag.value}")
        if ds.spec is None:
            ds.spec = pipeline.default_spec(flag)
    if ds.spec is None:
        ds.spec = pipeline.default_spec(Mode.GRADIENT)
    return ds


# -- train ------------------------------------------------------------------

def cmd_train(args):
    ds = _dataset_with_spec(args.windows, args.mode)
    if ds.width != args.window:
        raise UsageError(f"dataset windows are {ds.width} wide, --window says {args.window}")
    if args.model == "rf":
        model, info = pipeline.fit("rf", args.size, ds, args.seed, max_features=args.features,
                                   max_depth=args.max_depth)
    else:
        base = pipeline.TRAIN_DEFAULTS[args.model]
        config = TrainConfig(args.lr or base.learning_rate, args.epochs or base.epochs,
                             args.batch_size or base.batch_size, args.seed, base.val_fraction,
                             base.clip_norm if args.clip_norm is None else args.clip_norm or None)
        model, info = pipeline.fit(args.model, args.size, ds, args.seed, config)
    out = Path(args.out)
    modelio.save(out, model, ds.spec.mode)
    config = {"windows": str(args.windows), "model": args.model, "size": args.size,
              "training": info["config"]}
    count, nbytes = modelio.footprint(model)
    _write_sidecar(out, "train", config, args.seed, normalization=ds.spec.to_dict(),
                   report={"val_accuracy": info["val_accuracy"], "seconds": info["seconds"],
                           "parameters_or_nodes": count, "bytes": nbytes,
                           "history": info.get("history", [])})
    print(f"{args.model} size {args.size}: val accuracy {info['val_accuracy']:.4f}, "
          f"{nbytes} bytes, trained in {info['seconds']:.1f}s -> {out}")
    return EXIT_OK


# -- evaluate ---------------------------------------------------------------

def _load_model(path, mode_flag=None):
    model, mode = modelio.load(path)
    if mode_flag is not None and Mode(mode_flag) is not mode:
        raise UsageError(f"{path} holds a {mode.value} model, --mode says {mode_flag}")
    manifest = _load_sidecar(path)
    spec = None
    if manifest and "normalization" in manifest:
        spec = NormalizationSpec.from_dict(manifest["normalization"])
        if spec.mode is not mode:
            raise UsageError(f"{path}: manifest normalisation {spec.mode.value} "
                             f"disagrees with header mode {mode.value}")
    return model, spec or pipeline.default_spec(mode)


def cmd_evaluate(args):
    model, spec = _load_model(args.model_file, args.mode)
    ds = _dataset_with_spec(args.windows, spec.mode.value)
    cm = confusion(model.predict(ds.X), ds.y)
    result = {"confusion": cm.__dict__, **metrics(cm), "windows": len(ds)}
    text = json.dumps(result, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


# -- bench ------------------------------------------------------------------

def cmd_bench(args):
    if args.windows:
        if len(args.windows) != 2:
            raise UsageError("--windows takes an absolute and a gradient dataset")
        ds_abs = _dataset_with_spec(args.windows[0], "absolute")
        ds_grad = _dataset_with_spec(args.windows[1], "gradient")
    else:
        series = pipeline.training_series(args.minutes, args.seed)
        ds_abs = pipeline.training_dataset(Mode.ABSOLUTE, seed=args.seed, series=series)
        ds_grad = pipeline.training_dataset(Mode.GRADIENT, seed=args.seed, series=series)
    grid = GridSpec.full(only=args.only, seed=args.seed)
    if args.size:
        grid.cells = tuple(c for c in grid.cells if c.size in args.size)
    if args.epochs:
        grid.tdnn_config = _epochs(grid.tdnn_config, args.epochs)
        grid.lstm_config = _epochs(grid.lstm_config, args.epochs)
    if not grid.cells:
        raise UsageError("grid restriction leaves no cells")
    t0 = time.perf_counter()
    reports = run_grid(ds_abs, ds_grad, grid, threads=_threads())
    out = Path(args.out)
    out.write_text(reports_to_csv(reports))
    table = format_table(reports)
    out.with_suffix(".txt").write_text(table)
    config = {"only": args.only, "minutes": args.minutes, "epochs": args.epochs,
              "cells": [c.label + ":" + c.model for c in grid.cells],
              "windows": args.windows}
    _write_sidecar(out, "bench", config, args.seed, seconds=time.perf_counter() - t0,
                   failed=[(r.model, r.size, r.mode, r.error) for r in reports if r.error])
    print(table)
    return EXIT_OK


def _epochs(config, epochs):
    return TrainConfig(config.learning_rate, epochs, config.batch_size, config.seed,
                       config.val_fraction, config.clip_norm)


def _threads():
    return max(1, int(os.environ.get("HOD_THREADS", "1")))


# -- detect -----------------------------------------------------------------

def _read_stream(source):
    """Raw samples from a series CSV or one value per line."""
    text = sys.stdin.read() if source in (None, "-") else Path(source).read_text()
    first = text.lstrip().split("\n", 1)[0]
    if first.startswith("index,"):
        return read_series_csv(io.StringIO(text))
    values = [float(line) for line in text.split() if line.strip()]
    return SampleSeries(np.asarray(values, dtype=np.float64), 0.002, [])


def cmd_detect(args):
    model, spec = _load_model(args.model_file, args.mode)
    if args.max_rate is not None and spec.mode is Mode.GRADIENT:
        spec = NormalizationSpec(spec.mode, max_rate=args.max_rate)
    if model.input_width != args.window:
        raise UsageError(f"model expects windows of {model.input_width}, --window says {args.window}")
    series = _read_stream(args.input)
    period = series.sample_period
    det = Detector(model, spec, hysteresis=args.hysteresis, width=args.window)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["index", "time_s", "event", "latency_ms"])
    events = []
    above = False
    crossing = {True: None, False: None}
    try:
        for i, v in enumerate(series.values):
            if args.threshold is not None:
                now = v > args.threshold
                if now != above:
                    crossing[now] = i
                    above = now
            ev = det.push_sample(v)
            if ev is None:
                continue
            events.append(ev)
            on = bool(ev.label)
            c = crossing[on]
            prev = events[-2].index if len(events) > 1 else -1
            latency = "" if c is None or c <= prev else f"{(ev.index - c) * period * 1e3:.1f}"
            writer.writerow([ev.index, f"{ev.index * period:.6f}", "on" if on else "off", latency])
            out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    summary = {"samples": len(series), "events": {"on": sum(bool(e.label) for e in events),
                                                  "off": sum(not e.label for e in events)}}
    if args.threshold is not None:
        records = measure_reaction(series, det, args.threshold, events=events)
        summary["latency_s"] = latency_summary(records)
    print(json.dumps(summary, indent=2), file=sys.stderr)
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hod", description="Capacitive hands-on detection toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mode_default=None):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--mode", choices=[m.value for m in Mode], default=mode_default)
        sp.add_argument("--window", type=int, default=WINDOW)

    sp = sub.add_parser("simulate", help="render a touch scenario to a series CSV")
    sp.add_argument("--scenario", help="scenario file (key=value lines)")
    sp.add_argument("--kind", default="two-finger",
                    choices=("two-finger", "four-finger", "one-hand", "two-hands"))
    sp.add_argument("--duration", type=float, default=1800.0, help="seconds (default 30 min)")
    sp.add_argument("--on", type=float, default=5.0)
    sp.add_argument("--off", type=float, default=5.0)
    sp.add_argument("--noise", type=float, default=5e-15, help="sensor noise sigma, farads")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("preprocess", help="label and window series CSVs into a HODW file")
    sp.add_argument("inputs", nargs="+")
    common(sp, "gradient")
    sp.add_argument("--threshold", type=float, action="append",
                    help="edge threshold per series (default 5x noise estimate)")
    sp.add_argument("--debounce", type=int, default=25)
    sp.add_argument("--max-rate", type=float, default=pipeline.MAX_RATE)
    sp.add_argument("--truth-labels", action="store_true", help="use simulator labels")
    sp.add_argument("--no-balance", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("train", help="train one model on a HODW dataset")
    sp.add_argument("windows")
    common(sp)
    sp.add_argument("--model", choices=MODEL_KINDS, required=True)
    sp.add_argument("--size", type=int, required=True,
                    help="hidden units (tdnn, lstm) or trees (rf)")
    sp.add_argument("--features", type=int, default=10, help="rf features per split")
    sp.add_argument("--max-depth", type=int, default=12)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--clip-norm", type=float, help="0 disables")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a model on a HODW dataset")
    sp.add_argument("model_file")
    sp.add_argument("windows")
    common(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("bench", help="run the model x size x data-mode grid")
    sp.add_argument("--windows", nargs="+", help="absolute and gradient HODW files")
    sp.add_argument("--minutes", type=float, default=4.0,
                    help="length of each generated recording when --windows is absent")
    sp.add_argument("--only", choices=MODEL_KINDS, action="append")
    sp.add_argument("--size", type=int, action="append")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("detect", help="stream samples through a trained model")
    sp.add_argument("model_file")
    sp.add_argument("input", nargs="?", default="-", help="series CSV or '-' for stdin")
    common(sp)
    sp.add_argument("--threshold", type=float,
                    help="true contact threshold, farads; enables latency measurement")
    sp.add_argument("--hysteresis", type=int, default=HYSTERESIS)
    sp.add_argument("--max-rate", type=float)
    sp.add_argument("--out", help="events CSV (default stdout)")
    sp.add_argument("--summary", help="write the JSON summary here as well")
    sp.set_defaults(func=cmd_detect)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "hysteresis", 1) < 1:
        parser.error("--hysteresis must be >= 1")
    if getattr(args, "size", None) is not None and isinstance(args.size, int) and args.size < 1:
        parser.error("--size must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hod {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ValueError, OSError, modelio.ModelFormatError) as exc:
        print(f"hod {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
