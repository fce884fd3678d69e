"""Acceptance criteria, one test each, every test printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
without ``-s``).
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from coldstart import cli, synth
from coldstart import metrics as M
from coldstart import tensor as T
from coldstart.clustering import dbscan
from coldstart.forecaster import ModelConfig, TrainConfig, build_input, forecast, init_params, seasonal_naive, train
from coldstart.forecaster import training_inputs, transformer
from coldstart.policy import OracleForecaster, PolicySpec, fixed_window, perfect_foresight
from coldstart.simulator import LatencyModel, simulate
from coldstart.tensor import grad_check, no_grad
from coldstart.trace import DEFAULT_START, InvocationSeries, to_gap_series

from minimodel import mini_batch, mini_config, model_grad_check
from oracles import ev_ref, nrmse_ref, partitions_agree, r2_ref, replay, rmse_ref, smape_ref, spearman_ref
from test_tensor import BINARY, UNARY, _weighted_sum


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return emit


def test_autodiff_suite(report):
    start = time.perf_counter()
    worst, failed = 0.0, []
    for name, fn, make in UNARY:
        rep = grad_check(lambda a, fn=fn: _weighted_sum(fn(a)), [make()])
        worst = max(worst, rep.max_rel_error)
        failed += [] if rep.passed else [name]
    for name, fn, make in BINARY:
        rep = grad_check(lambda a, b, fn=fn: _weighted_sum(fn(a, b)), list(make()))
        worst = max(worst, rep.max_rel_error)
        failed += [] if rep.passed else [name]
    x, g, b = (T.Tensor(np.random.default_rng(1).uniform(-1, 1, size=s)) for s in ((2, 3, 5), (5,), (5,)))
    rep = grad_check(lambda x, g, b: _weighted_sum(T.layer_norm(x, g, b)), [x, g, b])
    worst, failed = max(worst, rep.max_rel_error), failed + ([] if rep.passed else ["layer_norm"])
    for kind in ("transformer", "recurrent"):
        rep = model_grad_check(kind)
        worst = max(worst, rep.max_rel_error)
        failed += [] if rep.passed else [f"model:{kind}"]
    elapsed = time.perf_counter() - start
    ok = not failed and worst < 1e-4 and elapsed < 60
    report("autodiff", ok, f"max rel err {worst:.2e} (< 1e-4), failures {failed}, {elapsed:.1f}s (< 60s)")


def test_attention_invariants(report):
    cfg = mini_config(d_model=8, num_heads=2, num_layers_encoder=2, num_layers_decoder=2, prediction_length=6)
    params = init_params(cfg, "transformer", 5)
    batch = mini_batch(cfg)
    log = []
    row_err, leak = 0.0, 0.0
    with no_grad():
        mem = transformer.encode(batch.enc, batch.category, params, attn_log=log)
        base = transformer.decode_step(mem, batch.dec, batch.category, params, attn_log=log)
        row_err = max(float(np.max(np.abs(a.sum(axis=-1) - 1.0))) for a in log)
        for j in range(1, cfg.prediction_length):
            dec = batch.dec.copy()
            dec[:, j] += np.random.default_rng(j).normal(size=dec[:, j].shape) * 5
            out = transformer.decode_step(mem, dec, batch.category, params)
            leak = max(leak, max(float(np.max(np.abs(b.data[:, :j] - o.data[:, :j]))) for b, o in zip(base, out)))
    ok = row_err <= 1e-12 and leak <= 1e-12
    report("attention", ok, f"{len(log)} attention maps, row-sum err {row_err:.1e}, causal leak {leak:.1e} (<= 1e-12)")


def test_metric_oracle_equivalence(report):
    pairs = [(M.smape, smape_ref), (M.rmse, rmse_ref), (M.normalized_rmse, nrmse_ref),
             (M.r2_score, r2_ref), (M.explained_variance, ev_ref), (M.spearman, spearman_ref)]
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(1000):
        n = int(rng.integers(2, 80))
        if i % 3 == 0:  # integer counts, so ranks contain ties
            a = rng.poisson(3, size=n).astype(float)
            a[0] = a[1:].max() + 1.0  # both sides need a non-zero range
            f = rng.poisson(3, size=n).astype(float)
            f[-1] = f[:-1].min() - 1.0
        else:
            a = rng.normal(20, 8, size=n)
            f = a + rng.normal(0, 4, size=n)
        for impl, ref in pairs:
            worst = max(worst, abs(impl(a, f) - ref(a.tolist(), f.tolist())))
    same = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    fixed = M.smape(same, same) == 0.0 and M.r2_score(same, same) == 1.0 and M.smape([100], [50]) == 2 / 3
    ok = worst <= 1e-10 and fixed
    report("metrics", ok, f"1000 pairs x 6 metrics, max abs diff {worst:.1e} (<= 1e-10), fixed examples {fixed}")


def test_dbscan_oracle_equivalence(report):
    rng = np.random.default_rng(77)
    bad = []
    for i in range(200):
        n, d = int(rng.integers(1, 201)), int(rng.integers(1, 9))
        centers = rng.uniform(0, 1, size=(int(rng.integers(1, 5)), d))
        pts = centers[rng.integers(0, len(centers), size=n)] + rng.normal(0, 0.08, size=(n, d))
        eps, min_pts = float(rng.uniform(0.02, 0.4)), int(rng.integers(1, 8))
        ok, why = partitions_agree(dbscan(pts, eps, min_pts).labels, pts.tolist(), eps, min_pts)
        if not ok:
            bad.append((i, why))
    report("dbscan", not bad, f"200 point sets, mismatches {bad[:3]}")


def _sparse_trace(rng, n):
    gaps = rng.integers(0, 30, size=n - 1) * rng.choice([1.0, 0.5, 0.25])
    return np.concatenate([[0.0], np.cumsum(gaps)]) + float(rng.integers(0, 5))


def test_simulator_oracle_equivalence(report):
    lat = LatencyModel()
    rng = np.random.default_rng(31)
    bad = []
    for i in range(100):
        times = _sparse_trace(rng, int(rng.integers(1, 201)))
        if i % 2 == 0:
            window = float(rng.integers(1, 25))
            res = simulate(times, fixed_window(window), lat)
            windows = [window] * len(times)
        else:
            spec = PolicySpec("adaptiveWindow", window_minutes=10, quantile=0.5, safety=1.2, clamp=(1.0, 30.0))
            res = simulate(times, spec, lat, OracleForecaster(times, epsilon=0.25))
            windows, w = [], 10.0
            for k in range(len(times)):
                if k + 1 < len(times):
                    w = min(max(1.2 * (times[k + 1] - times[k] + 0.25), 1.0), 30.0)
                windows.append(w)
        cold, ev = replay(times.tolist(), windows, lat.exec_minutes)
        if list(res.cold_flags) != cold or sorted((t, c) for c, t in res.evictions) != ev:
            bad.append(i)
    eleven = simulate(np.arange(50) * 11.0, fixed_window(10)).cold_starts == 50
    five = simulate(np.arange(50) * 5.0, fixed_window(10)).cold_starts == 1
    ok = not bad and eleven and five
    report("simulator", ok, f"100 traces, mismatching {bad}; 11-min gaps all cold {eleven}; 5-min gaps one cold {five}")


def test_oracle_policy_bound(report):
    counts = []
    for seed in range(25):
        rng = np.random.default_rng(seed)
        gaps = [rng.integers(1, 30, size=150), rng.integers(11, 21, size=150),
                0.5 + rng.exponential(60, size=150)][seed % 3]
        # gaps exceed the execution time, so one container can serve every call
        times = np.concatenate([[0.0], np.cumsum(gaps)]).astype(float)
        o = perfect_foresight(times, clamp=(1.0, np.inf))
        counts.append(simulate(times, o.spec, LatencyModel(), o.forecaster).cold_starts)
    ok = all(c == 1 for c in counts)
    report("oracle-bound", ok, f"cold starts on 25 traces: {sorted(set(counts))} (all must be 1)")


def test_directional_frequency_result(report):
    start = time.perf_counter()
    gap_cfg = ModelConfig.for_granularity("event", context_length=32, prediction_length=8, num_layers_encoder=2,
                                          num_layers_decoder=2, d_model=16, num_heads=2, dropout=0.0)
    tc = TrainConfig(epochs=30, batch_size=32, learning_rate=3e-3, seed=0)
    plans = cli.make_policy_plans(["fixed", "adaptive"], 10.0, 0.9, 1.2, (1.0, 240.0), 8, 1.0)
    rows = []
    for seed in (1, 2, 3):
        s = synth.generate("sporadic", 7000, seed=seed, granularity="minute")
        events = cli.event_minutes(s)
        skip = len(events) - 100  # everything before the last 100 invocations is history
        gaps = to_gap_series(s)
        params, _ = cli.fit(gaps, gap_cfg, tc, "transformer", 2, cli._gap_end(events, skip))
        res = cli.simulate_function(s, plans, LatencyModel(), 100, skip, params, num_samples=100, seed=seed)
        fixed, adaptive = (r.cold_starts_per_100 for _, r in res)
        rows.append((seed, fixed, adaptive, 1 - adaptive / fixed))
    elapsed = time.perf_counter() - start
    ok = all(red >= 0.5 for *_, red in rows) and elapsed < 900
    detail = ", ".join(f"seed {s}: {f:.0f} -> {a:.0f} ({r:.0%})" for s, f, a, r in rows)
    report("directional", ok, f"CS/100 fixed10 -> adaptive(q=0.9, 1.2x): {detail}; need >= 50%; {elapsed:.0f}s (< 900s)")


def test_forecast_quality(report):
    values = synth.daily_hourly_values(40)
    s = InvocationSeries("periodic", "hour", DEFAULT_START, values)
    cfg = ModelConfig.for_granularity("hour", context_length=48, prediction_length=24, num_layers_encoder=2,
                                      num_layers_decoder=2, d_model=16, num_heads=2, dropout=0.0)
    tc = TrainConfig(epochs=60, batch_size=16, learning_rate=3e-3, seed=0)
    t0 = len(values) - 24
    windows = training_inputs(s, cfg, stride=3, end=t0)
    actual = values[t0:]
    scores = {}
    for kind in ("transformer", "recurrent"):
        params, _ = train(windows, cfg, tc, kind)
        dist = forecast(params, build_input(s, t0, cfg), num_samples=100, seed=0)
        scores[kind] = M.smape(actual, dist.point_forecast)
    scores["naive-23h"] = M.smape(actual, seasonal_naive(values[:t0], 23, 24))
    ok = scores["transformer"] < 0.05 and scores["transformer"] < scores["naive-23h"] \
        and scores["transformer"] <= scores["recurrent"]
    report("forecast-quality", ok, "held-out sMAPE " + ", ".join(f"{k} {v:.4f}" for k, v in scores.items())
           + " (transformer < 0.05, < naive, <= recurrent)")


def _pipeline_config(day_dir: Path, out: str) -> dict:
    return {
        "tracePaths": sorted(str(p) for p in day_dir.glob("*.csv")),
        "granularity": "hour",
        "clustering": {"eps": 0.5, "minPts": 1},
        "maxFunctions": 3,
        "model": {"context_length": 24, "prediction_length": 12, "num_layers_encoder": 1,
                  "num_layers_decoder": 1, "d_model": 8, "num_heads": 2, "dropout": 0.1,
                  "lags_sequence": [1, 2, 24]},
        "gapModel": {"context_length": 16, "prediction_length": 4, "num_layers_encoder": 1,
                     "num_layers_decoder": 1, "d_model": 8, "num_heads": 2, "dropout": 0.1},
        "training": {"epochs": 2, "batchSize": 16, "learningRate": 0.003, "seed": 7, "stride": 4},
        "forecast": {"numSamples": 20, "seed": 3},
        "policies": [{"kind": "fixed", "window": 10}, {"kind": "adaptive"}, {"kind": "prewarm"},
                     {"kind": "oracle"}],
        "simulation": {"invocations": 100, "historyFraction": 0.5},
        "output": out,
    }


def test_pipeline_determinism(report, tmp_path):
    day_dir = tmp_path / "days"
    assert cli.main(["synth", "--day-files", "7", "--functions", "6", "--seed", "11", "--out", str(day_dir)]) == 0
    stored = tmp_path / "experiment.json"
    stored.write_text(json.dumps(_pipeline_config(day_dir, "run")))
    trees = []
    for out in ("run", "rerun"):
        cfg = cli.ExperimentConfig.load(stored)
        cfg.output = str(tmp_path / out)
        cli.run_experiment(cfg)
        root = tmp_path / out
        trees.append({str(p.relative_to(root)): p.read_bytes() for p in root.rglob("*") if p.is_file()})
    a, b = trees
    compared = sorted(k for k in a if k != "manifest.json")
    diff = [k for k in compared if a[k] != b.get(k)]
    kinds = {k.split("/")[0] for k in compared}
    needed = {"checkpoints", "forecasts", "metrics.csv", "summary.csv", "plots", "runs"}
    ok = a.keys() == b.keys() and not diff and needed <= kinds
    report("determinism", ok, f"{len(compared)} files compared, differing {diff}, present {sorted(kinds & needed)}")


AZURE_DIR = os.environ.get("COLDSTART_AZURE_DIR")


def test_real_trace_smoke(report, capsys):
    if not AZURE_DIR:
        with capsys.disabled():
            print("\nSKIP real-trace: set COLDSTART_AZURE_DIR to the directory holding the 14 day-files")
        pytest.skip("real trace not available")
    paths = sorted(Path(AZURE_DIR).glob("invocations_per_function_md.anon.d*.csv"))[:14]
    series, _ = cli.ingest_files([str(p) for p in paths], True, "minute")
    clusters = cli.cluster_series(series, 0.3, 2)["clusters"]
    by_id = {s.function_id: s for s in series}
    reps = [by_id[c["representativeId"]] for c in clusters]

    def median_gap(s):
        gaps = np.diff(cli.event_minutes(s))
        return float(np.median(gaps)) if len(gaps) else 0.0

    def rank(pool):
        keep = [s for s in pool if s.values.sum() >= 600 and median_gap(s) > 10]
        return sorted(keep, key=lambda s: (-int(s.values.sum()), s.function_id))

    # cluster representatives first, then other sporadic members if too few qualify
    chosen = rank(reps)[:3]
    chosen += [s for s in rank(series) if s not in chosen][:3 - len(chosen)]
    if len(chosen) < 3:
        report("real-trace", False, f"only {len(chosen)} sporadic representatives found")
    gap_cfg = ModelConfig.for_granularity("event", context_length=32, prediction_length=8, num_layers_encoder=2,
                                          num_layers_decoder=2, d_model=16, num_heads=2, dropout=0.0)
    tc = TrainConfig(epochs=20, batch_size=32, learning_rate=3e-3, seed=0)
    plans = cli.make_policy_plans(["fixed", "adaptive"], 10.0, 0.9, 1.2, (1.0, 240.0), 8, 1.0)
    rows = []
    for s in chosen:
        events = cli.event_minutes(s)
        skip = cli.history_split(events, 0.5, gap_cfg.context_length + gap_cfg.max_lag + 1)
        params, _ = cli.fit(to_gap_series(s), gap_cfg, tc, "transformer", 4, cli._gap_end(events, skip))
        res = cli.simulate_function(s, plans, LatencyModel(), 100, skip, params)
        rows.append(tuple(r.cold_starts_per_100 for _, r in res))
    wins = sum(a < f for f, a in rows)
    report("real-trace", wins >= 2, f"fixed10 vs adaptive CS/100 {rows}; adaptive wins {wins}/3 (need >= 2)")
