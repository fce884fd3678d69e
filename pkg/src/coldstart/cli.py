"""Command-line driver: ingest, cluster, train, forecast, evaluate, simulate, synth, run.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import synth
from .clustering import cluster_report, compute_features, dbscan, minmax_normalize, select_representatives
from .forecaster import (
    InsufficientHistory,
    ModelConfig,
    NonFinite,
    TrainConfig,
    build_input,
    forecast,
    seasonal_naive,
    train,
    training_inputs,
)
from .forecaster import checkpoint
from .forecaster.checkpoint import CheckpointError
from .metrics import MetricError, evaluate, write_report
from .policy import ModelCountForecaster, ModelGapForecaster, PolicySpec, fixed_window, perfect_foresight
from .simulator import LatencyModel, SimulationResult, simulate, summary_row
from .trace import (
    DEFAULT_START,
    MINUTES_PER_DAY,
    InvocationSeries,
    TraceError,
    filter_http,
    load_series,
    merge_days,
    parse_day_file,
    parse_time,
    resample_to_hour,
    save_series,
    to_gap_series,
    write_day_file,
)

log = logging.getLogger("coldstart")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
POLICY_CHOICES = ("fixed", "adaptive", "prewarm", "oracle")
PLATFORM = {"fixed": "OpenWhisk", "adaptive": "OW + Transf", "prewarm": "OW + Transf prewarm", "oracle": "Oracle"}
SUMMARY_COLUMNS = ("function", "platform", "icw_min", "icw_max", "cs_per_100")


class UsageError(Exception):
    pass


# -- small I/O helpers ------------------------------------------------------------


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(["" if v is None else v for v in r] for r in rows)


def safe_name(function_id: str) -> str:
    """Filesystem-safe, collision-resistant name for per-function outputs."""
    clean = re.sub(r"[^A-Za-z0-9_.-]", "_", function_id)
    if len(clean) <= 48 and clean == function_id:
        return clean
    return clean[:24] + "-" + hashlib.sha1(function_id.encode()).hexdigest()[:12]


def _select(series: list[InvocationSeries], ids: Sequence[str] | None) -> list[InvocationSeries]:
    if not ids:
        return series
    by_id = {s.function_id: s for s in series}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise UsageError(f"unknown function id(s): {', '.join(missing)}")
    return [by_id[i] for i in ids]


def _load_series_arg(path) -> list[InvocationSeries]:
    series = load_series(path)
    if not series:
        raise UsageError(f"{path}: no series found")
    return series


# -- pipeline steps -----------------------------------------------------------------


def ingest_files(paths: Sequence[str], http_only: bool, granularity: str, start_time: datetime = DEFAULT_START):
    """Parse, filter, merge and resample day files. Returns (series, manifest)."""
    tables = []
    for p in paths:
        try:
            with open(p, "rb") as fh:
                rows = parse_day_file(fh)
        except TraceError as exc:
            raise UsageError(f"{p}: {exc}") from exc
        tables.append(filter_http(rows) if http_only else rows)
    merged = merge_days(tables, start_time)
    series = [merged[k] for k in sorted(merged)]
    if granularity == "hour":
        series = [resample_to_hour(s) for s in series]
    length = len(series[0]) if series else 0
    step_minutes = 60 if granularity == "hour" else 1
    manifest = {
        "inputs": [str(p) for p in paths],
        "numDays": len(paths),
        "numFunctions": len(series),
        "httpOnly": http_only,
        "granularity": granularity,
        "seriesLength": length,
        "startTime": start_time.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "endTime": (start_time + timedelta(minutes=length * step_minutes)).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "totalInvocations": int(sum(int(s.values.sum()) for s in series)),
    }
    return series, manifest


def cluster_series(series: Sequence[InvocationSeries], eps: float, min_pts: int) -> dict:
    if not series:
        raise UsageError("no series to cluster")
    feats = [compute_features(s) for s in series]
    norm = minmax_normalize(feats)
    assignment = dbscan(np.vstack([f.vector for f in norm]), eps, min_pts)
    reps = select_representatives(assignment, norm)
    report = cluster_report(assignment, norm, reps)
    report["features"] = {f.function_id: [float(v) for v in f.vector] for f in feats}
    return report


def event_minutes(s: InvocationSeries) -> np.ndarray:
    """One float minute per invocation (minute series or hour series scaled to minutes)."""
    ev = synth.events_from_counts(s.values)
    return ev * 60.0 if s.granularity == "hour" else ev


def history_split(events: np.ndarray, fraction: float, required_events: int = 0) -> int:
    """Number of leading invocations held back as history.

    At least ``fraction`` of all invocations, and enough that the prefix
    covers ``required_events`` distinct invocation minutes.
    """
    skip = int(math.floor(fraction * len(events)))
    if required_events > 0:
        uniq, first_idx = np.unique(np.floor(events), return_index=True)
        if len(uniq) >= required_events:
            skip = max(skip, int(first_idx[required_events - 1]) + 1)
        else:
            skip = len(events)
    return min(skip, len(events))


def _gap_end(events: np.ndarray, skip: int) -> int:
    return max(0, len(np.unique(np.floor(events[:skip]))) - 1)


def target_series(s: InvocationSeries, target: str, granularity: str | None = None):
    if target == "gaps":
        if s.granularity != "minute":
            raise UsageError("gap targets need a minute series")
        return to_gap_series(s)
    if granularity == "hour" and s.granularity == "minute":
        return resample_to_hour(s)
    return s


def fit(series_obj, model_cfg: ModelConfig, train_cfg: TrainConfig, kind: str, stride: int, end: int | None):
    windows = training_inputs(series_obj, model_cfg, stride=stride, end=end)
    log.info("training %s on %d windows", kind, len(windows))
    return train(windows, model_cfg, train_cfg, kind=kind)


def forecast_json(function_id: str, target: str, granularity: str, t0: int, dist, num_samples: int, seed: int) -> dict:
    return {
        "functionId": function_id,
        "t0": int(t0),
        "granularity": "event" if target == "gaps" else granularity,
        "target": target,
        "pointForecast": [float(v) for v in dist.point_forecast],
        "quantiles": {
            "0.5": [float(v) for v in dist.quantile(0.5)],
            "0.9": [float(v) for v in dist.quantile(0.9)],
        },
        "numSamples": int(num_samples),
        "seed": int(seed),
    }


def default_period(granularity: str) -> int:
    return {"hour": 24, "minute": MINUTES_PER_DAY, "event": 1}[granularity]


@dataclass
class PolicyPlan:
    """One simulated policy: a CLI kind plus the spec parameters it needs."""

    kind: str
    spec: PolicySpec | None = None
    clamp_min: float = 1.0


def make_policy_plans(kinds: Sequence[str], window: float, quantile: float, safety: float,
                      clamp: tuple[float, float], max_pool: int, interval: float) -> list[PolicyPlan]:
    plans = []
    for kind in kinds:
        if kind == "fixed":
            plans.append(PolicyPlan(kind, fixed_window(window)))
        elif kind == "adaptive":
            plans.append(PolicyPlan(kind, PolicySpec("adaptiveWindow", window, quantile, safety, tuple(clamp), name="adaptive")))
        elif kind == "prewarm":
            plans.append(PolicyPlan(kind, PolicySpec("prewarm", window, quantile, safety, tuple(clamp), max_pool,
                                                      interval, name="prewarm")))
        elif kind == "oracle":
            if not window > 0:
                raise ValueError("window_minutes must be > 0")
            plans.append(PolicyPlan(kind, None, clamp[0]))
        else:
            raise UsageError(f"unknown policy {kind!r}")
    return plans


def simulate_function(
    s: InvocationSeries,
    plans: Sequence[PolicyPlan],
    latency: LatencyModel,
    invocations: int,
    skip: int,
    gap_params=None,
    count_params=None,
    num_samples: int = 100,
    seed: int = 0,
    count_series: InvocationSeries | None = None,
) -> list[tuple[PolicyPlan, SimulationResult]]:
    """Replay invocations ``skip .. skip+invocations`` of ``s`` under every plan.

    All plans see the same segment; invocations before it are history for
    model-driven forecasts.
    """
    events = event_minutes(s)
    segment = events[skip:skip + invocations]
    history = events[:skip]
    out = []
    for plan in plans:
        hook = None
        spec = plan.spec
        if plan.kind == "oracle":
            oracle = perfect_foresight(segment, clamp=(plan.clamp_min, math.inf))
            spec, hook = oracle.spec, oracle.forecaster
        elif plan.kind == "adaptive":
            hook = ModelGapForecaster(gap_params, history, s.start_time, num_samples, seed, function_id=s.function_id)
        elif plan.kind == "prewarm":
            hook = ModelCountForecaster(count_params, count_series or s, num_samples, seed)
        out.append((plan, simulate(segment, spec, latency, hook)))
    return out


def write_simulation_outputs(out_dir, per_function: Sequence[tuple[str, int, list]]) -> list[dict]:
    out_dir = Path(out_dir)
    table = []
    for fid, skip, results in per_function:
        name = safe_name(fid)
        for plan, res in results:
            label = plan.kind
            row = summary_row(fid, PLATFORM[label], res)
            table.append(row)
            summary = res.summary(fid, label)
            summary.update({
                "platform": PLATFORM[label],
                "skippedInvocations": skip,
                "shortTrace": res.short_trace,
                "evictions": [[int(c), float(t)] for c, t in res.evictions],
                "prewarmed": res.prewarmed,
                "policySpec": None if plan.spec is None else plan.spec.to_dict(),
            })
            _write_json(out_dir / "runs" / f"{name}__{label}.json", summary)
            _write_csv(out_dir / "plots" / f"{name}__{label}_window.csv", ("time_min", "window_min"), res.window_log)
            cold = res.cold_flags.astype(int) if res.cold_flags is not None else np.zeros(0, dtype=int)
            cum = np.cumsum(cold)
            seg = [t for t, _ in res.window_log]
            _write_csv(
                out_dir / "plots" / f"{name}__{label}_cold.csv",
                ("invocation", "time_min", "cold", "cumulative_cold"),
                [(i, t, int(c), int(k)) for i, (t, c, k) in enumerate(zip(seg, cold, cum))],
            )
    _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, [[r[c] for c in SUMMARY_COLUMNS] for r in table])
    return table


# -- experiment config ----------------------------------------------------------------


def _expand(paths: Sequence[str]) -> list[str]:
    """Expand glob patterns (sorted); plain paths pass through unchanged."""
    out = []
    for p in paths:
        out.extend(sorted(glob.glob(p)) if glob.has_magic(p) else [p])
    return out


@dataclass
class ExperimentConfig:
    """Declarative description of a full pipeline run (stored as JSON)."""

    trace_paths: list[str] = field(default_factory=list)
    series_paths: list[str] = field(default_factory=list)
    granularity: str = "minute"
    http_only: bool = True
    clustering: dict = field(default_factory=lambda: {"eps": 0.3, "minPts": 2})
    functions: list[str] | None = None
    max_functions: int = 3
    model: dict = field(default_factory=dict)
    gap_model: dict | None = None
    training: dict = field(default_factory=lambda: {"epochs": 20, "batchSize": 32, "learningRate": 1e-3, "seed": 0, "stride": 1})
    forecast: dict = field(default_factory=lambda: {"numSamples": 100, "seed": 0})
    policies: list[dict] = field(default_factory=lambda: [{"kind": "fixed", "window": 10.0}])
    latency: dict = field(default_factory=lambda: {"coldStartMs": 500.0, "warmStartMs": 5.0, "execMs": 100.0})
    simulation: dict = field(default_factory=lambda: {"invocations": 100, "historyFraction": 0.0})
    output: str = "out"
    source: dict | None = field(default=None, repr=False, compare=False)

    _KEYS = {
        "tracePaths": "trace_paths", "seriesPaths": "series_paths", "granularity": "granularity",
        "httpOnly": "http_only", "clustering": "clustering", "functions": "functions",
        "maxFunctions": "max_functions", "model": "model", "gapModel": "gap_model",
        "training": "training", "forecast": "forecast", "policies": "policies",
        "latency": "latency", "simulation": "simulation", "output": "output",
    }

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | os.PathLike | None = None) -> ExperimentConfig:
        unknown = set(d) - set(cls._KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**{cls._KEYS[k]: v for k, v in d.items()})
        cfg.source = dict(d)
        if cfg.granularity not in ("minute", "hour"):
            raise UsageError("granularity must be minute or hour")
        if base_dir is not None:
            base = Path(base_dir)
            fix = lambda p: str(p if os.path.isabs(p) else base / p)  # noqa: E731
            cfg.trace_paths = [fix(p) for p in cfg.trace_paths]
            cfg.series_paths = [fix(p) for p in cfg.series_paths]
            cfg.output = fix(cfg.output)
        cfg.trace_paths = _expand(cfg.trace_paths)
        return cfg

    def to_dict(self) -> dict:
        return {k: getattr(self, attr) for k, attr in self._KEYS.items()}

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), Path(path).resolve().parent)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(epochs=int(t.get("epochs", 20)), batch_size=int(t.get("batchSize", 32)),
                           learning_rate=float(t.get("learningRate", 1e-3)), seed=int(t.get("seed", 0)),
                           grad_clip=t.get("gradClip"))

    def latency_model(self) -> LatencyModel:
        lat = self.latency
        return LatencyModel(float(lat.get("coldStartMs", 500.0)), float(lat.get("warmStartMs", 5.0)),
                            float(lat.get("execMs", 100.0)))


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Ingest, cluster, train, forecast, evaluate and simulate; returns a summary."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    # the config as written by the user, so reruns into another directory stay identical
    _write_json(out / "config.json", cfg.source if cfg.source is not None else cfg.to_dict())

    series: list[InvocationSeries] = []
    manifest: dict = {"numDays": 0}
    if cfg.trace_paths:
        series, manifest = ingest_files(cfg.trace_paths, cfg.http_only, "minute")
    for p in cfg.series_paths:
        series.extend(load_series(p))
    if not series:
        raise UsageError("experiment has no input series")
    save_series(series, out / "series.json")
    manifest["createdAt"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    _write_json(out / "manifest.json", manifest)

    if cfg.functions:
        chosen = _select(series, cfg.functions)
    else:
        report = cluster_series(series, float(cfg.clustering.get("eps", 0.3)), int(cfg.clustering.get("minPts", 2)))
        _write_json(out / "clusters.json", report)
        rep_ids = [c["representativeId"] for c in report["clusters"]]
        rep_ids = rep_ids or [s.function_id for s in series]
        chosen = _select(series, rep_ids[: cfg.max_functions])

    train_cfg = cfg.train_config()
    stride = int(cfg.training.get("stride", 1))
    num_samples = int(cfg.forecast.get("numSamples", 100))
    fseed = int(cfg.forecast.get("seed", 0))
    kinds = [p.get("kind", "fixed") for p in cfg.policies]
    metric_rows = []
    per_function = []
    for s in chosen:
        name = safe_name(s.function_id)
        counts = target_series(s, "counts", cfg.granularity)
        model_cfg = ModelConfig.for_granularity(counts.granularity, **cfg.model)
        count_params = None
        H = model_cfg.prediction_length
        t0 = len(counts) - H
        try:
            fitted = {}
            for kind in ("transformer", "recurrent"):
                params, losses = fit(counts, model_cfg, train_cfg, kind, stride, t0)
                fitted[kind] = params
                checkpoint.save(params, out / "checkpoints" / f"{name}__{kind}.json",
                                {"functionId": s.function_id, "target": "counts", "granularity": counts.granularity})
                _write_csv(out / "losses" / f"{name}__{kind}.csv", ("epoch", "loss"), list(enumerate(losses)))
                dist = forecast(params, build_input(counts, t0, model_cfg), num_samples, fseed)
                _write_json(out / "forecasts" / f"{name}__{kind}.json",
                            forecast_json(s.function_id, "counts", counts.granularity, t0, dist, num_samples, fseed))
                metric_rows.append(evaluate(counts.values[t0:], dist.point_forecast).row(kind, s.function_id))
            period = default_period(counts.granularity)
            naive = seasonal_naive(counts.values[:t0], period, H)
            metric_rows.append(evaluate(counts.values[t0:], naive).row("seasonal-naive", s.function_id))
            count_params = fitted["transformer"]
        except (InsufficientHistory, TraceError) as exc:
            log.warning("%s: skipping forecast evaluation (%s)", s.function_id, exc)

        events = event_minutes(s)
        gap_params = None
        skip = 0
        if "adaptive" in kinds:
            gap_cfg = ModelConfig.for_granularity("event", **(cfg.gap_model or {}))
            required = gap_cfg.context_length + gap_cfg.max_lag + 1
            skip = history_split(events, float(cfg.simulation.get("historyFraction", 0.0)), required)
            gaps = to_gap_series(s)
            gap_params, losses = fit(gaps, gap_cfg, train_cfg, "transformer", stride, _gap_end(events, skip))
            checkpoint.save(gap_params, out / "checkpoints" / f"{name}__gaps.json",
                            {"functionId": s.function_id, "target": "gaps", "granularity": "event"})
            _write_csv(out / "losses" / f"{name}__gaps.csv", ("epoch", "loss"), list(enumerate(losses)))
        plans = []
        for p in cfg.policies:
            kind = p.get("kind", "fixed")
            if kind == "prewarm" and count_params is None:
                log.warning("%s: no count model, prewarm policy skipped", s.function_id)
                continue
            interval = 60.0 if counts.granularity == "hour" else 1.0
            plans += make_policy_plans(
                [kind], float(p.get("window", 10.0)), float(p.get("quantile", 0.9)), float(p.get("safety", 1.2)),
                tuple(p.get("clamp", (1.0, 240.0))), int(p.get("maxPool", 8)), interval,
            )
        results = simulate_function(s, plans, cfg.latency_model(), int(cfg.simulation.get("invocations", 100)),
                                    skip, gap_params, count_params, num_samples, fseed, counts)
        per_function.append((s.function_id, skip, results))

    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as cf, \
            open(out / "metrics.json", "w", encoding="utf-8") as jf:
        write_report(metric_rows, cf, jf)
    table = write_simulation_outputs(out, per_function)
    return {"functions": [s.function_id for s in chosen], "metrics": metric_rows, "summary": table}


# -- commands ------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    start = parse_time(args.start_time) if args.start_time else DEFAULT_START
    series, manifest = ingest_files(args.input, args.http_only, args.granularity, start)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_series(series, out / "series.csv")
    manifest["functions"] = [s.function_id for s in series]
    manifest["createdAt"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    _write_json(out / "manifest.json", manifest)
    print(f"ingested {manifest['numFunctions']} functions over {manifest['numDays']} day(s) -> {out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    series = load_series(args.series)
    if not series:
        raise UsageError(f"{args.series}: empty series set")
    report = cluster_series(series, args.eps, args.min_pts)
    _write_json(args.out, report)
    print(f"{len(report['clusters'])} clusters, {len(report['noise'])} noise -> {args.out}")
    return EXIT_OK


def _model_config(args, granularity: str) -> ModelConfig:
    kw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            kw.update(json.load(fh))
    for flag, key in (("context", "context_length"), ("horizon", "prediction_length"),
                      ("enc_layers", "num_layers_encoder"), ("dec_layers", "num_layers_decoder"),
                      ("d_model", "d_model"), ("heads", "num_heads"), ("dropout", "dropout"),
                      ("embedding_dim", "embedding_dimension")):
        v = getattr(args, flag)
        if v is not None:
            kw[key] = v
    if args.lags:
        kw["lags_sequence"] = tuple(int(x) for x in args.lags.split(","))
    return ModelConfig.for_granularity(granularity, **kw)


def cmd_train(args) -> int:
    s = _select(_load_series_arg(args.series), [args.function] if args.function else None)[0]
    target = target_series(s, args.target, args.granularity)
    granularity = "event" if args.target == "gaps" else target.granularity
    model_cfg = _model_config(args, granularity)
    if args.target == "gaps":
        events = event_minutes(s)
        skip = history_split(events, args.history_fraction)
        end = _gap_end(events, skip) if skip else len(target)
    else:
        holdout = model_cfg.prediction_length if args.holdout is None else args.holdout
        end = len(target) - holdout
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed,
                     grad_clip=args.grad_clip)
    params, losses = fit(target, model_cfg, tc, args.kind, args.stride, end)
    extra = {"functionId": s.function_id, "target": args.target, "granularity": granularity, "trainEnd": int(end)}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(params, args.out, extra)
    loss_csv = args.loss_csv or str(Path(args.out).with_suffix("")) + ".loss.csv"
    _write_csv(loss_csv, ("epoch", "loss"), list(enumerate(losses)))
    print(f"trained {args.kind}: final loss {losses[-1]:.6f} -> {args.out}")
    return EXIT_OK


def _load_checkpoint(path):
    if not path:
        raise UsageError("a --checkpoint is required")
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    return checkpoint.load(path)


def cmd_forecast(args) -> int:
    params, extra = _load_checkpoint(args.checkpoint)
    fid = args.function or extra.get("functionId")
    s = _select(_load_series_arg(args.series), [fid] if fid else None)[0]
    tgt = extra.get("target", "counts")
    gran = extra.get("granularity", s.granularity)
    series_obj = target_series(s, tgt, gran)
    t0 = len(series_obj) if args.t0 is None else args.t0
    dist = forecast(params, build_input(series_obj, t0, params.config), args.num_samples, args.seed)
    _write_json(args.out, forecast_json(s.function_id, tgt, gran, t0, dist, args.num_samples, args.seed))
    print(f"forecast {len(dist.point_forecast)} steps from t0={t0} -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    series = _load_series_arg(args.series)
    rows = []
    for path in args.checkpoint or []:
        params, extra = _load_checkpoint(path)
        fid = args.function or extra.get("functionId")
        s = _select(series, [fid] if fid else None)[0]
        tgt = extra.get("target", "counts")
        obj = target_series(s, tgt, extra.get("granularity", s.granularity))
        H = params.config.prediction_length
        t0 = len(obj) - H if args.t0 is None else args.t0
        values = obj.gaps if tgt == "gaps" else obj.values
        dist = forecast(params, build_input(obj, t0, params.config), args.num_samples, args.seed)
        rows.append(evaluate(values[t0:t0 + H], dist.point_forecast).row(params.kind, s.function_id))
        if args.seasonal_period != 0:
            period = args.seasonal_period or default_period("event" if tgt == "gaps" else obj.granularity)
            key = ("seasonal-naive", s.function_id)
            if key not in {(r["model"], r["dataset"]) for r in rows}:
                naive = seasonal_naive(values[:t0], period, H)
                rows.append(evaluate(values[t0:t0 + H], naive).row("seasonal-naive", s.function_id))
    for path in args.forecast or []:
        with open(path, encoding="utf-8") as fh:
            fc = json.load(fh)
        s = _select(series, [fc["functionId"]])[0]
        obj = target_series(s, fc.get("target", "counts"), fc.get("granularity", s.granularity))
        values = obj.gaps if fc.get("target") == "gaps" else obj.values
        pf = np.asarray(fc["pointForecast"], dtype=np.float64)
        t0 = int(fc["t0"])
        actual = values[t0:t0 + len(pf)]
        if len(actual) != len(pf):
            raise UsageError(f"{path}: forecast extends past the end of the series")
        rows.append(evaluate(actual, pf).row(fc.get("model", Path(path).stem), s.function_id))
    if not rows:
        raise UsageError("nothing to evaluate: pass --checkpoint and/or --forecast")
    Path(args.out_csv).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out_csv, "w", encoding="utf-8", newline="") as cf:
        if args.out_json:
            with open(args.out_json, "w", encoding="utf-8") as jf:
                write_report(rows, cf, jf)
        else:
            write_report(rows, cf)
    print(f"{len(rows)} metric row(s) -> {args.out_csv}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    series = _select(_load_series_arg(args.series), args.function)
    kinds = args.policy or ["fixed"]
    latency = LatencyModel(args.latency_cold_ms, args.latency_warm_ms, args.latency_exec_ms)
    gap_params = count_params = None
    if "adaptive" in kinds:
        gap_params, _ = _load_checkpoint(args.checkpoint)
    if "prewarm" in kinds:
        count_params, _ = _load_checkpoint(args.count_checkpoint or args.checkpoint)
    per_function = []
    for s in series:
        interval = 60.0 if s.granularity == "hour" else 1.0
        plans = make_policy_plans(kinds, args.window, args.quantile, args.safety, tuple(args.clamp),
                                  args.max_pool, interval)
        events = event_minutes(s)
        if args.skip is not None:
            skip = args.skip
        elif gap_params is not None:
            cfg = gap_params.config
            skip = history_split(events, args.history_fraction, cfg.context_length + cfg.max_lag + 1)
        else:
            skip = history_split(events, args.history_fraction)
        results = simulate_function(s, plans, latency, args.invocations, skip, gap_params, count_params,
                                    args.num_samples, args.seed)
        per_function.append((s.function_id, skip, results))
    table = write_simulation_outputs(args.out, per_function)
    for r in table:
        print(f"{r['function']}\t{r['platform']}\tcs/100={r['cs_per_100']:g}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.day_files:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        tables = synth.day_tables(args.day_files, args.functions, args.seed)
        for d, rows in enumerate(tables, start=1):
            with open(out / f"invocations_per_function_md.anon.d{d:02d}.csv", "w", encoding="utf-8", newline="") as fh:
                write_day_file(rows, fh)
        print(f"wrote {len(tables)} day file(s) -> {out}")
        return EXIT_OK
    s = synth.generate(args.pattern, args.length, args.seed, args.granularity, period=args.period,
                       gap_min=args.gap_min, gap_max=args.gap_max, function_id=args.function_id)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_series([s], args.out)
    print(f"{args.pattern} series of length {args.length} -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.out:
        cfg.output = args.out
    summary = run_experiment(cfg)
    print(f"pipeline finished for {len(summary['functions'])} function(s) -> {cfg.output}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coldstart", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("ingest", help="parse day files into canonical series")
    q.add_argument("--input", nargs="+", required=True)
    q.add_argument("--http-only", action="store_true")
    q.add_argument("--granularity", choices=("minute", "hour"), default="minute")
    q.add_argument("--start-time")
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_ingest)

    q = sub.add_parser("cluster", help="DBSCAN over invocation-pattern features")
    q.add_argument("--series", required=True)
    q.add_argument("--eps", type=_positive(float), default=0.3)
    q.add_argument("--min-pts", type=_positive(int), default=2)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_cluster)

    q = sub.add_parser("train", help="fit a forecaster")
    q.add_argument("--series", required=True)
    q.add_argument("--function")
    q.add_argument("--kind", choices=("transformer", "recurrent"), default="transformer")
    q.add_argument("--target", choices=("counts", "gaps"), default="counts")
    q.add_argument("--granularity", choices=("minute", "hour"))
    q.add_argument("--config", help="JSON file of model hyperparameters")
    q.add_argument("--context", type=_positive(int))
    q.add_argument("--horizon", type=_positive(int))
    q.add_argument("--enc-layers", type=_positive(int))
    q.add_argument("--dec-layers", type=_positive(int))
    q.add_argument("--d-model", type=_positive(int))
    q.add_argument("--heads", type=_positive(int))
    q.add_argument("--embedding-dim", type=_positive(int))
    q.add_argument("--dropout", type=float)
    q.add_argument("--lags", help="comma-separated lag offsets")
    q.add_argument("--epochs", type=_positive(int), default=20)
    q.add_argument("--batch-size", type=_positive(int), default=32)
    q.add_argument("--lr", type=_positive(float), default=1e-3)
    q.add_argument("--grad-clip", type=_positive(float))
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--stride", type=_positive(int), default=1)
    q.add_argument("--holdout", type=int, help="trailing steps excluded from training (counts)")
    q.add_argument("--history-fraction", type=float, default=0.0,
                   help="gaps: train only on this leading fraction of invocations")
    q.add_argument("--out", required=True)
    q.add_argument("--loss-csv")
    q.set_defaults(func=cmd_train)

    q = sub.add_parser("forecast", help="sample a forecast distribution")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--series", required=True)
    q.add_argument("--function")
    q.add_argument("--t0", type=int)
    q.add_argument("--num-samples", type=_positive(int), default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_forecast)

    q = sub.add_parser("evaluate", help="six-metric table for models and seasonal naive")
    q.add_argument("--series", required=True)
    q.add_argument("--function")
    q.add_argument("--checkpoint", action="append")
    q.add_argument("--forecast", action="append", help="forecast JSON to score")
    q.add_argument("--t0", type=int)
    q.add_argument("--seasonal-period", type=int, help="0 disables the seasonal-naive row")
    q.add_argument("--num-samples", type=_positive(int), default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-csv", required=True)
    q.add_argument("--out-json")
    q.set_defaults(func=cmd_evaluate)

    q = sub.add_parser("simulate", help="replay invocations under keep-alive policies")
    q.add_argument("--series", required=True)
    q.add_argument("--function", action="append")
    q.add_argument("--policy", action="append", choices=POLICY_CHOICES)
    q.add_argument("--window", type=_positive(float), default=10.0)
    q.add_argument("--quantile", type=float, default=0.9)
    q.add_argument("--safety", type=float, default=1.2)
    q.add_argument("--clamp", type=float, nargs=2, default=(1.0, 240.0), metavar=("MIN", "MAX"))
    q.add_argument("--max-pool", type=int, default=8)
    q.add_argument("--checkpoint", help="gap-model checkpoint for adaptive policies")
    q.add_argument("--count-checkpoint", help="count-model checkpoint for prewarm policies")
    q.add_argument("--invocations", type=_positive(int), default=100)
    q.add_argument("--skip", type=int, help="leading invocations used only as history")
    q.add_argument("--history-fraction", type=float, default=0.0)
    q.add_argument("--num-samples", type=_positive(int), default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--latency-cold-ms", type=float, default=500.0)
    q.add_argument("--latency-warm-ms", type=float, default=5.0)
    q.add_argument("--latency-exec-ms", type=float, default=100.0)
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("synth", help="generate synthetic traces")
    q.add_argument("--pattern", choices=synth.PATTERNS, default="sporadic")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--length", type=_positive(int), default=MINUTES_PER_DAY)
    q.add_argument("--granularity", choices=("minute", "hour"), default="minute")
    q.add_argument("--period", type=_positive(int), default=15)
    q.add_argument("--gap-min", type=_positive(int), default=11)
    q.add_argument("--gap-max", type=_positive(int), default=20)
    q.add_argument("--function-id")
    q.add_argument("--day-files", type=_positive(int), help="write this many day files instead of a series")
    q.add_argument("--functions", type=_positive(int), default=6)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_synth)

    q = sub.add_parser("run", help="full pipeline from an experiment config")
    q.add_argument("--config", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_run)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NonFinite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, TraceError, MetricError, CheckpointError, InsufficientHistory, OSError,
            ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
