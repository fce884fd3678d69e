"""Keep-alive and prewarm decisions derived from forecasts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .forecaster.sampling import ForecastDistribution

KINDS = ("fixedWindow", "adaptiveWindow", "prewarm", "prewarmPlusAdaptive")


@dataclass(frozen=True)
class PolicySpec:
    """Serializable policy description.

    ``window_minutes`` is the fixed window, and the fallback for adaptive
    policies until the forecaster has enough history.
    """

    kind: str = "fixedWindow"
    window_minutes: float = 10.0
    quantile: float = 0.9
    safety: float = 1.2
    clamp: tuple[float, float] = (1.0, 240.0)
    max_pool: int = 8
    interval_minutes: float = 1.0
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not self.window_minutes > 0:
            raise ValueError("window_minutes must be > 0")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")
        if self.safety < 1.0:
            raise ValueError("safety factor must be >= 1")
        lo, hi = self.clamp
        if lo < 1.0 or hi < lo:
            raise ValueError("clamp must satisfy 1 <= min <= max")
        if self.max_pool < 0 or self.interval_minutes <= 0:
            raise ValueError("max_pool must be >= 0 and interval_minutes > 0")
        object.__setattr__(self, "clamp", (float(lo), float(hi)))

    @property
    def adaptive(self) -> bool:
        return self.kind in ("adaptiveWindow", "prewarmPlusAdaptive")

    @property
    def prewarms(self) -> bool:
        return self.kind in ("prewarm", "prewarmPlusAdaptive")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clamp"] = [d["clamp"][0], None if math.isinf(d["clamp"][1]) else d["clamp"][1]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PolicySpec:
        d = dict(d)
        if "clamp" in d:
            lo, hi = d["clamp"]
            d["clamp"] = (lo, math.inf if hi is None else hi)
        return cls(**d)


@dataclass(frozen=True)
class IdleWindowDecision:
    at_event: int
    window_minutes: float


@dataclass
class PrewarmPlan:
    interval_start: int
    interval_length: float
    pool_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def fixed_window(minutes: float = 10.0) -> PolicySpec:
    return PolicySpec(kind="fixedWindow", window_minutes=minutes, name=f"fixed{minutes:g}")


def adaptive_window(
    gap_forecast: ForecastDistribution,
    q: float = 0.9,
    safety: float = 1.2,
    clamp: tuple[float, float] = (1.0, 240.0),
    at_event: int = 0,
) -> IdleWindowDecision:
    """``clip(safety * quantile_q(next gap), *clamp)`` in minutes."""
    g = gap_forecast.quantile(q, 0)
    window = float(np.clip(safety * g, clamp[0], clamp[1]))
    return IdleWindowDecision(at_event, window)


def prewarm_schedule(
    count_forecast: ForecastDistribution,
    q: float = 0.9,
    max_pool: int = 8,
    interval_start: int = 0,
    interval_length: float = 1.0,
) -> PrewarmPlan:
    """Pool size per horizon step: ``min(max_pool, ceil(quantile_q(count)))``."""
    qs = np.asarray(count_forecast.quantile(q), dtype=np.float64)
    # guard against 3.0000000000000004 style quantile noise before ceil
    sizes = np.ceil(np.round(qs, 9)).astype(np.int64)
    sizes = np.clip(sizes, 0, max_pool)
    return PrewarmPlan(interval_start, interval_length, sizes)


class OracleForecaster:
    """Forecast hook that knows the future: exact next gaps and per-interval counts."""

    def __init__(self, events: Sequence[float], epsilon: float = 1e-6, interval_minutes: float = 1.0):
        self.events = np.asarray(events, dtype=np.float64)
        self.epsilon = epsilon
        self.interval = interval_minutes

    def next_gap(self, event_index: int, event_times: np.ndarray) -> ForecastDistribution | None:
        if event_index + 1 >= len(self.events):
            return None
        gap = self.events[event_index + 1] - self.events[event_index]
        return ForecastDistribution.degenerate([gap + self.epsilon])

    def step_counts(self, start_step: int, num_steps: int = 60) -> ForecastDistribution:
        edges = (start_step + np.arange(num_steps + 1)) * self.interval
        counts = np.histogram(self.events, bins=edges)[0] if len(self.events) else np.zeros(num_steps)
        return ForecastDistribution.degenerate(counts)


@dataclass
class OraclePolicy:
    spec: PolicySpec
    forecaster: OracleForecaster


def perfect_foresight(
    events: Sequence[float],
    clamp: tuple[float, float] = (1.0, math.inf),
    max_pool: int = 1_000_000,
    prewarm: bool = False,
    interval_minutes: float = 1.0,
    epsilon: float = 1e-6,
) -> OraclePolicy:
    """Upper-bound policy: windows cover the true next gap; pools match true demand.

    With ``prewarm=False`` only the idle window is oracle-driven, so a trace
    with one invocation per minute incurs exactly one cold start (the first).
    """
    spec = PolicySpec(
        kind="prewarmPlusAdaptive" if prewarm else "adaptiveWindow",
        window_minutes=clamp[0],
        quantile=0.5,
        safety=1.0,
        clamp=clamp,
        max_pool=max_pool,
        interval_minutes=interval_minutes,
        name="oracle",
    )
    return OraclePolicy(spec, OracleForecaster(events, epsilon, interval_minutes))


def _event_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


class ModelGapForecaster:
    """Next-gap forecasts from a trained model over the observed event history.

    ``history`` holds invocation minutes seen before the replayed segment;
    the simulator's observed times are appended to it. Invocations sharing a
    minute collapse to one event, as in the gap series.
    """

    def __init__(self, params, history=(), start_time=None, num_samples: int = 100,
                 seed: int = 0, category: int = 0, function_id: str = ""):
        from .trace import DEFAULT_START

        self.params = params
        self.history = np.asarray(history, dtype=np.float64)
        self.start_time = start_time or DEFAULT_START
        self.num_samples = num_samples
        self.seed = seed
        self.category = category
        self.function_id = function_id
        self._cache: tuple[float, ForecastDistribution | None] | None = None

    @property
    def required_events(self) -> int:
        cfg = self.params.config
        return cfg.context_length + cfg.max_lag + 1

    def next_gap(self, event_index: int, event_times: np.ndarray) -> ForecastDistribution | None:
        from datetime import timedelta

        from .forecaster import build_input, forecast
        from .trace import GapSeries

        now = float(event_times[-1]) if len(event_times) else None
        if self._cache is not None and self._cache[0] == now:
            return self._cache[1]
        minutes = np.unique(np.floor(np.concatenate([self.history, event_times])))
        gaps = np.diff(minutes)
        cfg = self.params.config
        if len(gaps) < cfg.context_length + cfg.max_lag:
            dist = None
        else:
            gs = GapSeries(self.function_id, gaps, self.start_time + timedelta(minutes=float(minutes[0])))
            inp = build_input(gs, len(gaps), cfg, self.category)
            dist = forecast(self.params, inp, self.num_samples, _event_seed(self.seed, event_index), steps=1)
        self._cache = (now, dist)
        return dist


class ModelCountForecaster:
    """Per-interval count forecasts from a trained model, re-planned per horizon."""

    def __init__(self, params, series, num_samples: int = 100, seed: int = 0, category: int = 0):
        self.params = params
        self.series = series
        self.num_samples = num_samples
        self.seed = seed
        self.category = category

    def step_counts(self, start_step: int) -> ForecastDistribution | None:
        from .forecaster import InsufficientHistory, build_input, forecast

        try:
            inp = build_input(self.series, start_step, self.params.config, self.category)
        except InsufficientHistory:
            return None
        return forecast(self.params, inp, self.num_samples, _event_seed(self.seed, start_step))
