"""Deterministic replay of one function's invocations against container lifecycles.

Time is measured in minutes. Containers are created cold on demand (one per
concurrent invocation), stay busy for the execution time, then sit idle until
their keep-alive window expires. At equal timestamps events are processed in
the order: prewarm, completion, arrival, eviction; so an arrival landing
exactly on an expiry instant still finds the container warm.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .forecaster.sampling import ForecastDistribution
from .policy import PolicySpec, adaptive_window, prewarm_schedule

PREWARM, COMPLETE, ARRIVAL, EVICT = 0, 1, 2, 3
MS_PER_MINUTE = 60_000.0
REPLAY_INVOCATIONS = 100


class SimulationError(ValueError):
    pass


class UnsortedEvents(SimulationError):
    pass


class MissingForecaster(SimulationError):
    pass


class ZeroBaseline(SimulationError):
    pass


class ForecasterHook(Protocol):
    def next_gap(self, event_index: int, event_times: np.ndarray) -> ForecastDistribution | None: ...

    def step_counts(self, start_step: int) -> ForecastDistribution | None: ...


@dataclass(frozen=True)
class LatencyModel:
    cold_start_ms: float = 500.0
    warm_start_ms: float = 5.0
    exec_ms: float = 100.0

    def __post_init__(self):
        if min(self.cold_start_ms, self.warm_start_ms, self.exec_ms) < 0:
            raise ValueError("latencies must be non-negative")
        if self.cold_start_ms < self.warm_start_ms:
            raise ValueError("cold start latency must be >= warm start latency")

    @property
    def exec_minutes(self) -> float:
        return self.exec_ms / MS_PER_MINUTE


@dataclass
class ContainerState:
    id: int
    state: str  # prewarming | warm_idle | busy | evicted
    created: float
    idle_since: float = math.nan
    current_window: float = math.nan
    token: int = 0
    evicted_at: float = math.nan


@dataclass
class SimulationResult:
    invocations: int
    cold_starts: int
    latencies: np.ndarray = field(repr=False)
    container_minutes: float
    window_log: list[tuple[float, float]] = field(default_factory=list, repr=False)
    cold_flags: np.ndarray = field(default=None, repr=False)
    evictions: list[tuple[int, float]] = field(default_factory=list, repr=False)
    prewarmed: int = 0

    @property
    def empty(self) -> bool:
        return self.invocations == 0

    @property
    def warm_starts(self) -> int:
        return self.invocations - self.cold_starts

    @property
    def cold_starts_per_100(self) -> float:
        return 100.0 * self.cold_starts / self.invocations if self.invocations else 0.0

    @property
    def short_trace(self) -> bool:
        return self.invocations < REPLAY_INVOCATIONS

    def window_range(self) -> tuple[float, float] | None:
        if not self.window_log:
            return None
        w = [v for _, v in self.window_log]
        return min(w), max(w)

    def summary(self, function_id: str, policy: str) -> dict:
        lat = self.latencies
        return {
            "functionId": function_id,
            "policy": policy,
            "invocations": self.invocations,
            "coldStarts": self.cold_starts,
            "coldStartsPer100": self.cold_starts_per_100,
            "meanLatencyMs": float(lat.mean()) if len(lat) else None,
            "p99LatencyMs": float(np.percentile(lat, 99)) if len(lat) else None,
            "containerMinutes": self.container_minutes,
            "windowLog": [[t, w] for t, w in self.window_log],
        }


def simulate(
    events: Sequence[float],
    policy: PolicySpec,
    latency: LatencyModel = LatencyModel(),
    forecaster: ForecasterHook | None = None,
) -> SimulationResult:
    """Replay sorted invocation times (minutes) under ``policy``.

    Adaptive policies ask ``forecaster.next_gap`` after each arrival and give
    the resulting window to the container serving it; prewarm policies ask
    ``forecaster.step_counts`` whenever the current plan runs out.
    """
    times = np.asarray(events, dtype=np.float64)
    if len(times) > 1 and np.any(np.diff(times) < 0):
        raise UnsortedEvents("invocation times must be non-decreasing")
    if (policy.adaptive or policy.prewarms) and forecaster is None:
        raise MissingForecaster(f"policy {policy.kind} needs a forecaster hook")

    exec_min = latency.exec_minutes
    n = len(times)
    heap: list[tuple] = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(heap, (t, kind, seq, payload))
        seq += 1

    for i, t in enumerate(times):
        push(float(t), ARRIVAL, i)

    containers: list[ContainerState] = []
    idle: set[int] = set()
    pending_window: dict[int, float] = {}
    current_window = policy.window_minutes
    latencies = np.zeros(n)
    cold = np.zeros(n, dtype=bool)
    window_log: list[tuple[float, float]] = []
    evictions: list[tuple[int, float]] = []
    prewarmed = 0

    plan: np.ndarray = np.zeros(0, dtype=np.int64)
    plan_start = 0
    if policy.prewarms and n:
        first_step = int(math.floor(times[0] / policy.interval_minutes))
        push(first_step * policy.interval_minutes, PREWARM, first_step)

    def go_idle(c: ContainerState, t: float, window: float) -> None:
        c.state = "warm_idle"
        c.idle_since = t
        c.current_window = window
        c.token += 1
        idle.add(c.id)
        if math.isfinite(window):
            push(t + window, EVICT, (c.id, c.token))

    end_time = float(times[-1]) if n else 0.0
    while heap:
        t, kind, _, payload = heapq.heappop(heap)
        if kind == ARRIVAL:
            i = payload
            if idle:
                cid = min(idle)
                idle.discard(cid)
                c = containers[cid]
                latencies[i] = latency.warm_start_ms + latency.exec_ms
            else:
                cid = len(containers)
                c = ContainerState(cid, "busy", t)
                containers.append(c)
                cold[i] = True
                latencies[i] = latency.cold_start_ms + latency.exec_ms
            c.state = "busy"
            c.token += 1
            if policy.adaptive:
                dist = forecaster.next_gap(i, times[: i + 1])
                if dist is not None:
                    current_window = adaptive_window(dist, policy.quantile, policy.safety, policy.clamp, i).window_minutes
            window_log.append((t, current_window))
            pending_window[cid] = current_window
            push(t + exec_min, COMPLETE, cid)
        elif kind == COMPLETE:
            cid = payload
            go_idle(containers[cid], t, pending_window.pop(cid))
            end_time = max(end_time, t)
        elif kind == EVICT:
            cid, token = payload
            c = containers[cid]
            if c.state == "warm_idle" and c.token == token:
                c.state = "evicted"
                c.evicted_at = t
                idle.discard(cid)
                evictions.append((cid, t))
                end_time = max(end_time, t)
        elif kind == PREWARM:
            step = payload
            if step - plan_start >= len(plan):
                dist = forecaster.step_counts(step)
                plan = np.zeros(1, dtype=np.int64) if dist is None else prewarm_schedule(
                    dist, policy.quantile, policy.max_pool, step, policy.interval_minutes
                ).pool_sizes
                plan_start = step
            target = int(plan[step - plan_start]) if step - plan_start < len(plan) else 0
            for _ in range(max(0, target - len(idle))):
                c = ContainerState(len(containers), "prewarming", t)
                containers.append(c)
                prewarmed += 1
                go_idle(c, t, current_window)
            nxt = (step + 1) * policy.interval_minutes
            if nxt <= times[-1]:
                push(nxt, PREWARM, step + 1)

    total = 0.0
    for c in containers:
        stop = c.evicted_at if c.state == "evicted" else end_time
        total += max(0.0, stop - c.created)
    return SimulationResult(
        invocations=n,
        cold_starts=int(cold.sum()),
        latencies=latencies,
        container_minutes=total,
        window_log=window_log,
        cold_flags=cold,
        evictions=evictions,
        prewarmed=prewarmed,
    )


def compare(
    events: Sequence[float],
    policies: Sequence[PolicySpec],
    latency: LatencyModel = LatencyModel(),
    forecasters: Sequence[ForecasterHook | None] | None = None,
) -> list[tuple[PolicySpec, SimulationResult]]:
    """Run every policy on the identical event sequence."""
    if len(policies) < 2:
        raise ValueError("compare needs at least two policies")
    forecasters = list(forecasters) if forecasters is not None else [None] * len(policies)
    if len(forecasters) != len(policies):
        raise ValueError("one forecaster slot per policy")
    events = np.asarray(events, dtype=np.float64)
    return [(p, simulate(events, p, latency, f)) for p, f in zip(policies, forecasters)]


def cold_start_reduction(baseline: SimulationResult, candidate: SimulationResult) -> float:
    """Percentage fewer cold starts in ``candidate`` relative to ``baseline``."""
    if baseline.cold_starts <= 0:
        raise ZeroBaseline("baseline has no cold starts")
    return 100.0 * (baseline.cold_starts - candidate.cold_starts) / baseline.cold_starts


def format_reduction(pct: float) -> str:
    return f"{int(math.floor(pct + 0.5))}%"


def first_invocations(events: Sequence[float], n: int = REPLAY_INVOCATIONS) -> np.ndarray:
    return np.asarray(events, dtype=np.float64)[:n]


def summary_row(function_id: str, platform: str, result: SimulationResult) -> dict:
    rng = result.window_range()
    return {
        "function": function_id,
        "platform": platform,
        "icw_min": None if rng is None else rng[0],
        "icw_max": None if rng is None else rng[1],
        "cs_per_100": result.cold_starts_per_100,
    }
