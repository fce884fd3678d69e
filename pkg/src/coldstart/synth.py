"""Synthetic invocation traces for tests and offline experiments.

Generative processes:

* periodic: ``count`` invocations every ``period`` steps, starting at ``offset``.
* sporadic: integer gaps drawn uniformly from ``[gap_min, gap_max]``, one
  invocation per event.
* bursty: burst starts form a Bernoulli approximation of a Poisson process
  with ``burst_rate`` per step; each burst lasts a geometric number of steps
  with Poisson(``burst_intensity``) invocations per step (at least one).
* daily: noiseless smooth daily cycle at hourly granularity.
"""

from __future__ import annotations

import hashlib
from datetime import datetime
from typing import Sequence

import numpy as np

from .trace import DEFAULT_START, MINUTES_PER_DAY, TRIGGERS, InvocationSeries, RawTraceRow

PATTERNS = ("periodic", "sporadic", "bursty")


def _hash(*parts) -> str:
    return hashlib.sha256("/".join(str(p) for p in parts).encode()).hexdigest()


def periodic_counts(length: int, period: int, count: int = 1, offset: int = 0) -> np.ndarray:
    if period < 1 or count < 1:
        raise ValueError("period and count must be >= 1")
    out = np.zeros(length, dtype=np.int64)
    out[offset::period] = count
    return out


def sporadic_events(num_events: int, gap_min: int = 11, gap_max: int = 20, seed: int = 0, first: int = 0) -> np.ndarray:
    """Event minutes whose gaps are i.i.d. uniform integers in ``[gap_min, gap_max]``."""
    if not 1 <= gap_min <= gap_max:
        raise ValueError("need 1 <= gap_min <= gap_max")
    rng = np.random.default_rng(seed)
    gaps = rng.integers(gap_min, gap_max + 1, size=max(num_events - 1, 0))
    return first + np.concatenate([[0], np.cumsum(gaps)]).astype(np.int64)


def sporadic_counts(length: int, gap_min: int = 11, gap_max: int = 20, seed: int = 0) -> np.ndarray:
    need = length // gap_min + 2
    ev = sporadic_events(need, gap_min, gap_max, seed)
    out = np.zeros(length, dtype=np.int64)
    out[ev[ev < length]] = 1
    return out


def bursty_counts(
    length: int,
    seed: int = 0,
    burst_rate: float = 0.01,
    mean_burst_length: float = 5.0,
    burst_intensity: float = 3.0,
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = np.zeros(length, dtype=np.int64)
    starts = np.flatnonzero(rng.random(length) < burst_rate)
    for s in starts:
        dur = rng.geometric(1.0 / mean_burst_length)
        stop = min(length, s + dur)
        out[s:stop] += np.maximum(1, rng.poisson(burst_intensity, size=stop - s))
    return out


def daily_hourly_values(days: int, base: float = 20.0, amp1: float = 12.0, amp2: float = 6.0) -> np.ndarray:
    """Noiseless daily cycle: two harmonics of a 24-hour period, rounded."""
    h = np.arange(days * 24)
    v = base + amp1 * np.sin(2 * np.pi * h / 24) + amp2 * np.cos(4 * np.pi * h / 24)
    return np.round(np.maximum(v, 0)).astype(np.int64)


def generate(
    pattern: str,
    length: int,
    seed: int = 0,
    granularity: str = "minute",
    start_time: datetime = DEFAULT_START,
    period: int = 15,
    gap_min: int = 11,
    gap_max: int = 20,
    function_id: str | None = None,
) -> InvocationSeries:
    if pattern == "periodic":
        values = periodic_counts(length, period)
    elif pattern == "sporadic":
        values = sporadic_counts(length, gap_min, gap_max, seed)
    elif pattern == "bursty":
        values = bursty_counts(length, seed)
    else:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    fid = function_id or f"synth-{pattern}-{seed}"
    return InvocationSeries(fid, granularity, start_time, values)


def events_from_counts(values: Sequence[int]) -> np.ndarray:
    """One float minute per invocation; a count of k at minute m repeats m k times."""
    values = np.asarray(values, dtype=np.int64)
    return np.repeat(np.arange(len(values)), values).astype(np.float64)


def day_tables(
    num_days: int,
    num_functions: int = 6,
    seed: int = 0,
    triggers: Sequence[str] = TRIGGERS,
) -> list[list[RawTraceRow]]:
    """Day-file rows for ``num_days`` days over a mix of patterns and triggers.

    Function ``i`` gets trigger ``triggers[i % len(triggers)]`` and pattern
    ``PATTERNS[i % 3]``; every function appears on every day.
    """
    length = num_days * MINUTES_PER_DAY
    funcs = []
    for i in range(num_functions):
        pattern = PATTERNS[i % len(PATTERNS)]
        sub = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        if pattern == "periodic":
            values = periodic_counts(length, 5 + 5 * (i % 4), offset=i % 5)
        elif pattern == "sporadic":
            values = sporadic_counts(length, 11, 20, sub)
        else:
            values = bursty_counts(length, sub)
        ids = (_hash(seed, i, "owner"), _hash(seed, i, "app"), _hash(seed, i, "fn"))
        funcs.append((ids, triggers[i % len(triggers)], values))
    days = []
    for d in range(num_days):
        rows = []
        for (o, a, f), trig, values in funcs:
            counts = values[d * MINUTES_PER_DAY:(d + 1) * MINUTES_PER_DAY]
            rows.append(RawTraceRow(o, a, f, trig, counts.copy()))
        days.append(rows)
    return days
