"""Time covariates, lag assembly, and standardized model inputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

from ..trace import GapSeries, InvocationSeries, window_origins
from .config import ModelConfig

NUM_TIME_FEATURES = 5
STD_FLOOR = 1e-3


class InsufficientHistory(ValueError):
    pass


def make_time_features(
    timestamps: Sequence[datetime],
    granularity: str,
    series_length: int | None = None,
    first_index: int = 0,
) -> np.ndarray:
    """Calendar covariates scaled to [-0.5, 0.5].

    Columns: minute-of-hour (0 at hourly granularity), hour-of-day,
    day-of-week (Monday = -0.5), day-of-month, and an age feature
    ``log1p(index) / log1p(series_length)``. ``first_index`` is the position of
    ``timestamps[0]`` in the full series.
    """
    n = len(timestamps)
    length = max(series_length or 0, first_index + n, 1)
    out = np.empty((n, NUM_TIME_FEATURES))
    for i, t in enumerate(timestamps):
        out[i, 0] = 0.0 if granularity == "hour" else t.minute / 59.0 - 0.5
        out[i, 1] = t.hour / 23.0 - 0.5
        out[i, 2] = t.weekday() / 6.0 - 0.5
        out[i, 3] = (t.day - 1) / 30.0 - 0.5
    idx = first_index + np.arange(n)
    out[:, 4] = np.log1p(idx) / np.log1p(length) - 0.5
    return out


@dataclass
class ForecastInput:
    """One forecast origin: raw history, covariates, and standardization stats.

    ``past_values`` covers ``context_length + max_lag`` steps ending just
    before ``t0``; ``future_values`` holds the raw targets when they exist.
    """

    past_values: np.ndarray
    past_time_features: np.ndarray
    static_categorical: np.ndarray
    future_time_features: np.ndarray
    scale_stats: tuple[float, float]
    t0: int = 0
    future_values: np.ndarray | None = field(default=None, repr=False)

    def standardize(self, x) -> np.ndarray:
        mean, std = self.scale_stats
        return (np.asarray(x, dtype=np.float64) - mean) / std

    def destandardize(self, z) -> np.ndarray:
        mean, std = self.scale_stats
        return np.asarray(z) * std + mean


def _series_values_and_times(s, t_hi: int):
    """Values plus timestamps for indices ``[0, t_hi)`` (extrapolated past the end)."""
    if isinstance(s, InvocationSeries):
        return s.values.astype(np.float64), s.timestamps(t_hi), s.granularity
    if isinstance(s, GapSeries):
        times = s.event_times()[:-1]  # gap i opens at event i
        if t_hi > len(times):
            step = timedelta(minutes=max(1, int(round(float(np.mean(s.gaps))))))
            last = s.event_times()[-1]
            times = times + [last + k * step for k in range(t_hi - len(times))]
        return s.gaps.astype(np.float64), times[:t_hi], "event"
    raise TypeError(f"unsupported series type {type(s).__name__}")


def build_input(s, t0: int, config: ModelConfig, category: int = 0) -> ForecastInput:
    """Assemble the encoder/decoder inputs for forecasting from origin ``t0``.

    ``s`` is an :class:`InvocationSeries` or a :class:`GapSeries`. ``t0`` may equal
    the series length (pure inference, no targets).
    """
    C, H = config.context_length, config.prediction_length
    history = C + config.max_lag
    if t0 < history:
        raise InsufficientHistory(f"t0={t0} but {history} steps of history are required")
    values, times, gran = _series_values_and_times(s, t0 + H)
    if t0 > len(values):
        raise InsufficientHistory(f"t0={t0} is past the end of a length-{len(values)} series")
    past = values[t0 - history:t0]
    context = past[-C:]
    mean = float(context.mean())
    std = max(float(context.std()), STD_FLOOR)
    feats = make_time_features(times[t0 - history:t0 + H], gran, len(values), first_index=t0 - history)
    future = values[t0:t0 + H] if t0 + H <= len(values) else None
    if not 0 <= category < config.cardinality:
        raise ValueError(f"category {category} outside cardinality {config.cardinality}")
    return ForecastInput(
        past_values=past,
        past_time_features=feats[:history],
        static_categorical=np.array([category], dtype=np.int64),
        future_time_features=feats[history:],
        scale_stats=(mean, std),
        t0=t0,
        future_values=future,
    )


def lag_matrix(z: np.ndarray, positions: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """``out[..., j, k] = z[..., positions[j] - lags[k]]``."""
    idx = positions[:, None] - np.asarray(lags)[None, :]
    return z[..., idx]


def encoder_features(inp: ForecastInput, config: ModelConfig) -> np.ndarray:
    """Per-step encoder covariates: lagged standardized values then time features."""
    L, C = config.max_lag, config.context_length
    z = inp.standardize(inp.past_values)
    lags = lag_matrix(z, L + np.arange(C), config.lags_sequence)
    return np.concatenate([lags, inp.past_time_features[L:]], axis=1)


def decoder_features(z_full: np.ndarray, future_time_features: np.ndarray, config: ModelConfig, steps: int) -> np.ndarray:
    """Decoder covariates for the first ``steps`` horizon positions.

    ``z_full`` is the standardized sequence ``past ++ future`` (leading axes
    allowed); only entries strictly before each position are read.
    """
    L, C = config.max_lag, config.context_length
    lags = lag_matrix(z_full, L + C + np.arange(steps), config.lags_sequence)
    tf = future_time_features[:steps]
    tf = np.broadcast_to(tf, lags.shape[:-1] + (tf.shape[-1],))
    return np.concatenate([lags, tf], axis=-1)


@dataclass
class Batch:
    enc: np.ndarray  # (B, C, F_in)
    dec: np.ndarray  # (B, H, F_in)
    category: np.ndarray  # (B,)
    target: np.ndarray  # (B, H) standardized


def make_batch(inputs: Sequence[ForecastInput], config: ModelConfig) -> Batch:
    enc, dec, cat, tgt = [], [], [], []
    for inp in inputs:
        if inp.future_values is None:
            raise ValueError("training inputs need future values")
        z_full = inp.standardize(np.concatenate([inp.past_values, inp.future_values]))
        enc.append(encoder_features(inp, config))
        dec.append(decoder_features(z_full, inp.future_time_features, config, config.prediction_length))
        cat.append(inp.static_categorical[0])
        tgt.append(z_full[-config.prediction_length:])
    return Batch(np.stack(enc), np.stack(dec), np.array(cat, dtype=np.int64), np.stack(tgt))


def training_inputs(s, config: ModelConfig, stride: int = 1, category: int = 0, end: int | None = None) -> list[ForecastInput]:
    """All training windows of ``s`` whose targets end at or before ``end``."""
    n = len(s) if end is None else end
    origins = window_origins(n, config.context_length, config.prediction_length, stride, history=config.max_lag)
    return [build_input(s, t0, config, category) for t0 in origins]
