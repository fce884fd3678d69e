"""Autoregressive sampling of forecast trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from scipy import special

from ..tensor import Tensor, no_grad
from . import recurrent, transformer
from .features import ForecastInput, decoder_features, encoder_features
from .transformer import ModelParams


@dataclass
class ForecastDistribution:
    """Sampled trajectories over the horizon.

    ``samples`` is the count-domain view (clamped at 0, rounded); ``raw_samples``
    keeps the de-standardized real draws.
    """

    samples: np.ndarray
    raw_samples: np.ndarray = field(repr=False)
    point_forecast: np.ndarray = field(init=False)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        self.raw_samples = np.atleast_2d(np.asarray(self.raw_samples, dtype=np.float64))
        self.point_forecast = np.median(self.samples, axis=0)

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> ForecastDistribution:
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        return cls(np.round(np.maximum(raw, 0.0)), raw)

    @classmethod
    def degenerate(cls, values, num_samples: int = 1) -> ForecastDistribution:
        """All samples equal to ``values`` (no rounding)."""
        v = np.tile(np.asarray(values, dtype=np.float64).reshape(1, -1), (num_samples, 1))
        return cls(np.maximum(v, 0.0), v)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]

    def quantile(self, q: float, step: int | None = None):
        """Empirical ``q``-quantile at ``step`` (or at every step when omitted)."""
        if step is None:
            return np.quantile(self.samples, q, axis=0)
        return float(np.quantile(self.samples[:, step], q))


def forecast(
    params: ModelParams,
    inp: ForecastInput,
    num_samples: int = 100,
    seed: int = 0,
    steps: int | None = None,
) -> ForecastDistribution:
    """Draw ``num_samples`` autoregressive paths for ``steps`` (default: full horizon).

    Each step samples the emitted Student-t and feeds the draw back as the
    previous value for the next step.
    """
    cfg = params.config
    H = cfg.prediction_length if steps is None else min(steps, cfg.prediction_length)
    rng = np.random.default_rng(seed)
    S = num_samples
    L, C = cfg.max_lag, cfg.context_length
    z = np.tile(inp.standardize(inp.past_values), (S, 1))
    z = np.concatenate([z, np.zeros((S, H))], axis=1)
    cat = np.repeat(inp.static_categorical[:1], S)
    enc = encoder_features(inp, cfg)[None]

    with no_grad():
        if params.kind == "transformer":
            memory = transformer.encode(enc, inp.static_categorical[:1], params)
            decoder = IncrementalDecoder(params, memory.data, S, H)
            for k in range(H):
                dec = decoder_features(z, inp.future_time_features, cfg, k + 1)[:, k]
                loc, scale, dof = decoder.step(dec, cat)
                z[:, L + C + k] = _draw(rng, loc, scale, dof)
        elif params.kind == "recurrent":
            states = recurrent.run(enc, inp.static_categorical[:1], params)
            h = Tensor(np.repeat(states[-1].data, S, axis=0))
            for k in range(H):
                dec = decoder_features(z, inp.future_time_features, cfg, k + 1)[:, k:k + 1]
                x = recurrent.step_inputs(dec, cat, params)
                h = recurrent.gru_cell(x[:, 0, :], h, params.weights)
                loc, scale, dof = transformer.student_t_head(h, params.weights)
                z[:, L + C + k] = _draw(rng, loc.data, scale.data, dof.data)
        else:
            raise ValueError(f"unknown model kind {params.kind!r}")
    raw = inp.destandardize(z[:, L + C:])
    return ForecastDistribution.from_raw(raw)


def _draw(rng: np.random.Generator, loc, scale, dof) -> np.ndarray:
    return loc + scale * rng.standard_t(dof)


def _layer_norm(x, w, name):
    mu = x.mean(axis=-1, keepdims=True)
    c = x - mu
    var = (c * c).mean(axis=-1, keepdims=True)
    return c / np.sqrt(var + transformer.LN_EPS) * w[f"{name}.gain"].data + w[f"{name}.bias"].data


def _gelu(x):
    return x * 0.5 * (1.0 + special.erf(x / np.sqrt(2.0)))


def _lin(x, w, name):
    return x @ w[f"{name}.w"].data + w[f"{name}.b"].data


class IncrementalDecoder:
    """Causal decoder evaluated one position at a time with cached keys/values.

    Produces the same per-position outputs as :func:`transformer.decode_step`
    on the full prefix, in O(1) projections per new position.
    """

    def __init__(self, params: ModelParams, memory: np.ndarray, batch: int, horizon: int):
        cfg = params.config
        self.params = params
        self.w = params.weights
        self.h = cfg.num_heads
        self.dk = cfg.d_model // cfg.num_heads
        self.k = 0
        memory = np.broadcast_to(memory, (batch,) + memory.shape[1:])
        self.pe = transformer.positional_encoding(horizon, cfg.d_model, cfg.context_length)
        self.cross = []
        self.self_k = []
        self.self_v = []
        for i in range(cfg.num_layers_decoder):
            pre = f"dec.{i}.cross"
            self.cross.append((self._heads(memory, pre, "k"), self._heads(memory, pre, "v")))
            self.self_k.append(np.zeros((batch, self.h, horizon, self.dk)))
            self.self_v.append(np.zeros((batch, self.h, horizon, self.dk)))

    def _heads(self, x, prefix, proj):
        B, n, D = x.shape
        y = x @ self.w[f"{prefix}.w{proj}"].data + self.w[f"{prefix}.b{proj}"].data
        return y.reshape(B, n, self.h, self.dk).transpose(0, 2, 1, 3)

    def _attend(self, q, keys, values, prefix):
        B = q.shape[0]
        scores = (q @ np.swapaxes(keys, -1, -2)) * (1.0 / np.sqrt(self.dk))
        scores = scores - scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        ctx = (attn @ values).transpose(0, 2, 1, 3).reshape(B, 1, self.h * self.dk)
        return ctx @ self.w[f"{prefix}.wo"].data + self.w[f"{prefix}.bo"].data

    def step(self, features: np.ndarray, category: np.ndarray):
        """Advance one position; ``features`` is (B, F_in). Returns (loc, scale, dof)."""
        w, k = self.w, self.k
        emb = w["static_emb"].data[np.asarray(category)]
        x = np.concatenate([features, emb], axis=-1)[:, None, :]
        x = _lin(x, w, "input") + self.pe[k]
        for i in range(len(self.cross)):
            pre = f"dec.{i}"
            q = self._heads(x, f"{pre}.self", "q")
            self.self_k[i][:, :, k:k + 1] = self._heads(x, f"{pre}.self", "k")
            self.self_v[i][:, :, k:k + 1] = self._heads(x, f"{pre}.self", "v")
            a = self._attend(q, self.self_k[i][:, :, :k + 1], self.self_v[i][:, :, :k + 1], f"{pre}.self")
            x = _layer_norm(x + a, w, f"{pre}.norm1")
            ck, cv = self.cross[i]
            c = self._attend(self._heads(x, f"{pre}.cross", "q"), ck, cv, f"{pre}.cross")
            x = _layer_norm(x + c, w, f"{pre}.norm2")
            f = _lin(_gelu(_lin(x, w, f"{pre}.ff1")), w, f"{pre}.ff2")
            x = _layer_norm(x + f, w, f"{pre}.norm3")
        raw = _lin(x[:, 0], w, "head")
        self.k += 1
        loc = raw[:, 0]
        scale = np.logaddexp(0.0, raw[:, 1]) + transformer.SIGMA_FLOOR
        dof = np.logaddexp(0.0, raw[:, 2]) + 2.0
        return loc, scale, dof
