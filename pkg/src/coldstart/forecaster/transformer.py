"""Encoder-decoder Transformer emitting Student-t parameters per horizon step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from .config import ModelConfig

SIGMA_FLOOR = 1e-4
LN_EPS = 1e-5


@dataclass
class ModelParams:
    config: ModelConfig
    weights: dict[str, Tensor]
    kind: str = "transformer"

    def __getitem__(self, name: str) -> Tensor:
        return self.weights[name]

    def sub(self, prefix: str) -> dict[str, Tensor]:
        n = len(prefix)
        return {k[n:]: v for k, v in self.weights.items() if k.startswith(prefix)}

    def tensors(self) -> list[Tensor]:
        return [self.weights[k] for k in sorted(self.weights)]

    def copy(self) -> ModelParams:
        return ModelParams(self.config, {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.weights.items()}, self.kind)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v.data)) for v in self.weights.values())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _linear(w: dict, name: str, rng, fan_in: int, fan_out: int) -> None:
    w[f"{name}.w"] = _glorot(rng, fan_in, fan_out)
    w[f"{name}.b"] = np.zeros(fan_out)


def _attention_block(w: dict, name: str, rng, d: int) -> None:
    for proj in ("q", "k", "v", "o"):
        w[f"{name}.w{proj}"] = _glorot(rng, d, d)
        w[f"{name}.b{proj}"] = np.zeros(d)


def _norm(w: dict, name: str, d: int) -> None:
    w[f"{name}.gain"] = np.ones(d)
    w[f"{name}.bias"] = np.zeros(d)


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    d, ff = config.d_model, config.feedforward_dim
    w: dict[str, np.ndarray] = {}
    w["static_emb"] = rng.normal(0.0, 1.0, size=(config.cardinality, config.embedding_dimension))
    _linear(w, "input", rng, config.input_size, d)
    for i in range(config.num_layers_encoder):
        p = f"enc.{i}"
        _attention_block(w, f"{p}.self", rng, d)
        _norm(w, f"{p}.norm1", d)
        _linear(w, f"{p}.ff1", rng, d, ff)
        _linear(w, f"{p}.ff2", rng, ff, d)
        _norm(w, f"{p}.norm2", d)
    for i in range(config.num_layers_decoder):
        p = f"dec.{i}"
        _attention_block(w, f"{p}.self", rng, d)
        _norm(w, f"{p}.norm1", d)
        _attention_block(w, f"{p}.cross", rng, d)
        _norm(w, f"{p}.norm2", d)
        _linear(w, f"{p}.ff1", rng, d, ff)
        _linear(w, f"{p}.ff2", rng, ff, d)
        _norm(w, f"{p}.norm3", d)
    _linear(w, "head", rng, d, 3)
    w["head.w"] *= 0.1
    return ModelParams(config, {k: Tensor(v, requires_grad=True) for k, v in w.items()})


def positional_encoding(n: int, d: int, offset: int = 0) -> np.ndarray:
    """Fixed sinusoidal encodings for positions ``offset .. offset + n - 1``."""
    pos = (offset + np.arange(n))[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def causal_mask(t: int, s: int | None = None) -> np.ndarray:
    """Additive mask: 0 on and below the diagonal, -inf above."""
    s = t if s is None else s
    return np.where(np.arange(s)[None, :] > np.arange(t)[:, None], -np.inf, 0.0)


def linear(x: Tensor, w: dict, name: str) -> Tensor:
    return x @ w[f"{name}.w"] + w[f"{name}.b"]


def multi_head_attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    w: dict,
    num_heads: int,
    mask: np.ndarray | None = None,
    attn_log: list | None = None,
) -> Tensor:
    """Scaled dot-product attention over ``num_heads`` heads.

    ``query`` is (B, T, D); ``key``/``value`` are (B, S, D); ``w`` holds the
    ``wq/bq/wk/bk/wv/bv/wo/bo`` projections. ``mask`` is an additive (T, S)
    array with ``-inf`` at blocked positions.
    """
    B, Tq, D = query.shape
    S = key.shape[1]
    if D % num_heads or key.shape[2] != D or value.shape[:2] != key.shape[:2]:
        raise T.ShapeMismatch(f"attention shapes {query.shape}, {key.shape}, {value.shape}")
    dk = D // num_heads

    def heads(x, proj, n):
        return (x @ w[f"w{proj}"] + w[f"b{proj}"]).reshape(B, n, num_heads, dk).transpose(0, 2, 1, 3)

    q = heads(query, "q", Tq)
    k = heads(key, "k", S)
    v = heads(value, "v", S)
    scores = T.scale(q @ T.swap_last(k), 1.0 / np.sqrt(dk))
    if mask is not None:
        scores = scores + Tensor(mask)
    attn = T.softmax(scores, axis=-1)
    if attn_log is not None:
        attn_log.append(attn.data)
    ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, Tq, D)
    return ctx @ w["wo"] + w["bo"]


def _sub(params: ModelParams, prefix: str) -> dict:
    return params.sub(prefix + ".")


def embed_inputs(features: np.ndarray, category: np.ndarray, params: ModelParams, offset: int) -> Tensor:
    """Project per-step covariates plus the broadcast static embedding to ``d_model``."""
    B, n, _ = features.shape
    emb = T.embedding_lookup(params["static_emb"], np.repeat(np.asarray(category)[:, None], n, axis=1))
    x = T.concat([Tensor(features), emb], axis=-1)
    x = linear(x, params.weights, "input")
    return x + Tensor(positional_encoding(n, params.config.d_model, offset))


def _ffn(x: Tensor, w: dict, prefix: str) -> Tensor:
    return linear(T.gelu(linear(x, w, f"{prefix}.ff1")), w, f"{prefix}.ff2")


def _ln(x: Tensor, w: dict, name: str) -> Tensor:
    return T.layer_norm(x, w[f"{name}.gain"], w[f"{name}.bias"], LN_EPS)


def _drop(x: Tensor, p: float, rng) -> Tensor:
    return T.dropout(x, p, rng)


def encode(
    enc_features: np.ndarray,
    category: np.ndarray,
    params: ModelParams,
    rng: np.random.Generator | None = None,
    attn_log: list | None = None,
) -> Tensor:
    """Encoder memory of shape (B, C, d_model)."""
    cfg = params.config
    w = params.weights
    p = cfg.dropout if rng is not None else 0.0
    x = embed_inputs(enc_features, category, params, offset=0)
    for i in range(cfg.num_layers_encoder):
        pre = f"enc.{i}"
        a = multi_head_attention(x, x, x, _sub(params, f"{pre}.self"), cfg.num_heads, attn_log=attn_log)
        x = _ln(x + _drop(a, p, rng), w, f"{pre}.norm1")
        x = _ln(x + _drop(_ffn(x, w, pre), p, rng), w, f"{pre}.norm2")
    return x


def decode_step(
    memory: Tensor,
    dec_features: np.ndarray,
    category: np.ndarray,
    params: ModelParams,
    causal: bool = True,
    rng: np.random.Generator | None = None,
    attn_log: list | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Student-t ``(loc, scale, dof)`` for each decoder position, each (B, H)."""
    cfg = params.config
    w = params.weights
    p = cfg.dropout if rng is not None else 0.0
    n = dec_features.shape[1]
    x = embed_inputs(dec_features, category, params, offset=cfg.context_length)
    mask = causal_mask(n) if causal else None
    for i in range(cfg.num_layers_decoder):
        pre = f"dec.{i}"
        a = multi_head_attention(x, x, x, _sub(params, f"{pre}.self"), cfg.num_heads, mask, attn_log)
        x = _ln(x + _drop(a, p, rng), w, f"{pre}.norm1")
        c = multi_head_attention(x, memory, memory, _sub(params, f"{pre}.cross"), cfg.num_heads, None, attn_log)
        x = _ln(x + _drop(c, p, rng), w, f"{pre}.norm2")
        x = _ln(x + _drop(_ffn(x, w, pre), p, rng), w, f"{pre}.norm3")
    return student_t_head(x, w)


def student_t_head(x: Tensor, w: dict) -> tuple[Tensor, Tensor, Tensor]:
    raw = linear(x, w, "head")
    loc = raw[..., 0]
    scale = T.softplus(raw[..., 1]) + SIGMA_FLOOR
    dof = T.softplus(raw[..., 2]) + 2.0
    return loc, scale, dof


def forward(batch, params: ModelParams, rng: np.random.Generator | None = None):
    """Teacher-forced distribution parameters for a training batch."""
    memory = encode(batch.enc, batch.category, params, rng)
    return decode_step(memory, batch.dec, batch.category, params, rng=rng)
