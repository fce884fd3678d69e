"""Single-layer GRU baseline sharing the Transformer's inputs and Student-t head."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from .config import ModelConfig
from .transformer import ModelParams, _glorot, student_t_head


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    h, n_in = config.hidden_size, config.input_size
    w: dict[str, np.ndarray] = {
        "static_emb": rng.normal(0.0, 1.0, size=(config.cardinality, config.embedding_dimension)),
    }
    for gate in ("z", "r", "n"):
        w[f"gru.w{gate}"] = _glorot(rng, n_in, h)
        w[f"gru.u{gate}"] = _glorot(rng, h, h)
        w[f"gru.b{gate}"] = np.zeros(h)
    w["head.w"] = _glorot(rng, h, 3) * 0.1
    w["head.b"] = np.zeros(3)
    return ModelParams(config, {k: Tensor(v, requires_grad=True) for k, v in w.items()}, kind="recurrent")


def gru_cell(x: Tensor, h: Tensor, w: dict) -> Tensor:
    """``h' = (1 - z) * n + z * h`` with reset gate applied to ``U_n h``."""
    z = T.sigmoid(x @ w["gru.wz"] + h @ w["gru.uz"] + w["gru.bz"])
    r = T.sigmoid(x @ w["gru.wr"] + h @ w["gru.ur"] + w["gru.br"])
    n = T.tanh(x @ w["gru.wn"] + r * (h @ w["gru.un"]) + w["gru.bn"])
    return (1.0 - z) * n + z * h


def step_inputs(features: np.ndarray, category: np.ndarray, params: ModelParams) -> Tensor:
    B, n, _ = features.shape
    emb = T.embedding_lookup(params["static_emb"], np.repeat(np.asarray(category)[:, None], n, axis=1))
    return T.concat([Tensor(features), emb], axis=-1)


def run(features: np.ndarray, category: np.ndarray, params: ModelParams, h0: Tensor | None = None):
    """Unroll over all steps; returns the list of hidden states (each (B, hidden))."""
    B, n, _ = features.shape
    x = step_inputs(features, category, params)
    h = h0 if h0 is not None else Tensor(np.zeros((B, params.config.hidden_size)))
    states = []
    for t in range(n):
        h = gru_cell(x[:, t, :], h, params.weights)
        states.append(h)
    return states


def forward(batch, params: ModelParams, rng=None):
    """Teacher-forced Student-t parameters over the horizon (context unrolled first)."""
    feats = np.concatenate([batch.enc, batch.dec], axis=1)
    states = run(feats, batch.category, params)
    H = batch.dec.shape[1]
    hs = T.stack(states[-H:], axis=1)
    return student_t_head(hs, params.weights)
