"""Student-t likelihood, Adam, and the teacher-forced training loop."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from . import recurrent, transformer
from .config import ModelConfig, TrainConfig
from .features import ForecastInput, make_batch
from .transformer import ModelParams

log = logging.getLogger(__name__)

_HALF_LOG_PI = 0.5 * np.log(np.pi)


class NonFinite(FloatingPointError):
    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


def nll_loss(dist: tuple[Tensor, Tensor, Tensor], target) -> Tensor:
    """Mean Student-t negative log-likelihood of ``target`` under ``(loc, scale, dof)``."""
    loc, scale, dof = dist
    target = T.as_tensor(target)
    if target.shape != loc.shape:
        raise T.ShapeMismatch(f"target {target.shape} vs params {loc.shape}")
    z = (target - loc) / scale
    half = T.scale(dof + 1.0, 0.5)
    nll = (
        T.lgamma(T.scale(dof, 0.5))
        - T.lgamma(half)
        + T.scale(T.log(dof), 0.5)
        + _HALF_LOG_PI
        + T.log(scale)
        + half * T.log(1.0 + z * z / dof)
    )
    out = T.mean(nll)
    if not np.isfinite(out.data):
        raise NonFinite("non-finite negative log-likelihood")
    return out


def student_t_logpdf(x, loc, scale, dof) -> np.ndarray:
    """Plain numpy log-density (no autodiff)."""
    from scipy import special

    z = (np.asarray(x) - loc) / scale
    return (
        special.gammaln((dof + 1) / 2)
        - special.gammaln(dof / 2)
        - 0.5 * np.log(dof * np.pi)
        - np.log(scale)
        - (dof + 1) / 2 * np.log1p(z * z / dof)
    )


_MODELS = {"transformer": transformer, "recurrent": recurrent}


def init_params(config: ModelConfig, kind: str = "transformer", seed: int = 0) -> ModelParams:
    return _MODELS[kind].init_params(config, seed)


def model_forward(batch, params: ModelParams, rng=None):
    return _MODELS[params.kind].forward(batch, params, rng)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, clip: float | None = None) -> None:
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        if clip is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > clip:
                grads = [g * (clip / norm) for g in grads]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(
    windows: Sequence[ForecastInput],
    config: ModelConfig,
    train_config: TrainConfig,
    kind: str = "transformer",
    init: ModelParams | None = None,
) -> tuple[ModelParams, list[float]]:
    """Fit by minibatch Adam on the teacher-forced NLL.

    Returns the parameters and the mean loss of each epoch. Runs are
    deterministic for a given ``train_config.seed``.
    """
    if not windows:
        raise ValueError("need at least one training window")
    params = init.copy() if init is not None else init_params(config, kind, train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    drop_rng = rng if config.dropout > 0 else None
    opt = Adam(params.tensors(), train_config.learning_rate, train_config.beta1, train_config.beta2, train_config.adam_eps)
    batches_per_epoch = int(np.ceil(len(windows) / train_config.batch_size))
    history: list[float] = []
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(windows))
        total, count = 0.0, 0
        for b in range(batches_per_epoch):
            idx = order[b * train_config.batch_size:(b + 1) * train_config.batch_size]
            batch = make_batch([windows[i] for i in idx], config)
            opt.zero_grad()
            try:
                loss = nll_loss(model_forward(batch, params, drop_rng), batch.target)
            except NonFinite as exc:
                raise NonFinite(f"non-finite loss at epoch {epoch}, batch {b}", epoch, b) from exc
            loss.backward()
            opt.step(train_config.grad_clip)
            if not params.all_finite():
                raise NonFinite(f"non-finite parameters after epoch {epoch}, batch {b}", epoch, b)
            total += loss.item() * len(idx)
            count += len(idx)
        history.append(total / count)
        log.debug("epoch %d loss %.5f", epoch, history[-1])
    return params, history
