"""Probabilistic invocation forecasting: Transformer, GRU baseline, seasonal naive."""

from .baselines import seasonal_naive
from .config import DEFAULT_LAGS, ModelConfig, TrainConfig
from .features import (
    ForecastInput,
    InsufficientHistory,
    build_input,
    make_batch,
    make_time_features,
    training_inputs,
)
from .sampling import ForecastDistribution, forecast
from .training import NonFinite, init_params, model_forward, nll_loss, train
from .transformer import ModelParams, decode_step, encode, multi_head_attention

__all__ = [
    "DEFAULT_LAGS",
    "ForecastDistribution",
    "ForecastInput",
    "InsufficientHistory",
    "ModelConfig",
    "ModelParams",
    "NonFinite",
    "TrainConfig",
    "build_input",
    "decode_step",
    "encode",
    "forecast",
    "init_params",
    "make_batch",
    "make_time_features",
    "model_forward",
    "multi_head_attention",
    "nll_loss",
    "seasonal_naive",
    "train",
    "training_inputs",
]
