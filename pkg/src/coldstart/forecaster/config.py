from __future__ import annotations

from dataclasses import asdict, dataclass

DEFAULT_LAGS = {
    "minute": (1, 2, 3, 4, 5, 10, 30, 60, 1440),
    "hour": (1, 2, 3, 24, 48, 168),
    "event": (1, 2, 3, 4, 5, 6, 7),
}


@dataclass
class ModelConfig:
    """Architecture hyperparameters shared by the Transformer and the recurrent baseline."""

    context_length: int = 200
    prediction_length: int = 100
    num_layers_encoder: int = 4
    num_layers_decoder: int = 4
    d_model: int = 32
    num_heads: int = 4
    embedding_dimension: int = 2
    cardinality: int = 1
    lags_sequence: tuple[int, ...] = DEFAULT_LAGS["minute"]
    feedforward_dim: int | None = None
    dropout: float = 0.1
    hidden_size: int | None = None  # recurrent baseline only

    def __post_init__(self):
        self.lags_sequence = tuple(int(v) for v in self.lags_sequence)
        if self.feedforward_dim is None:
            self.feedforward_dim = 4 * self.d_model
        if self.hidden_size is None:
            self.hidden_size = self.d_model
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by num_heads={self.num_heads}")
        lags = self.lags_sequence
        if not lags or lags[0] < 1 or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValueError("lags_sequence must be strictly increasing positive integers")
        if self.cardinality < 1:
            raise ValueError("cardinality must be >= 1")

    @property
    def max_lag(self) -> int:
        return self.lags_sequence[-1]

    @property
    def input_size(self) -> int:
        from .features import NUM_TIME_FEATURES

        return len(self.lags_sequence) + NUM_TIME_FEATURES + self.embedding_dimension

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lags_sequence"] = list(self.lags_sequence)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**d)

    @classmethod
    def for_granularity(cls, granularity: str, **kw) -> ModelConfig:
        kw.setdefault("lags_sequence", DEFAULT_LAGS[granularity])
        return cls(**kw)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    grad_clip: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def to_dict(self) -> dict:
        return asdict(self)
