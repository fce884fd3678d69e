"""JSON checkpoints: model kind, configuration, and named weight arrays."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..tensor import Tensor
from .config import ModelConfig
from .transformer import ModelParams

FORMAT = "coldstart-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def to_dict(params: ModelParams, extra: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": params.kind,
        "config": params.config.to_dict(),
        "weights": {
            name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in sorted(params.weights.items())
        },
        "extra": extra or {},
    }


def from_dict(obj: dict) -> ModelParams:
    if obj.get("format") != FORMAT:
        raise CheckpointError("not a coldstart checkpoint")
    if obj.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {obj.get('version')!r}")
    config = ModelConfig.from_dict(obj["config"])
    weights = {
        name: Tensor(np.asarray(w["data"], dtype=np.float64).reshape(w["shape"]), requires_grad=True)
        for name, w in obj["weights"].items()
    }
    return ModelParams(config, weights, obj["kind"])


def save(params: ModelParams, path, extra: dict | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(params, extra), fh, sort_keys=True)
        fh.write("\n")


def load(path) -> tuple[ModelParams, dict]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return from_dict(obj), obj.get("extra", {})
