"""Experiment configuration: dataclasses plus strict JSON (de)serialisation.

A config file is one JSON object::

    {
      "run_seed": 0,
      "per_client": 50,
      "eval_every": 1,
      "central_epochs": 10,
      "model": {"kind": "textcnn", "embed_dim": 16, "hidden_dims": null,
                "conv_widths": [2, 3, 4], "init_seed": 0},
      "aggregation": {"strategy": "avgdiff", "epsilon": 1.0, "fraction": 0.1,
                      "num_clients": 20, "local_epochs": 5, "local_batch": 10,
                      "rounds": 10, "local_lr": 0.5, "sampling_seed": 0},
      "data": {"path": null,
               "synthetic": {"num_examples": 1250, "num_classes": 2,
                             "vocab_size": 500, "positive_rate": null, "seed": 0},
               "num_classes": null, "test_fraction": 0.2, "max_len": 32, "min_freq": 2},
      "faults": {"rate": 0.0, "seed": 0}
    }

Every key is optional; missing keys take the defaults above. A null
``hidden_dims`` picks the per-kind default (mlp 32, textcnn 8 filters per
width, lstm 16 units; logreg has none). Unknown keys are
rejected with the dotted path of the offending field.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .aggregation import AggregationConfig
from .errors import ConfigError
from .model_core.models import KINDS
from .rng import derive_seed

SEED_LIMIT = 2**64


def _check_seed(name: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < SEED_LIMIT:
        raise ConfigError(f"{name} must be a 64-bit unsigned integer, got {value!r}")


def _check_pos_int(name: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture minus the input width, which comes from the vocabulary."""

    kind: str = "textcnn"
    embed_dim: int = 16
    hidden_dims: tuple[int, ...] | None = None
    conv_widths: tuple[int, ...] = (2, 3, 4)
    init_seed: int = 0

    def __post_init__(self):
        if self.hidden_dims is not None:
            object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        object.__setattr__(self, "conv_widths", tuple(self.conv_widths))
        if self.kind not in KINDS:
            raise ConfigError(f"model.kind: unknown model kind {self.kind!r}; expected one of {KINDS}")
        _check_seed("model.init_seed", self.init_seed)


@dataclass(frozen=True)
class SyntheticConfig:
    num_examples: int = 1250
    num_classes: int = 2
    vocab_size: int = 500
    positive_rate: float | None = None
    seed: int = 0

    def __post_init__(self):
        _check_pos_int("data.synthetic.num_examples", self.num_examples)
        _check_seed("data.synthetic.seed", self.seed)


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    synthetic: SyntheticConfig | None = None
    num_classes: int | None = None
    test_fraction: float = 0.2
    max_len: int = 32
    min_freq: int = 2

    def __post_init__(self):
        if self.path is None and self.synthetic is None:
            object.__setattr__(self, "synthetic", SyntheticConfig())
        if self.path is not None and self.synthetic is not None:
            raise ConfigError("data: give either data.path or data.synthetic, not both")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"data.test_fraction must lie in (0, 1), got {self.test_fraction}")
        _check_pos_int("data.max_len", self.max_len)
        _check_pos_int("data.min_freq", self.min_freq)
        if self.num_classes is not None and self.num_classes < 2:
            raise ConfigError("data.num_classes must be >= 2")


@dataclass(frozen=True)
class FaultConfig:
    """Client-failure injection; each sampled client drops out with probability ``rate``."""

    rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"faults.rate must lie in [0, 1), got {self.rate}")
        _check_seed("faults.seed", self.seed)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    data: DataConfig = field(default_factory=DataConfig)
    faults: FaultConfig = field(default_factory=FaultConfig)
    per_client: int = 50
    eval_every: int = 1
    central_epochs: int = 10
    run_seed: int = 0

    def __post_init__(self):
        _check_pos_int("per_client", self.per_client)
        _check_pos_int("eval_every", self.eval_every)
        _check_pos_int("central_epochs", self.central_epochs)
        _check_seed("run_seed", self.run_seed)


_SECTIONS = {
    "model": ModelConfig,
    "aggregation": AggregationConfig,
    "data": DataConfig,
    "faults": FaultConfig,
}


def _build(cls, data: Any, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}: unknown config field")
    kwargs = {}
    for key, value in data.items():
        if cls is ExperimentConfig and key in _SECTIONS:
            value = _build(_SECTIONS[key], value, f"{key}.")
        elif cls is DataConfig and key == "synthetic" and value is not None:
            value = _build(SyntheticConfig, value, "data.synthetic.")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def config_to_dict(config: ExperimentConfig) -> dict:
    def convert(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: convert(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return [convert(v) for v in obj]
        return obj

    return convert(config)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a config file; a run manifest (with a ``config`` key) is accepted too."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(data, dict) and "config" in data and "artifacts" in data:
        data = data["config"]
    return config_from_dict(data)


def set_override(data: dict, dotted: str, raw: str) -> None:
    """Apply ``section.key=value`` from the command line; the value is parsed as JSON when possible."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        child = node.get(k)
        if child is None:
            child = node[k] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"{dotted}: {k} is not a section")
        node = child
    node[keys[-1]] = value


def trial_config(config: ExperimentConfig, trial: int) -> ExperimentConfig:
    """Trial 0 is ``config`` itself; later trials re-derive every run-level seed.

    The dataset (including a synthetic corpus) stays fixed across trials; the
    split, partition, initial weights, client sampling, shuffles and failures
    all change.
    """
    if trial == 0:
        return config
    return dataclasses.replace(
        config,
        run_seed=derive_seed(config.run_seed, trial),
        model=dataclasses.replace(config.model, init_seed=derive_seed(config.model.init_seed, trial)),
        aggregation=dataclasses.replace(
            config.aggregation, sampling_seed=derive_seed(config.aggregation.sampling_seed, trial)
        ),
        faults=dataclasses.replace(config.faults, seed=derive_seed(config.faults.seed, trial)),
    )
