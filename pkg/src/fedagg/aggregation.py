"""Server-side aggregation: FullbatchAgg, AverageAgg and AvgDiffAgg.

AvgDiffAgg treats aggregation as gradient descent on the server objective

    L(theta) = sum_k 1/(2n) * ||theta - theta_k||^2

whose gradient is the average difference ``mean_k(theta - theta_k)``. One
server step of size ``epsilon`` gives ``theta - epsilon * mean_k(theta - theta_k)``;
``epsilon = 1`` lands exactly on the unweighted client mean.

All reductions run over clients in ascending id order, so results do not depend
on the order in which client updates arrive.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .model_core import ParameterVector, as_vector, vec_mean, vec_sub, vec_weighted_mean
from .model_core.vectors import check_finite
from .rng import SAMPLE_STREAM, derive_seed, make_rng

STRATEGIES = ("fullbatch", "average", "avgdiff")


@dataclass(frozen=True)
class AggregationConfig:
    strategy: str = "avgdiff"
    epsilon: float = 1.0
    fraction: float = 0.1
    num_clients: int = 20
    local_epochs: int = 5
    local_batch: int = 10
    rounds: int = 10
    local_lr: float = 0.5
    sampling_seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"aggregation.strategy: unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"aggregation.epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"aggregation.fraction must lie in (0, 1], got {self.fraction}")
        for name in ("num_clients", "local_epochs", "local_batch", "rounds"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"aggregation.{name} must be a positive integer, got {value!r}")
        if not self.local_lr > 0:
            raise ConfigError(f"aggregation.local_lr must be positive, got {self.local_lr}")
        if not 0 <= self.sampling_seed < 2**64:
            raise ConfigError("aggregation.sampling_seed must be a 64-bit unsigned integer")
        if self.strategy == "fullbatch" and (self.fraction != 1.0 or self.local_epochs != 1):
            raise ConfigError("aggregation.strategy: fullbatch requires fraction=1 and local_epochs=1")


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    params: ParameterVector
    num_examples: int
    train_loss: float


def clients_per_round(num_clients: int, fraction: float) -> int:
    """``max(floor(fraction * num_clients), 1)``; a 1e-9 slack absorbs products like 0.29 * 100."""
    return max(math.floor(fraction * num_clients + 1e-9), 1)


def sample_clients(num_clients: int, fraction: float, round_index: int, sampling_seed: int) -> list[int]:
    """Ids of the clients taking part in ``round_index``, ascending.

    Drawn uniformly without replacement from a stream keyed on
    ``(sampling_seed, round_index)``, so any round can be replayed on its own.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    m = clients_per_round(num_clients, fraction)
    if m >= num_clients:
        return list(range(num_clients))
    rng = make_rng(derive_seed(sampling_seed, round_index), SAMPLE_STREAM)
    return sorted(int(k) for k in rng.choice(num_clients, size=m, replace=False))


def _check_clients(theta: np.ndarray, client_params: Sequence) -> list[np.ndarray]:
    if len(client_params) == 0:
        raise ConfigError("aggregation needs at least one client")
    vecs = [as_vector(v) for v in client_params]
    for v in vecs:
        if v.shape != theta.shape:
            raise ShapeError(f"client vector length {len(v)} != server length {len(theta)}")
    return vecs


def server_objective(theta, client_params: Sequence) -> float:
    """Mean half squared Euclidean distance from ``theta`` to the client vectors."""
    theta = as_vector(theta)
    vecs = _check_clients(theta, client_params)
    n = len(vecs)
    return float(sum(0.5 / n * float(np.dot(theta - v, theta - v)) for v in vecs))


def avg_difference(theta, client_params: Sequence) -> ParameterVector:
    """``mean_k(theta - theta_k)``, the gradient of :func:`server_objective`."""
    theta = as_vector(theta)
    vecs = _check_clients(theta, client_params)
    return vec_mean([vec_sub(theta, v) for v in vecs])


def apply_avgdiff(theta, client_params: Sequence, epsilon: float) -> ParameterVector:
    """One server step ``theta - epsilon * avg_difference(theta, client_params)``."""
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}")
    theta = as_vector(theta)
    out = check_finite(theta - epsilon * avg_difference(theta, client_params))
    out.setflags(write=False)
    return out


def _sorted_updates(updates: Sequence[ClientUpdate]) -> list[ClientUpdate]:
    if len(updates) == 0:
        raise ConfigError("aggregation needs at least one client update")
    ordered = sorted(updates, key=lambda u: u.client_id)
    ids = [u.client_id for u in ordered]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate client ids in updates: {ids}")
    return ordered


def apply_average(updates: Sequence[ClientUpdate]) -> ParameterVector:
    """Example-count weighted mean ``sum_k n_k / N * theta_k`` of the client models."""
    ordered = _sorted_updates(updates)
    if any(u.num_examples <= 0 for u in ordered):
        raise ConfigError("client updates must report a positive example count")
    out = vec_weighted_mean([u.params for u in ordered], [u.num_examples for u in ordered])
    out.setflags(write=False)
    return out


def apply_fullbatch(updates: Sequence[ClientUpdate], num_clients: int) -> ParameterVector:
    """AverageAgg over every one of ``num_clients`` clients (ids ``0..num_clients-1``)."""
    ordered = _sorted_updates(updates)
    ids = [u.client_id for u in ordered]
    if ids != list(range(num_clients)):
        missing = sorted(set(range(num_clients)) - set(ids))
        raise ConfigError(f"fullbatch aggregation needs all {num_clients} clients; missing {missing}")
    return apply_average(ordered)


def aggregate(config: AggregationConfig, theta, updates: Sequence[ClientUpdate]) -> ParameterVector:
    """Dispatch to the configured strategy.

    ``updates`` may arrive in any order. For fullbatch the expected client set
    is whatever was handed in, so clients that dropped out shrink the average
    instead of failing the round.
    """
    ordered = _sorted_updates(updates)
    if config.strategy == "avgdiff":
        return apply_avgdiff(theta, [u.params for u in ordered], config.epsilon)
    if config.strategy == "average":
        return apply_average(ordered)
    return apply_average(ordered) if len(ordered) < config.num_clients else apply_fullbatch(ordered, config.num_clients)
