"""Round loop: sample clients, train locally, aggregate, evaluate.

Server and clients live in one process; "sending" a model is passing an
immutable array. Client tasks within a round may run on a thread pool, but
their results are always reduced in client-id order, so the outcome is the
same for any worker count.
"""

from __future__ import annotations

import logging
import statistics
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .aggregation import ClientUpdate, aggregate, sample_clients
from .config import ExperimentConfig
from .data import (
    ClientShard,
    LabeledExample,
    build_vocabulary,
    encode,
    load_jsonl,
    make_synthetic,
    partition_iid,
    split_sizes,
    split_train_test,
)
from .errors import ConfigError
from .metrics import EvalReport, evaluate
from .model_core import Batch, ModelSpec, init_params, predict_proba, sgd_step, value_and_grad
from .model_core.models import DEFAULT_HIDDEN
from .rng import FAILURE_STREAM, FOLD_STREAM, SHUFFLE_STREAM, derive_seed, make_rng

log = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1
EVAL_CHUNK = 1024


class ClientDisconnected(RuntimeError):
    """A sampled client failed to return an update this round."""


@dataclass
class RoundLog:
    round: int
    sampled_clients: list[int]
    dropped_clients: list[int]
    mean_client_loss: float | None
    test_accuracy: float | None
    test_auroc: float | None
    wall_ms: int

    def to_json(self) -> dict:
        return {"schema_version": LOG_SCHEMA_VERSION, **asdict(self)}


@dataclass
class ExperimentResult:
    spec: ModelSpec
    logs: list[RoundLog]
    final_params: np.ndarray


@dataclass
class PreparedData:
    spec: ModelSpec
    train: Batch
    test: Batch
    shards: list[ClientShard]
    vocab_size: int


def load_examples(config: ExperimentConfig) -> tuple[list[LabeledExample], int]:
    """Raw examples and the number of classes."""
    data = config.data
    if data.path is not None:
        examples = load_jsonl(data.path)
        if not examples:
            raise ConfigError(f"data.path: {data.path} contains no usable examples")
        num_classes = data.num_classes or max(2, max(ex.label for ex in examples) + 1)
        if any(ex.label >= num_classes for ex in examples):
            raise ConfigError(f"data.num_classes: labels exceed {num_classes} classes")
        return examples, num_classes
    syn = data.synthetic
    examples = make_synthetic(syn.num_examples, syn.num_classes, syn.vocab_size, syn.positive_rate, syn.seed)
    return examples, syn.num_classes


def model_spec(config: ExperimentConfig, vocab_size: int, num_classes: int) -> ModelSpec:
    m = config.model
    hidden = DEFAULT_HIDDEN[m.kind] if m.hidden_dims is None or m.kind == "logreg" else m.hidden_dims
    return ModelSpec(m.kind, vocab_size, m.embed_dim, hidden, num_classes, m.conv_widths, m.init_seed)


def _encode_split(config, train_ex, test_ex, num_classes):
    vocab = build_vocabulary((ex.text for ex in train_ex), config.data.min_freq)
    spec = model_spec(config, len(vocab), num_classes)
    train = encode(train_ex, vocab, spec.uses_sequences, config.data.max_len)
    test = encode(test_ex, vocab, spec.uses_sequences, config.data.max_len)
    return spec, train, test, len(vocab)


def prepare_data(config: ExperimentConfig) -> PreparedData:
    examples, num_classes = load_examples(config)
    K = config.aggregation.num_clients
    n_train, _ = split_sizes(len(examples), config.data.test_fraction)
    if K * config.per_client > n_train:
        raise ConfigError(
            f"per_client: {K} clients x {config.per_client} examples exceeds the {n_train}-example training split"
        )
    train_ex, test_ex = split_train_test(examples, config.data.test_fraction, config.run_seed)
    spec, train, test, vocab_size = _encode_split(config, train_ex, test_ex, num_classes)
    shards = partition_iid(train, K, config.per_client, config.run_seed)
    return PreparedData(spec, train, test, shards, vocab_size)


def sgd_epochs(
    spec: ModelSpec, params: np.ndarray, data: Batch, epochs: int, batch_size: int, lr: float, shuffle_seed: int
) -> tuple[np.ndarray, float]:
    """Minibatch SGD; returns final params and the example-weighted mean loss of the last epoch.

    Epoch ``e`` visits examples in the order of a permutation drawn from
    ``(derive_seed(shuffle_seed, e), SHUFFLE_STREAM)``; the last short batch is kept.
    """
    if epochs < 1 or batch_size < 1:
        raise ConfigError("epochs and batch_size must be positive")
    n = len(data)
    epoch_loss = float("nan")
    for epoch in range(epochs):
        order = make_rng(derive_seed(shuffle_seed, epoch), SHUFFLE_STREAM).permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grad = value_and_grad(spec, params, data.subset(idx))
            params = sgd_step(params, grad, lr)
            total += loss * len(idx)
        epoch_loss = total / n
    return params, epoch_loss


def local_training(
    client: ClientShard,
    theta: np.ndarray,
    spec: ModelSpec,
    epochs: int,
    batch_size: int,
    lr: float,
    shuffle_seed: int,
) -> ClientUpdate:
    """Start from the server model, run ``epochs`` of SGD on the client's shard."""
    if len(client) == 0:
        raise ConfigError(f"client {client.client_id} has an empty shard")
    params, loss = sgd_epochs(spec, theta, client.examples, epochs, batch_size, lr, shuffle_seed)
    params.setflags(write=False)
    return ClientUpdate(client.client_id, params, len(client), loss)


def evaluate_model(spec: ModelSpec, params: np.ndarray, test: Batch) -> EvalReport:
    probs = np.concatenate(
        [predict_proba(spec, params, test.examples[i : i + EVAL_CHUNK]) for i in range(0, len(test), EVAL_CHUNK)]
    )
    return evaluate(probs, test.labels)


def failed_clients(config: ExperimentConfig, round_index: int, sampled: list[int]) -> set[int]:
    rate = config.faults.rate
    if rate <= 0.0:
        return set()
    draws = make_rng(derive_seed(config.faults.seed, round_index), FAILURE_STREAM).random(len(sampled))
    return {k for k, u in zip(sampled, draws) if u < rate}


def run_federated(
    config: ExperimentConfig,
    workers: int = 1,
    on_round: Callable[[RoundLog, np.ndarray], None] | None = None,
    prepared: PreparedData | None = None,
    client_trainer: Callable[[ClientShard, np.ndarray, int], ClientUpdate] | None = None,
) -> ExperimentResult:
    """Run every round of the configured experiment.

    ``on_round(log, theta)`` is called after each round with the aggregated model.
    ``client_trainer(shard, theta, round)`` replaces :func:`local_training`, e.g.
    with stub clients in tests.
    """
    if workers < 1:
        raise ConfigError(f"workers must be positive, got {workers}")
    prepared = prepared or prepare_data(config)
    spec, agg = prepared.spec, config.aggregation
    theta = init_params(spec)
    logs = []

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(1, agg.rounds + 1):
            start = time.perf_counter()
            sampled = sample_clients(agg.num_clients, agg.fraction, t, agg.sampling_seed)
            failing = failed_clients(config, t, sampled)

            def task(k, theta=theta, t=t):
                if k in failing:
                    raise ClientDisconnected(f"client {k} disconnected in round {t}")
                if client_trainer is not None:
                    return client_trainer(prepared.shards[k], theta, t)
                return local_training(
                    prepared.shards[k], theta, spec, agg.local_epochs, agg.local_batch, agg.local_lr,
                    derive_seed(config.run_seed, t, k),
                )

            futures = [pool.submit(task, k) for k in sampled] if pool else None
            updates, dropped = [], []
            for i, k in enumerate(sampled):
                try:
                    updates.append(futures[i].result() if pool else task(k))
                except ClientDisconnected as exc:
                    log.info("round %d: %s", t, exc)
                    dropped.append(k)

            if updates:
                theta = aggregate(agg, theta, updates)
                mean_loss = float(np.mean([u.train_loss for u in sorted(updates, key=lambda u: u.client_id)]))
            else:
                log.warning("round %d: every sampled client dropped; server model unchanged", t)
                mean_loss = None

            acc = auc = None
            if t % config.eval_every == 0 or t == agg.rounds:
                report = evaluate_model(spec, theta, prepared.test)
                acc, auc = report.accuracy, report.auroc
            entry = RoundLog(
                t, sampled, dropped, mean_loss, acc, auc, int((time.perf_counter() - start) * 1000)
            )
            logs.append(entry)
            if on_round is not None:
                on_round(entry, theta)
    finally:
        if pool:
            pool.shutdown()
    return ExperimentResult(spec, logs, theta)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[RoundLog]:
    return run_federated(config, workers).logs


@dataclass
class CVSummary:
    accuracies: list[float]
    mean: float
    std: float


def train_centralized(config: ExperimentConfig, spec: ModelSpec, train: Batch, shuffle_seed: int) -> np.ndarray:
    agg = config.aggregation
    params, _ = sgd_epochs(
        spec, init_params(spec), train, config.central_epochs, agg.local_batch, agg.local_lr, shuffle_seed
    )
    return params


def run_cross_validation(config: ExperimentConfig, folds: int = 10) -> CVSummary:
    """Centralized k-fold baseline on the pooled dataset (no federation).

    Fold membership comes from one seeded permutation split into ``folds``
    near-equal contiguous parts. Each fold builds its own vocabulary from its
    training part and trains for ``central_epochs``.
    """
    examples, num_classes = load_examples(config)
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if folds > len(examples):
        raise ConfigError(f"folds={folds} exceeds the {len(examples)} available examples")
    perm = make_rng(config.run_seed, FOLD_STREAM).permutation(len(examples))
    parts = np.array_split(perm, folds)
    accuracies = []
    for f, test_idx in enumerate(parts):
        train_idx = np.concatenate([p for g, p in enumerate(parts) if g != f])
        train_ex = [examples[i] for i in train_idx]
        test_ex = [examples[i] for i in test_idx]
        spec, train, test, _ = _encode_split(config, train_ex, test_ex, num_classes)
        params = train_centralized(config, spec, train, derive_seed(config.run_seed, f))
        accuracies.append(evaluate_model(spec, params, test).accuracy)
    std = statistics.stdev(accuracies) if len(accuracies) > 1 else 0.0
    return CVSummary(accuracies, statistics.fmean(accuracies), std)


def with_strategy(config: ExperimentConfig, strategy: str, **agg_changes) -> ExperimentConfig:
    """Copy of ``config`` using another aggregation strategy (fullbatch forces C=1, E=1)."""
    if strategy == "fullbatch":
        agg_changes = {"fraction": 1.0, "local_epochs": 1, **agg_changes}
    return replace(config, aggregation=replace(config.aggregation, strategy=strategy, **agg_changes))
