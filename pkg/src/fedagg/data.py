"""Dataset loading, tokenization, synthetic corpora and IID partitioning."""

from __future__ import annotations

import json
import logging
import math
import unicodedata
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .model_core import Batch
from .rng import PARTITION_STREAM, SPLIT_STREAM, SYNTH_STREAM, make_rng

log = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: int


@dataclass
class JsonlLoad:
    examples: list[LabeledExample]
    malformed: int
    malformed_lines: list[int] = field(default_factory=list)


def _parse_line(line: str) -> LabeledExample:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    text, label = obj.get("text"), obj.get("label")
    if not isinstance(text, str):
        raise ValueError('missing or non-string "text"')
    if isinstance(label, bool) or not isinstance(label, int):
        raise ValueError('missing or non-integer "label"')
    if label < 0:
        raise ValueError(f"negative label {label}")
    if not tokenize(text):
        raise ValueError("text is empty after normalization")
    return LabeledExample(text, label)


def read_jsonl(path: str | Path, strict: bool = False) -> JsonlLoad:
    """Load ``{"text": str, "label": int}`` records, keeping file order.

    Blank lines are skipped. Other unparseable lines are counted and dropped,
    or raise :class:`ParseError` naming the 1-based line number when ``strict``.
    """
    examples, bad = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                examples.append(_parse_line(line))
            except (ValueError, json.JSONDecodeError) as exc:
                if strict:
                    raise ParseError(f"{path}:{lineno}: {exc}") from exc
                bad.append(lineno)
    return JsonlLoad(examples, len(bad), bad)


def load_jsonl(path: str | Path, strict: bool = False) -> list[LabeledExample]:
    result = read_jsonl(path, strict)
    if result.malformed:
        log.warning("%s: skipped %d malformed line(s)", path, result.malformed)
    return result.examples


def write_jsonl(path: str | Path, examples: Iterable[LabeledExample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps({"text": ex.text, "label": ex.label}, ensure_ascii=False) + "\n")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation from both ends of each token."""
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


@dataclass
class Vocabulary:
    """Token to id map with ``<pad>`` = 0 and ``<unk>`` = 1."""

    tokens: list[str]

    def __post_init__(self):
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ConfigError("vocabulary must start with <pad>, <unk>")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ConfigError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]


def build_vocabulary(texts: Iterable[str], min_freq: int = 2) -> Vocabulary:
    """Vocabulary over tokens seen at least ``min_freq`` times, most frequent first.

    Ties in frequency are broken alphabetically so the id assignment is stable.
    """
    counts = Counter(tok for text in texts for tok in tokenize(text))
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocabulary([PAD_TOKEN, UNK_TOKEN] + [t for t in kept if t not in (PAD_TOKEN, UNK_TOKEN)])


def encode_sequences(examples: Sequence[LabeledExample], vocab: Vocabulary, max_len: int = 32) -> Batch:
    """Token-id matrix ``(N, max_len)``: truncated beyond ``max_len``, right-padded with 0."""
    ids = np.zeros((len(examples), max_len), dtype=np.int64)
    for row, ex in enumerate(examples):
        enc = vocab.encode(tokenize(ex.text))[:max_len]
        ids[row, : len(enc)] = enc
    return Batch(ids, [ex.label for ex in examples])


def encode_bow(examples: Sequence[LabeledExample], vocab: Vocabulary) -> Batch:
    """Term-frequency vectors ``(N, len(vocab))``; each row sums to 1 (0 for empty text)."""
    x = np.zeros((len(examples), len(vocab)))
    for row, ex in enumerate(examples):
        ids = vocab.encode(tokenize(ex.text))
        if ids:
            np.add.at(x[row], ids, 1.0 / len(ids))
    return Batch(x, [ex.label for ex in examples])


def encode(examples: Sequence[LabeledExample], vocab: Vocabulary, uses_sequences: bool, max_len: int = 32) -> Batch:
    if uses_sequences:
        return encode_sequences(examples, vocab, max_len)
    return encode_bow(examples, vocab)


MARKERS_PER_CLASS = 10
MARKER_PROB = 0.3
MIN_LEN, MAX_LEN = 5, 30


def synthetic_token(idx: int) -> str:
    return f"w{idx:05d}"


def make_synthetic(
    num_examples: int,
    num_classes: int = 2,
    vocab_size: int = 500,
    positive_rate: float | None = None,
    seed: int = 0,
) -> list[LabeledExample]:
    """Planted-marker text classification corpus.

    Class ``c`` owns the ten marker tokens ``w{10c}`` .. ``w{10c+9}``; the rest
    of the vocabulary is background. An example has Uniform[5, 30] tokens, each
    a uniformly chosen marker of its class with probability 0.3 and otherwise a
    uniform background token. Binary labels are 1 with probability
    ``positive_rate`` (0.5 when None); multiclass labels are uniform.
    """
    if num_examples < 0:
        raise ConfigError("num_examples must be non-negative")
    if num_classes < 2:
        raise ConfigError("num_classes must be >= 2")
    if vocab_size <= num_classes * MARKERS_PER_CLASS:
        raise ConfigError(f"vocab_size must exceed {num_classes * MARKERS_PER_CLASS} for {num_classes} classes")
    if positive_rate is not None:
        if num_classes != 2:
            raise ConfigError("positive_rate only applies to binary tasks")
        if not 0.0 < positive_rate < 1.0:
            raise ConfigError(f"positive_rate must lie in (0, 1), got {positive_rate}")

    rng = make_rng(seed, SYNTH_STREAM)
    n_markers = num_classes * MARKERS_PER_CLASS
    if num_classes == 2 and positive_rate is not None:
        labels = (rng.random(num_examples) < positive_rate).astype(int)
    else:
        labels = rng.integers(0, num_classes, num_examples)
    lengths = rng.integers(MIN_LEN, MAX_LEN + 1, num_examples)

    out = []
    for label, length in zip(labels, lengths):
        is_marker = rng.random(length) < MARKER_PROB
        markers = label * MARKERS_PER_CLASS + rng.integers(0, MARKERS_PER_CLASS, length)
        background = rng.integers(n_markers, vocab_size, length)
        ids = np.where(is_marker, markers, background)
        out.append(LabeledExample(" ".join(synthetic_token(i) for i in ids), int(label)))
    return out


@dataclass
class ClientShard:
    client_id: int
    examples: Sequence
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def _take(examples, idx: np.ndarray):
    if isinstance(examples, Batch):
        return examples.subset(idx)
    return [examples[i] for i in idx]


def partition_indices(n: int, num_clients: int, per_client: int, seed: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Seeded shuffle of ``range(n)`` dealt into contiguous slices; returns (slices, leftover)."""
    if num_clients < 1 or per_client < 1:
        raise ConfigError("num_clients and per_client must be positive")
    if num_clients * per_client > n:
        raise ConfigError(
            f"need {num_clients} x {per_client} = {num_clients * per_client} examples, only {n} available"
        )
    perm = make_rng(seed, PARTITION_STREAM).permutation(n)
    slices = [perm[k * per_client : (k + 1) * per_client] for k in range(num_clients)]
    return slices, perm[num_clients * per_client :]


def partition_iid(examples, num_clients: int, per_client: int, seed: int) -> list[ClientShard]:
    """Equal-size IID shards; examples past ``num_clients * per_client`` belong to no client."""
    slices, _ = partition_indices(len(examples), num_clients, per_client, seed)
    return [ClientShard(k, _take(examples, idx), idx) for k, idx in enumerate(slices)]


def shard_manifest(n: int, num_clients: int, per_client: int, seed: int, source: str | None = None) -> dict:
    slices, leftover = partition_indices(n, num_clients, per_client, seed)
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "source": source,
        "num_examples": n,
        "num_clients": num_clients,
        "per_client": per_client,
        "seed": seed,
        "shards": {str(k): idx.tolist() for k, idx in enumerate(slices)},
        "leftover": leftover.tolist(),
    }


def split_sizes(n: int, test_fraction: float) -> tuple[int, int]:
    """``n_test = floor(n * test_fraction + 0.5)``; both sides must be non-empty."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = math.floor(n * test_fraction + 0.5)
    if n_test < 1 or n - n_test < 1:
        raise ConfigError(f"cannot split {n} examples with test_fraction={test_fraction}")
    return n - n_test, n_test


def split_train_test(examples, test_fraction: float, seed: int):
    """Seeded shuffle, then the first ``n_train`` go to train and the rest to test."""
    n_train, _ = split_sizes(len(examples), test_fraction)
    perm = make_rng(seed, SPLIT_STREAM).permutation(len(examples))
    return _take(examples, perm[:n_train]), _take(examples, perm[n_train:])


def class_histogram(examples: Iterable[LabeledExample]) -> dict[int, int]:
    return dict(sorted(Counter(ex.label for ex in examples).items()))
