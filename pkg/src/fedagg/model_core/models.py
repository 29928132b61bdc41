"""Small classifiers with hand-written backpropagation.

Four model kinds share one calling convention: a :class:`ModelSpec` describes
the architecture, a flat float64 vector holds the weights, and
:func:`forward` / :func:`backward` map ``(spec, params, batch)`` to the mean
softmax cross-entropy and its gradient.

* ``logreg``  -- dense input -> linear -> softmax
* ``mlp``     -- dense input -> [linear -> tanh] * len(hidden_dims) -> linear
* ``textcnn`` -- token ids -> embedding -> parallel 1-D conv banks (one per
  width in ``conv_widths``, ``hidden_dims[0]`` filters each) -> tanh ->
  max-over-time -> concat -> linear
* ``lstm``    -- token ids -> embedding -> single-layer LSTM with
  ``hidden_dims[0]`` units -> hidden state at the last non-pad token -> linear

Token id 0 is padding. Padding must only occur at the end of a sequence; the
LSTM stops updating its state at the first pad, the CNN convolves over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from ..rng import INIT_STREAM, make_rng
from .vectors import ParameterVector, as_vector

KINDS = ("logreg", "mlp", "textcnn", "lstm")
SEQUENCE_KINDS = ("textcnn", "lstm")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    embed_dim: int = 16
    hidden_dims: tuple[int, ...] = ()
    num_classes: int = 2
    conv_widths: tuple[int, ...] = (2, 3, 4)
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "conv_widths", tuple(int(w) for w in self.conv_widths))
        validate_spec(self)

    @property
    def uses_sequences(self) -> bool:
        return self.kind in SEQUENCE_KINDS


def validate_spec(spec: ModelSpec) -> None:
    if spec.kind not in KINDS:
        raise ConfigError(f"model.kind: unknown model kind {spec.kind!r}; expected one of {KINDS}")
    if spec.input_dim < 1:
        raise ConfigError(f"model.input_dim must be positive, got {spec.input_dim}")
    if spec.num_classes < 2:
        raise ConfigError(f"model.num_classes must be >= 2, got {spec.num_classes}")
    if not 0 <= spec.init_seed < 2**64:
        raise ConfigError("model.init_seed must be a 64-bit unsigned integer")
    if any(h < 1 for h in spec.hidden_dims):
        raise ConfigError("model.hidden_dims entries must be positive")
    if spec.kind == "mlp" and not spec.hidden_dims:
        raise ConfigError("model.hidden_dims: mlp needs at least one hidden layer")
    if spec.kind in SEQUENCE_KINDS:
        if spec.embed_dim < 1:
            raise ConfigError("model.embed_dim must be positive")
        if len(spec.hidden_dims) != 1:
            raise ConfigError(f"model.hidden_dims: {spec.kind} takes exactly one hidden size")
    if spec.kind == "textcnn" and (not spec.conv_widths or any(w < 1 for w in spec.conv_widths)):
        raise ConfigError("model.conv_widths must be a non-empty list of positive widths")


DEFAULT_HIDDEN = {"logreg": (), "mlp": (32,), "textcnn": (8,), "lstm": (16,)}


def default_spec(kind: str, input_dim: int, num_classes: int = 2, init_seed: int = 0) -> ModelSpec:
    """Desk-scale defaults: 16-dim embeddings, 8 filters per conv width, 16 LSTM units."""
    if kind not in DEFAULT_HIDDEN:
        raise ConfigError(f"model.kind: unknown model kind {kind!r}; expected one of {KINDS}")
    return ModelSpec(kind, input_dim, hidden_dims=DEFAULT_HIDDEN[kind], num_classes=num_classes, init_seed=init_seed)


# Each entry: (name, shape, fan_in, fan_out). fan_in None marks a bias (zero-initialised).
def param_layout(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], int | None, int | None]]:
    C = spec.num_classes
    layout = []
    if spec.kind == "logreg":
        layout.append(("W", (spec.input_dim, C), spec.input_dim, C))
        layout.append(("b", (C,), None, None))
    elif spec.kind == "mlp":
        prev = spec.input_dim
        for i, h in enumerate(spec.hidden_dims):
            layout.append((f"W{i}", (prev, h), prev, h))
            layout.append((f"b{i}", (h,), None, None))
            prev = h
        layout.append(("W_out", (prev, C), prev, C))
        layout.append(("b_out", (C,), None, None))
    elif spec.kind == "textcnn":
        V, d, F = spec.input_dim, spec.embed_dim, spec.hidden_dims[0]
        layout.append(("emb", (V, d), V, d))
        for w in spec.conv_widths:
            layout.append((f"conv{w}_W", (w * d, F), w * d, F))
            layout.append((f"conv{w}_b", (F,), None, None))
        feat = F * len(spec.conv_widths)
        layout.append(("W_out", (feat, C), feat, C))
        layout.append(("b_out", (C,), None, None))
    elif spec.kind == "lstm":
        V, d, H = spec.input_dim, spec.embed_dim, spec.hidden_dims[0]
        layout.append(("emb", (V, d), V, d))
        layout.append(("W_x", (d, 4 * H), d, 4 * H))
        layout.append(("W_h", (H, 4 * H), H, 4 * H))
        layout.append(("b_gates", (4 * H,), None, None))
        layout.append(("W_out", (H, C), H, C))
        layout.append(("b_out", (C,), None, None))
    return layout


def param_count(spec: ModelSpec) -> int:
    return sum(math.prod(shape) for _, shape, _, _ in param_layout(spec))


def unpack(spec: ModelSpec, vec: np.ndarray) -> dict[str, np.ndarray]:
    """Named views into ``vec`` (no copies; writing to a view writes ``vec``)."""
    if vec.shape != (param_count(spec),):
        raise ShapeError(f"expected {param_count(spec)} parameters for {spec.kind}, got {vec.shape}")
    out, offset = {}, 0
    for name, shape, _, _ in param_layout(spec):
        size = math.prod(shape)
        out[name] = vec[offset : offset + size].reshape(shape)
        offset += size
    return out


def init_params(spec: ModelSpec) -> ParameterVector:
    """Glorot-uniform weights, zero biases, drawn in layout order from the init stream.

    Each weight tensor takes ``size`` consecutive doubles from
    ``make_rng(spec.init_seed, INIT_STREAM)`` mapped to ``uniform(-s, s)`` with
    ``s = sqrt(6 / (fan_in + fan_out))``.
    """
    validate_spec(spec)
    rng = make_rng(spec.init_seed, INIT_STREAM)
    parts = []
    for _, shape, fan_in, fan_out in param_layout(spec):
        size = math.prod(shape)
        if fan_in is None:
            parts.append(np.zeros(size))
        else:
            s = math.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-s, s, size))
    vec = np.concatenate(parts)
    vec.setflags(write=False)
    return vec


@dataclass
class Batch:
    """Encoded examples plus integer labels.

    ``examples`` is ``(N, input_dim)`` floats for dense models or ``(N, L)``
    token ids for sequence models.
    """

    examples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.examples = np.asarray(self.examples)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or len(self.labels) < 1:
            raise ShapeError("batch needs at least one label")
        if self.examples.ndim != 2 or len(self.examples) != len(self.labels):
            raise ShapeError(
                f"examples shape {self.examples.shape} does not match {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Batch":
        return Batch(self.examples[idx], self.labels[idx])


def _check_batch(spec: ModelSpec, batch: Batch) -> None:
    if batch.labels.min() < 0 or batch.labels.max() >= spec.num_classes:
        raise ShapeError(f"labels must lie in [0, {spec.num_classes})")
    x = batch.examples
    if spec.uses_sequences:
        if not np.issubdtype(x.dtype, np.integer):
            raise ShapeError(f"{spec.kind} expects integer token ids, got dtype {x.dtype}")
        if x.size and (x.min() < 0 or x.max() >= spec.input_dim):
            raise ShapeError(f"token ids must lie in [0, {spec.input_dim})")
        if spec.kind == "textcnn" and x.shape[1] < max(spec.conv_widths):
            raise ShapeError(f"sequence length {x.shape[1]} shorter than widest filter {max(spec.conv_widths)}")
    elif x.shape[1] != spec.input_dim:
        raise ShapeError(f"{spec.kind} expects {spec.input_dim} features, got {x.shape[1]}")


def _softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    probs = e / s
    rows = np.arange(len(labels))
    # (max - true) + log(sum) keeps each term >= 0 in floating point
    per_example = (m[:, 0] - logits[rows, labels]) + np.log(s[:, 0])
    return float(per_example.mean()), probs


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---- per-kind forward passes; each returns (logits, cache) ----

def _fwd_logreg(p, x):
    return x @ p["W"] + p["b"], None


def _fwd_mlp(spec, p, x):
    acts = [x]
    h = x
    for i in range(len(spec.hidden_dims)):
        h = np.tanh(h @ p[f"W{i}"] + p[f"b{i}"])
        acts.append(h)
    return h @ p["W_out"] + p["b_out"], acts


def _windows(emb: np.ndarray, w: int) -> np.ndarray:
    """(N, L, d) -> (N, L-w+1, w*d); block j of the last axis is token offset j."""
    P = emb.shape[1] - w + 1
    return np.concatenate([emb[:, j : j + P] for j in range(w)], axis=2)


def _fwd_textcnn(spec, p, ids):
    emb = p["emb"][ids]
    feats, cache = [], []
    for w in spec.conv_widths:
        X = _windows(emb, w)
        A = np.tanh(X @ p[f"conv{w}_W"] + p[f"conv{w}_b"])
        arg = A.argmax(axis=1)
        feats.append(np.take_along_axis(A, arg[:, None, :], axis=1)[:, 0, :])
        cache.append((X, A, arg))
    h = np.concatenate(feats, axis=1)
    return h @ p["W_out"] + p["b_out"], (h, cache)


def _fwd_lstm(spec, p, ids):
    N, L = ids.shape
    H = spec.hidden_dims[0]
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    steps = []
    for t in range(L):
        m = (ids[:, t] != 0)[:, None].astype(np.float64)
        x = p["emb"][ids[:, t]]
        a = x @ p["W_x"] + h @ p["W_h"] + p["b_gates"]
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((m, x, h, c, i, f, g, o, tc))
        h = m * h_new + (1 - m) * h
        c = m * c_new + (1 - m) * c
    return h @ p["W_out"] + p["b_out"], (h, steps)


def _logits(spec: ModelSpec, p: dict, x: np.ndarray):
    if spec.kind == "logreg":
        return _fwd_logreg(p, x)
    if spec.kind == "mlp":
        return _fwd_mlp(spec, p, x)
    if spec.kind == "textcnn":
        return _fwd_textcnn(spec, p, x)
    return _fwd_lstm(spec, p, x)


def forward(spec: ModelSpec, params, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``batch`` and the ``(N, num_classes)`` softmax scores."""
    params = as_vector(params)
    p = unpack(spec, params)
    _check_batch(spec, batch)
    x = batch.examples if spec.uses_sequences else batch.examples.astype(np.float64, copy=False)
    logits, _ = _logits(spec, p, x)
    return _softmax_xent(logits, batch.labels)


def value_and_grad(spec: ModelSpec, params, batch: Batch) -> tuple[float, ParameterVector]:
    """Loss and its gradient with respect to every entry of ``params``."""
    params = as_vector(params)
    p = unpack(spec, params)
    _check_batch(spec, batch)
    x = batch.examples if spec.uses_sequences else batch.examples.astype(np.float64, copy=False)
    labels = batch.labels
    N = len(labels)
    logits, cache = _logits(spec, p, x)
    loss, probs = _softmax_xent(logits, labels)
    dlogits = probs.copy()
    dlogits[np.arange(N), labels] -= 1.0
    dlogits /= N

    grad = np.zeros_like(params)
    g = unpack(spec, grad)

    if spec.kind == "logreg":
        g["W"][:] = x.T @ dlogits
        g["b"][:] = dlogits.sum(axis=0)

    elif spec.kind == "mlp":
        acts = cache
        g["W_out"][:] = acts[-1].T @ dlogits
        g["b_out"][:] = dlogits.sum(axis=0)
        dh = dlogits @ p["W_out"].T
        for i in reversed(range(len(spec.hidden_dims))):
            dz = dh * (1.0 - acts[i + 1] ** 2)
            g[f"W{i}"][:] = acts[i].T @ dz
            g[f"b{i}"][:] = dz.sum(axis=0)
            if i:
                dh = dz @ p[f"W{i}"].T

    elif spec.kind == "textcnn":
        h, conv_cache = cache
        d = spec.embed_dim
        F = spec.hidden_dims[0]
        g["W_out"][:] = h.T @ dlogits
        g["b_out"][:] = dlogits.sum(axis=0)
        dh = dlogits @ p["W_out"].T
        demb = np.zeros((N, x.shape[1], d))
        for k, (w, (X, A, arg)) in enumerate(zip(spec.conv_widths, conv_cache)):
            P = A.shape[1]
            dA = np.zeros_like(A)
            np.put_along_axis(dA, arg[:, None, :], dh[:, k * F : (k + 1) * F][:, None, :], axis=1)
            dZ = dA * (1.0 - A**2)
            g[f"conv{w}_W"][:] = X.reshape(-1, w * d).T @ dZ.reshape(-1, F)
            g[f"conv{w}_b"][:] = dZ.sum(axis=(0, 1))
            dX = dZ @ p[f"conv{w}_W"].T
            for j in range(w):
                demb[:, j : j + P] += dX[:, :, j * d : (j + 1) * d]
        np.add.at(g["emb"], x.ravel(), demb.reshape(-1, d))

    else:  # lstm
        h_last, steps = cache
        g["W_out"][:] = h_last.T @ dlogits
        g["b_out"][:] = dlogits.sum(axis=0)
        dh = dlogits @ p["W_out"].T
        dc = np.zeros_like(dh)
        for t in reversed(range(len(steps))):
            m, xt, h_prev, c_prev, i, f, gg, o, tc = steps[t]
            dh_new, dc_new = m * dh, m * dc
            do = dh_new * tc
            dc_new = dc_new + dh_new * o * (1.0 - tc**2)
            da = np.concatenate(
                [
                    dc_new * gg * i * (1.0 - i),
                    dc_new * c_prev * f * (1.0 - f),
                    dc_new * i * (1.0 - gg**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            g["W_x"][:] += xt.T @ da
            g["W_h"][:] += h_prev.T @ da
            g["b_gates"][:] += da.sum(axis=0)
            np.add.at(g["emb"], x[:, t], da @ p["W_x"].T)
            dh = da @ p["W_h"].T + (1 - m) * dh
            dc = dc_new * f + (1 - m) * dc
    return loss, grad


def backward(spec: ModelSpec, params, batch: Batch) -> ParameterVector:
    """Gradient of :func:`forward`'s loss with respect to ``params``."""
    return value_and_grad(spec, params, batch)[1]


def predict_proba(spec: ModelSpec, params, examples: np.ndarray) -> np.ndarray:
    """Softmax scores for unlabeled examples."""
    labels = np.zeros(len(examples), dtype=np.int64)
    return forward(spec, params, Batch(examples, labels))[1]
