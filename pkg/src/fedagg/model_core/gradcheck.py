"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import make_rng
from .models import Batch, ModelSpec, forward, init_params, value_and_grad

# Below this magnitude both gradients are treated as zero; FD round-off at h=1e-5 is ~1e-11.
REL_ERR_FLOOR = 1e-6


def numerical_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every coordinate."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(len(x)):
        orig = x[i]
        x[i] = orig + h
        fp = fn(x)
        x[i] = orig - h
        fm = fn(x)
        x[i] = orig
        grad[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = REL_ERR_FLOOR) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class GradCheckResult:
    kind: str
    num_params: int
    max_rel_error: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def gradcheck_spec(kind: str, seed: int = 0) -> ModelSpec:
    """Small architecture used for finite-difference checks."""
    common = dict(num_classes=3, init_seed=seed)
    if kind == "logreg":
        return ModelSpec("logreg", 6, **common)
    if kind == "mlp":
        return ModelSpec("mlp", 6, hidden_dims=(5, 4), **common)
    if kind == "textcnn":
        return ModelSpec("textcnn", 12, embed_dim=4, hidden_dims=(3,), conv_widths=(2, 3, 4), **common)
    if kind == "lstm":
        return ModelSpec("lstm", 12, embed_dim=4, hidden_dims=(5,), **common)
    raise ValueError(f"unknown model kind {kind!r}")


def random_batch(spec: ModelSpec, n: int, seed: int, seq_len: int = 8) -> Batch:
    """Generic random batch; token sequences get random lengths with trailing padding."""
    rng = make_rng(seed, 7)
    labels = rng.integers(0, spec.num_classes, n)
    if not spec.uses_sequences:
        return Batch(rng.normal(size=(n, spec.input_dim)), labels)
    ids = rng.integers(1, spec.input_dim, (n, seq_len))
    lengths = rng.integers(max(spec.conv_widths) if spec.kind == "textcnn" else 1, seq_len + 1, n)
    for r, length in enumerate(lengths):
        ids[r, length:] = 0
    return Batch(ids, labels)


def check_gradient(spec: ModelSpec, params: np.ndarray, batch: Batch, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient and central differences."""
    _, analytic = value_and_grad(spec, params, batch)
    numeric = numerical_gradient(lambda v: forward(spec, v, batch)[0], params, h)
    return float(relative_error(analytic, numeric).max())


def run_gradcheck(kind: str, seed: int = 0, n: int = 5) -> GradCheckResult:
    spec = gradcheck_spec(kind, seed)
    # Glorot init is small enough to leave every unit in its smooth regime; scale up to
    # exercise saturation and non-trivial softmax outputs.
    params = init_params(spec) * 2.0
    batch = random_batch(spec, n, seed)
    return GradCheckResult(kind, len(params), check_gradient(spec, params, batch))
