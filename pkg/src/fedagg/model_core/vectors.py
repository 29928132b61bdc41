"""Flat parameter-vector arithmetic.

A parameter vector is a 1-D ``float64`` numpy array holding every weight of one
model. Functions here never modify their inputs and always return a new array.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..errors import ConfigError, ShapeError

ParameterVector = np.ndarray


def as_vector(values) -> ParameterVector:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise ShapeError(f"parameter vector must be 1-D, got shape {vec.shape}")
    return vec


def check_finite(vec: ParameterVector, what: str = "parameter vector") -> ParameterVector:
    if not np.all(np.isfinite(vec)):
        raise FloatingPointError(f"{what} contains non-finite entries")
    return vec


def _check_same_length(*vecs: ParameterVector) -> None:
    n = len(vecs[0])
    for v in vecs[1:]:
        if len(v) != n:
            raise ShapeError(f"length mismatch: {n} vs {len(v)}")


def vec_axpy(a: float, x, y) -> ParameterVector:
    """Return ``a * x + y``."""
    x, y = as_vector(x), as_vector(y)
    _check_same_length(x, y)
    return check_finite(a * x + y)


def vec_sub(x, y) -> ParameterVector:
    x, y = as_vector(x), as_vector(y)
    _check_same_length(x, y)
    return check_finite(x - y)


def vec_scale(a: float, x) -> ParameterVector:
    return check_finite(a * as_vector(x))


def vec_sum(vectors: Sequence) -> ParameterVector:
    """Sum vectors strictly left to right.

    The accumulation order is fixed so that callers who pass vectors sorted by
    client id get bit-identical results however the vectors were produced.
    """
    if len(vectors) == 0:
        raise ConfigError("cannot reduce an empty set of vectors")
    vecs = [as_vector(v) for v in vectors]
    _check_same_length(*vecs)
    acc = vecs[0].copy()
    for v in vecs[1:]:
        acc += v
    return acc


def vec_mean(vectors: Sequence) -> ParameterVector:
    """Unweighted mean, summed in the given order (see :func:`vec_sum`)."""
    return check_finite(vec_sum(vectors) / len(vectors))


def vec_weighted_mean(vectors: Sequence, weights: Sequence[float]) -> ParameterVector:
    """``sum_k (w_k / sum_j w_j) * v_k`` accumulated in the given order."""
    if len(vectors) != len(weights):
        raise ShapeError(f"{len(vectors)} vectors but {len(weights)} weights")
    if len(vectors) == 0:
        raise ConfigError("cannot reduce an empty set of vectors")
    total = float(sum(weights))
    if not total > 0:
        raise ConfigError("weights must sum to a positive value")
    return check_finite(vec_sum([(w / total) * as_vector(v) for v, w in zip(vectors, weights)]))


def sgd_step(params, gradient, lr: float) -> ParameterVector:
    """Plain gradient-descent update ``params - lr * gradient``."""
    params, gradient = as_vector(params), as_vector(gradient)
    _check_same_length(params, gradient)
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    return check_finite(params - lr * gradient, "updated parameters")
