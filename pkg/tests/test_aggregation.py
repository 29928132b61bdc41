import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedagg.aggregation import (
    AggregationConfig,
    ClientUpdate,
    aggregate,
    apply_average,
    apply_avgdiff,
    apply_fullbatch,
    avg_difference,
    clients_per_round,
    sample_clients,
    server_objective,
)
from fedagg.errors import ConfigError, ShapeError
from fedagg.model_core import numerical_gradient, relative_error
from fedagg.rng import make_rng

from oracles import server_objective_naive


def upd(k, vec, n=10, loss=0.0):
    return ClientUpdate(k, np.asarray(vec, dtype=float), n, loss)


@pytest.mark.parametrize("K,C,m", [(99, 0.1, 9), (10, 0.05, 1), (5, 1.0, 5), (100, 0.29, 29), (102, 0.1, 10)])
def test_clients_per_round(K, C, m):
    assert clients_per_round(K, C) == m
    ids = sample_clients(K, C, round_index=3, sampling_seed=1)
    assert len(ids) == m == len(set(ids))
    assert ids == sorted(ids) and all(0 <= k < K for k in ids)


def test_sampling_full_and_deterministic():
    assert sample_clients(5, 1.0, 1, 0) == [0, 1, 2, 3, 4]
    assert sample_clients(50, 0.2, 4, 9) == sample_clients(50, 0.2, 4, 9)
    rounds = {tuple(sample_clients(50, 0.2, t, 9)) for t in range(1, 10)}
    assert len(rounds) > 1


def test_sampling_is_roughly_uniform():
    counts = np.zeros(10)
    for t in range(2000):
        counts[sample_clients(10, 0.3, t, 5)] += 1
    assert np.all(np.abs(counts / 2000 - 0.3) < 0.04)


def test_server_objective_examples():
    assert server_objective([0, 0], [[0, 0]]) == 0.0
    assert server_objective([1, 0], [[0, 0], [2, 0]]) == 0.5
    with pytest.raises(ConfigError):
        server_objective([1.0], [])


def test_avg_difference_examples():
    np.testing.assert_array_equal(avg_difference([1, 2], [[0, 0], [2, 4]]), [0, 0])
    np.testing.assert_array_equal(avg_difference([1, 2], [[0, 0], [4, 4]]), [-1, 0])
    theta, single = np.array([0.3, -1.7, 2.5]), np.array([1.1, 0.2, -0.4])
    np.testing.assert_array_equal(avg_difference(theta, [single]), theta - single)
    with pytest.raises(ShapeError):
        avg_difference([1, 2], [[1, 2, 3]])


def test_apply_avgdiff_examples():
    np.testing.assert_array_equal(apply_avgdiff([1, 2], [[0, 0], [4, 4]], 0.5), [1.5, 2.0])
    np.testing.assert_array_equal(apply_avgdiff([1, 2], [[0, 0], [4, 4]], 1.0), [2.0, 2.0])
    theta = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(apply_avgdiff(theta, [theta, theta.copy()], 0.3), theta)
    for eps in (0.0, 1.5):
        with pytest.raises(ConfigError):
            apply_avgdiff(theta, [theta], eps)


def test_apply_average_examples():
    np.testing.assert_array_equal(apply_average([upd(0, [0, 0], 10), upd(1, [2, 2], 30)]), [1.5, 1.5])
    np.testing.assert_array_equal(apply_average([upd(0, [1, 3]), upd(1, [3, 5])]), [2, 4])
    np.testing.assert_array_equal(apply_average([upd(4, [7, 8])]), [7, 8])
    with pytest.raises(ConfigError):
        apply_average([])


def test_apply_fullbatch():
    ups = [upd(k, [k, 2 * k]) for k in range(3)]
    np.testing.assert_array_equal(apply_fullbatch(ups, 3), [1, 2])
    assert apply_fullbatch(ups, 3).tobytes() == apply_average(ups).tobytes()
    np.testing.assert_array_equal(apply_fullbatch([upd(0, [5.0])], 1), [5.0])
    with pytest.raises(ConfigError):
        apply_fullbatch(ups[:2], 3)


def test_aggregate_outputs_are_read_only():
    out = aggregate(AggregationConfig(strategy="average"), np.zeros(2), [upd(0, [1, 1])])
    with pytest.raises(ValueError):
        out[0] = 3.0


def _random_instance(seed, n_clients=None, dim=None):
    rng = make_rng(seed, 0)
    n_clients = n_clients or int(rng.integers(1, 8))
    dim = dim or int(rng.integers(1, 30))
    return rng.normal(size=dim), [rng.normal(size=dim) * 3 for _ in range(n_clients)]


@pytest.mark.parametrize("seed", range(5))
def test_objective_gradient_is_avg_difference(seed):
    theta, clients = _random_instance(seed)
    assert server_objective(theta, clients) == pytest.approx(server_objective_naive(theta, clients), rel=1e-12)
    numeric = numerical_gradient(lambda v: server_objective(v, clients), theta)
    assert relative_error(avg_difference(theta, clients), numeric).max() < 1e-6


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.integers(1, 6), st.integers(1, 20))
def test_eps_one_equals_average_for_equal_shards(seed, n_clients, dim):
    theta, clients = _random_instance(seed, n_clients, dim)
    ups = [upd(k, v, n=50) for k, v in enumerate(clients)]
    np.testing.assert_allclose(apply_avgdiff(theta, clients, 1.0), apply_average(ups), rtol=0, atol=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.floats(0.01, 1.0), st.integers(1, 6))
def test_avgdiff_is_convex_combination(seed, eps, n_clients):
    theta, clients = _random_instance(seed, n_clients)
    expected = (1 - eps) * theta + eps * np.mean(clients, axis=0)
    np.testing.assert_allclose(apply_avgdiff(theta, clients, eps), expected, atol=1e-12)


@pytest.mark.parametrize("eps", [0.25, 0.5, 1.0])
def test_fixed_clients_converge_geometrically(eps):
    theta, targets = _random_instance(17, 4, 6)
    mean = np.mean(targets, axis=0)
    start = np.linalg.norm(theta - mean)
    for t in range(1, 21):
        theta = apply_avgdiff(theta, targets, eps)
        assert np.linalg.norm(theta - mean) == pytest.approx((1 - eps) ** t * start, abs=1e-10)


@settings(max_examples=25)
@given(st.permutations(range(5)), st.sampled_from(["average", "avgdiff"]))
def test_aggregate_permutation_invariant(perm, strategy):
    theta, clients = _random_instance(3, 5, 8)
    ups = [upd(k, v, n=10 + k) for k, v in enumerate(clients)]
    cfg = AggregationConfig(strategy=strategy, epsilon=0.7)
    a = aggregate(cfg, theta, ups)
    b = aggregate(cfg, theta, [ups[i] for i in perm])
    assert a.tobytes() == b.tobytes()


def test_aggregate_rejects_duplicates():
    with pytest.raises(ConfigError):
        aggregate(AggregationConfig(strategy="average"), np.zeros(1), [upd(0, [1.0]), upd(0, [2.0])])


def test_fullbatch_aggregate_with_dropouts_shrinks_divisor():
    cfg = AggregationConfig(strategy="fullbatch", fraction=1.0, local_epochs=1, num_clients=3)
    out = aggregate(cfg, np.zeros(1), [upd(0, [1.0]), upd(2, [3.0])])
    np.testing.assert_array_equal(out, [2.0])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(strategy="median"),
        dict(epsilon=0.0),
        dict(epsilon=1.2),
        dict(fraction=0.0),
        dict(num_clients=0),
        dict(local_epochs=0),
        dict(local_lr=0.0),
        dict(strategy="fullbatch", fraction=0.5, local_epochs=1),
        dict(strategy="fullbatch", fraction=1.0, local_epochs=5),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        AggregationConfig(**kwargs)


@given(arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)))
def test_single_client_avgdiff_eps_one_returns_client(vec):
    np.testing.assert_allclose(apply_avgdiff(np.ones(4), [vec], 1.0), vec, atol=1e-12)
