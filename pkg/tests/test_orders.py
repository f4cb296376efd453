import itertools

import numpy as np
import pytest

from menumatch.core import InstanceError
from menumatch.orders import (Batched, Fixed, ProportionalToMeanTheta, UniformRandom, next_responder_weights,
                              orders_from_uniforms, sample_order)


def test_uniform_permutation_frequencies():
    n_draws = 60_000
    u = np.random.default_rng(1).random((n_draws, 3))
    orders = orders_from_uniforms(UniformRandom(), u)
    perms = list(itertools.permutations(range(3)))
    codes = orders @ np.array([9, 3, 1])
    for perm in perms:
        freq = np.mean(codes == np.dot(perm, [9, 3, 1]))
        se = np.sqrt((1 / 6) * (5 / 6) / n_draws)
        assert abs(freq - 1 / 6) <= 4 * se


def test_singleton_batches_are_deterministic():
    order = Batched([[2], [0], [1]])
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert sample_order(order, 3, None, rng).tolist() == [2, 0, 1]


def test_batches_respect_batch_sequence():
    order = Batched([[3, 1], [0, 2]])
    out = orders_from_uniforms(order, np.random.default_rng(2).random((500, 4)))
    assert set(map(tuple, np.sort(out[:, :2], axis=1))) == {(1, 3)}


def test_batches_must_partition():
    with pytest.raises(InstanceError):
        orders_from_uniforms(Batched([[0], [0, 1]]), np.full((1, 2), 0.5))


def test_proportional_dominant_weight_goes_first():
    theta = np.array([[1.0, 1.0], [0.0, 0.0]])
    rng = np.random.default_rng(3)
    first = [sample_order(ProportionalToMeanTheta(), 2, theta, rng)[0] for _ in range(2000)]
    assert np.mean(np.array(first) == 0) > 0.999


def test_proportional_matches_successive_sampling():
    theta = np.array([[0.9], [0.3], [0.6]])
    w = theta.mean(axis=1)
    n_draws = 60_000
    orders = orders_from_uniforms(ProportionalToMeanTheta(), np.random.default_rng(4).random((n_draws, 3)), theta)
    for perm in itertools.permutations(range(3)):
        a, b, c = perm
        exact = w[a] / w.sum() * w[b] / (w[b] + w[c])
        freq = np.mean(np.all(orders == perm, axis=1))
        assert abs(freq - exact) <= 4 * np.sqrt(exact * (1 - exact) / n_draws)


def test_next_responder_weights():
    assert next_responder_weights(Fixed((2, 0, 1)), [0, 1], 1) == [(0, 1.0)]
    assert next_responder_weights(Batched([[0], [1, 2]]), [1, 2], 1) == [(1, 0.5), (2, 0.5)]
    w = dict(next_responder_weights(ProportionalToMeanTheta(), [0, 1], 0, np.array([[0.75], [0.25]])))
    assert w[0] == pytest.approx(0.75)
