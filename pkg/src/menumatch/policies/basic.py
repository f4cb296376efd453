"""Random, greedy and pairwise menus, and the closed-form single-provider optimum."""
from __future__ import annotations

import numpy as np

from ..core import UNMATCHED, Instance
from ..matching import PairAssignment, max_weight_matching


def policy_random(instance: Instance, rng: np.random.Generator) -> np.ndarray:
    """Each entry independently Bernoulli(1/2)."""
    return (rng.random(instance.theta.shape) < 0.5).astype(np.int8)


def policy_greedy(instance: Instance) -> np.ndarray:
    return np.ones(instance.theta.shape, dtype=np.int8)


def pairwise_assignment(instance: Instance) -> PairAssignment:
    return max_weight_matching(instance.theta, instance.capacities)


def assignment_to_assortment(v: np.ndarray, m: int) -> np.ndarray:
    x = np.zeros((len(v), m), dtype=np.int8)
    matched = np.flatnonzero(v != UNMATCHED)
    x[matched, v[matched]] = 1
    return x


def policy_pairwise(instance: Instance) -> np.ndarray:
    """Offer each patient only the provider a maximum-weight matching assigns them."""
    return assignment_to_assortment(pairwise_assignment(instance).v, instance.m_providers)


def single_provider_optimal(theta_col, p: float) -> tuple[int, np.ndarray]:
    """Optimal MQ menu when there is one provider and the uniform choice model.

    Offering the provider to the ``s`` highest-quality patients yields total
    expected quality ``(1 - (1-p)**s) * mean(top s)``; the smallest maximizing
    ``s`` is returned with the corresponding ``(N, 1)`` assortment.
    """
    theta_col = np.asarray(theta_col, dtype=float).ravel()
    n = theta_col.size
    order = np.argsort(-theta_col, kind="stable")
    sizes = np.arange(1, n + 1)
    value = (1.0 - (1.0 - p) ** sizes) * np.cumsum(theta_col[order]) / sizes
    s = int(np.flatnonzero(value >= value.max() - 1e-12)[0]) + 1
    x = np.zeros((n, 1), dtype=np.int8)
    x[order[:s], 0] = 1
    return s, x
