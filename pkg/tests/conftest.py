"""Shared fixtures and an independent brute-force evaluator.

The brute-force evaluator enumerates every response order and every choice
outcome explicitly, with its own choice-model code, so it shares nothing with
the package's dynamic-programming oracle.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from menumatch.core import MNL, Instance, Threshold, Uniform


def _outcomes(spec, theta_row, avail):
    """List of (provider or -1, probability) for one decision, written from the model definitions."""
    idx = [j for j in range(len(theta_row)) if avail[j]]
    if not idx:
        return [(-1, 1.0)]
    if isinstance(spec, MNL):
        denom = math.exp(spec.gamma) + sum(math.exp(theta_row[j]) for j in idx)
        out = [(j, math.exp(theta_row[j]) / denom) for j in idx]
        return out + [(-1, math.exp(spec.gamma) / denom)]
    best = idx[0]
    for j in idx[1:]:
        if theta_row[j] > theta_row[best]:
            best = j
    if isinstance(spec, Threshold) and theta_row[best] < spec.alpha:
        return [(-1, 1.0)]
    return [(best, spec.p), (-1, 1.0 - spec.p)]


def brute_force_metrics(instance: Instance, x=None, menu=None, orders=None):
    """Exact (MR, MQ) by listing all orders (uniform unless ``orders`` gives (sigma, weight) pairs)."""
    theta = np.asarray(instance.theta)
    n, m = theta.shape
    spec = instance.choice
    if orders is None:
        perms = list(itertools.permutations(range(n)))
        orders = [(p, 1.0 / len(perms)) for p in perms]
    total_r = total_q = 0.0
    for sigma, w_order in orders:
        def walk(t, remaining, pending, prob, matched, quality):
            nonlocal total_r, total_q
            if t == n:
                total_r += w_order * prob * matched
                total_q += w_order * prob * quality
                return
            i = sigma[t]
            offered = (np.asarray(menu(i, pending.copy(), remaining.copy()), dtype=bool)
                       if menu is not None else np.asarray(x[i], dtype=bool))
            avail = [bool(offered[j] and remaining[j] > 0) for j in range(m)]
            nxt_pending = pending.copy()
            nxt_pending[i] = False
            for j, pr in _outcomes(spec, theta[i], avail):
                if pr == 0:
                    continue
                if j < 0:
                    walk(t + 1, remaining, nxt_pending, prob * pr, matched, quality)
                else:
                    rem = remaining.copy()
                    rem[j] -= 1
                    walk(t + 1, rem, nxt_pending, prob * pr, matched + 1, quality + theta[i, j])
        walk(0, np.array(instance.capacities), np.ones(n, dtype=bool), 1.0, 0, 0.0)
    return total_r / n, total_q / n


@pytest.fixture
def example2() -> Instance:
    return Instance(np.array([[0.7], [0.7], [0.1]]), choice=Uniform(0.75))


@pytest.fixture
def example1_theta() -> np.ndarray:
    return np.array([[0.5, 0.6, 0.9], [0.7, 0.5, 0.4], [0.6, 0.2, 0.8]])


def random_instance(rng, n, m, p=None, caps=None, choice=None) -> Instance:
    if choice is None:
        choice = Uniform(float(p if p is not None else rng.uniform(0.1, 1.0)))
    return Instance(rng.random((n, m)), caps, choice)
