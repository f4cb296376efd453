"""Response-order distributions.

Orders are generated from one uniform key per patient, which lets the
simulator draw all trial orders in a single vectorized call while sharing
exactly the same variates across policies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InstanceError


@dataclass(frozen=True)
class UniformRandom:
    pass


@dataclass(frozen=True)
class ProportionalToMeanTheta:
    """Successive sampling without replacement with weight ``mean_j theta[i, j]``."""

    floor: float = 1e-9


@dataclass(frozen=True)
class Batched:
    """Batches respond in sequence; order within a batch is uniformly random."""

    batches: tuple

    def __post_init__(self):
        object.__setattr__(self, "batches", tuple(tuple(int(i) for i in b) for b in self.batches))

    def check(self, n: int) -> None:
        flat = sorted(i for b in self.batches for i in b)
        if flat != list(range(n)) or any(len(b) == 0 for b in self.batches):
            raise InstanceError(f"batches must partition 0..{n - 1} into nonempty parts")


@dataclass(frozen=True)
class Fixed:
    """A known, deterministic order."""

    sigma: tuple

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(int(i) for i in self.sigma))


@dataclass(frozen=True)
class EnvyBatches:
    """Batches planned from the envy graph of the instance being simulated.

    A placeholder resolved to a concrete :class:`Batched` order per instance by
    the simulator; it carries only the number of batches.
    """

    n_batches: int


OrderDistribution = UniformRandom | ProportionalToMeanTheta | Batched | Fixed


def patient_weights(order: ProportionalToMeanTheta, theta) -> np.ndarray:
    return np.maximum(np.asarray(theta, dtype=float).mean(axis=1), order.floor)


def orders_from_uniforms(order: OrderDistribution, u: np.ndarray, theta=None) -> np.ndarray:
    """Map keys ``u`` of shape ``(T, N)`` in (0, 1) to ``T`` response orders."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    t, n = u.shape
    if isinstance(order, UniformRandom):
        return np.argsort(u, axis=1, kind="stable")
    if isinstance(order, ProportionalToMeanTheta):
        # Efraimidis-Spirakis keys: sorting log(u)/w descending is successive sampling.
        w = patient_weights(order, theta)
        keys = np.log(u) / w[None, :]
        return np.argsort(-keys, axis=1, kind="stable")
    if isinstance(order, Batched):
        order.check(n)
        batch_of = np.empty(n)
        for k, b in enumerate(order.batches):
            batch_of[list(b)] = k
        return np.argsort(batch_of[None, :] + u, axis=1, kind="stable")
    if isinstance(order, Fixed):
        sigma = np.asarray(order.sigma, dtype=np.int64)
        if sigma.shape != (n,):
            raise InstanceError(f"fixed order has length {sigma.shape[0]}, expected {n}")
        return np.broadcast_to(sigma, (t, n)).copy()
    raise TypeError(f"unknown order distribution {order!r}")


def sample_order(order: OrderDistribution, n: int, theta, rng: np.random.Generator) -> np.ndarray:
    """Draw one response order; ``sigma[t]`` is the index of the t-th responder."""
    u = rng.random((1, n))
    # keys must be strictly positive for the log in the proportional variant
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return orders_from_uniforms(order, u, theta)[0]


def next_responder_weights(order: OrderDistribution, pending: list[int], n_done: int,
                           theta=None) -> list[tuple[int, float]]:
    """Exact distribution of the next responder given the set still pending.

    Used by the exact oracle; ``pending`` must be consistent with ``order``
    (e.g. for batches, earlier batches are exhausted first).
    """
    if isinstance(order, UniformRandom):
        w = 1.0 / len(pending)
        return [(i, w) for i in pending]
    if isinstance(order, Fixed):
        return [(order.sigma[n_done], 1.0)]
    if isinstance(order, Batched):
        pend = set(pending)
        for b in order.batches:
            live = [i for i in b if i in pend]
            if live:
                w = 1.0 / len(live)
                return [(i, w) for i in live]
        return []
    if isinstance(order, ProportionalToMeanTheta):
        w = patient_weights(order, theta)[pending]
        w = w / w.sum()
        return list(zip(pending, w.tolist()))
    raise TypeError(f"unknown order distribution {order!r}")
