"""Order-aware menus, the envy graph over pairwise partners, and batch planning."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import UNMATCHED, Instance, InstanceError
from ..orders import Batched, Fixed
from .basic import assignment_to_assortment, pairwise_assignment


class EnvyCycleError(RuntimeError):
    """The envy graph has a cycle, which an optimal pairwise matching rules out."""


@dataclass(frozen=True)
class EnvyGraph:
    """``adjacency[i, k]`` is True when ``i`` weakly prefers ``k``'s pairwise provider to its own."""

    adjacency: np.ndarray
    v: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> list[tuple[int, int]]:
        return [(int(a), int(b)) for a, b in zip(*np.nonzero(self.adjacency))]


@dataclass(frozen=True)
class BatchPlan:
    batches: tuple
    within_batch_edges: int

    def as_order(self) -> Batched:
        return Batched(self.batches)


def compute_envy_graph(instance: Instance, v=None) -> EnvyGraph:
    theta = instance.theta
    n = theta.shape[0]
    v = pairwise_assignment(instance).v if v is None else np.asarray(v)
    matched = v != UNMATCHED
    vc = np.where(matched, v, 0)
    own = theta[np.arange(n), vc]
    other = theta[:, vc]  # other[i, k] = theta[i, v_k]
    adj = np.where(matched[:, None], own[:, None] <= other, True)
    adj &= matched[None, :]
    adj &= v[:, None] != v[None, :]
    np.fill_diagonal(adj, False)
    graph = EnvyGraph(adj, v.copy())
    reverse_topological_order(graph)  # raises on a cycle
    return graph


def reverse_topological_order(graph: EnvyGraph) -> list[int]:
    """Sinks first; among ready nodes the lowest patient index goes first."""
    adj = graph.adjacency
    n = adj.shape[0]
    out_deg = adj.sum(axis=1).astype(int)
    ready = [i for i in range(n) if out_deg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        k = heapq.heappop(ready)
        order.append(k)
        for i in np.flatnonzero(adj[:, k]):
            out_deg[i] -= 1
            if out_deg[i] == 0:
                heapq.heappush(ready, int(i))
    if len(order) != n:
        stuck = sorted(set(range(n)) - set(order))
        raise EnvyCycleError(f"envy graph has a cycle among patients {stuck}")
    return order


def _within_cost_table(adj: np.ndarray, order: list[int]) -> np.ndarray:
    a = adj[np.ix_(order, order)].astype(np.int64)
    c = np.zeros((len(order) + 1,) * 2, dtype=np.int64)
    c[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    return c


def _segment_cost(c: np.ndarray, lo, hi):
    return c[hi, hi] - c[lo, hi] - c[hi, lo] + c[lo, lo]


def topological_batches(instance: Instance, n_batches: int, graph: EnvyGraph | None = None) -> BatchPlan:
    """Cut the reverse topological order into ``n_batches`` contiguous batches.

    Minimizes the number of envy edges inside batches; among equal costs the
    most even split (smallest sum of squared sizes) wins, then the earliest cuts.
    """
    if n_batches < 1:
        raise ValueError("number of batches must be >= 1")
    graph = graph or compute_envy_graph(instance)
    order = reverse_topological_order(graph)
    n = len(order)
    big = n_batches if n_batches <= n else n
    c = _within_cost_table(graph.adjacency, order)
    inf = np.iinfo(np.int64).max // 4
    idx = np.arange(n + 1)
    # cost[l, b], spread[l, b]: first b patients split into l batches
    cost = np.full((big + 1, n + 1), inf, dtype=np.int64)
    spread = np.full((big + 1, n + 1), inf, dtype=np.int64)
    back = np.zeros((big + 1, n + 1), dtype=np.int64)
    cost[0, 0] = spread[0, 0] = 0
    for layer in range(1, big + 1):
        for b in range(layer, n + 1):
            a = idx[layer - 1:b]
            ok = cost[layer - 1, a] < inf
            cand_c = np.where(ok, cost[layer - 1, a] + _segment_cost(c, a, b), inf)
            cand_s = np.where(ok, spread[layer - 1, a] + (b - a) ** 2, inf)
            best = np.lexsort((a, cand_s, cand_c))[0]
            cost[layer, b], spread[layer, b], back[layer, b] = cand_c[best], cand_s[best], a[best]
    cuts = [n]
    for layer in range(big, 0, -1):
        cuts.append(int(back[layer, cuts[-1]]))
    cuts.reverse()
    batches = tuple(tuple(order[cuts[k]:cuts[k + 1]]) for k in range(big))
    return BatchPlan(batches, int(cost[big, n]))


def _ranks(known, n: int) -> np.ndarray:
    if isinstance(known, BatchPlan):
        known = known.as_order()
    if isinstance(known, Batched):
        known.check(n)
        rank = np.empty(n, dtype=np.int64)
        for k, b in enumerate(known.batches):
            rank[list(b)] = k
        return rank
    sigma = np.asarray(known.sigma if isinstance(known, Fixed) else known, dtype=np.int64)
    if sorted(sigma.tolist()) != list(range(n)):
        raise InstanceError(f"known order must be a permutation of 0..{n - 1}")
    rank = np.empty(n, dtype=np.int64)
    rank[sigma] = np.arange(n)
    return rank


def policy_order_aware(instance: Instance, known: Sequence[int] | Fixed | Batched | BatchPlan) -> np.ndarray:
    """Pairwise menus plus the partners of patients guaranteed to respond earlier.

    Patient ``k`` is additionally offered ``v_i`` when ``i`` responds strictly
    before ``k`` (earlier position, or earlier batch) and ``k`` weakly prefers
    ``v_i`` to its own pairwise provider; unmatched patients prefer any provider.
    """
    theta = instance.theta
    n, m = theta.shape
    v = pairwise_assignment(instance).v
    x = assignment_to_assortment(v, m)
    rank = _ranks(known, n)
    matched = v != UNMATCHED
    vc = np.where(matched, v, 0)
    own = np.where(matched, theta[np.arange(n), vc], -np.inf)
    # add[k, i]: offer v_i to k
    add = (rank[None, :] < rank[:, None]) & matched[None, :] & (theta[:, vc] >= own[:, None])
    ks, is_ = np.nonzero(add)
    x[ks, v[is_]] = 1
    return x
