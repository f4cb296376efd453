"""Combinatorial solvers: capacitated max-weight bipartite matching and the group-formation BQP."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import UNMATCHED


@dataclass(frozen=True)
class PairAssignment:
    v: np.ndarray  # v[i] = provider of patient i or UNMATCHED
    weight: float

    def matched(self) -> np.ndarray:
        return np.flatnonzero(self.v != UNMATCHED)


@dataclass(frozen=True)
class GroupSelection:
    q: np.ndarray  # 0/1 over the remaining patients
    s: float


def max_weight_matching(weights, capacities=None) -> PairAssignment:
    """Exact maximum-weight assignment of patients to providers with capacities.

    Provider ``j`` is expanded into ``min(c_j, N)`` unit slots and the resulting
    rectangular assignment problem is solved exactly.  The solver always returns
    a matching of maximum cardinality ``min(N, sum c)``; because weights are
    nonnegative and the graph is complete, any maximum-weight matching extends
    to one of full cardinality without losing weight, so this is also a
    maximum-weight matching overall.
    """
    w = np.asarray(weights, dtype=float)
    n, m = w.shape
    if capacities is None:
        capacities = np.ones(m, dtype=np.int64)
    caps = np.minimum(np.asarray(capacities, dtype=np.int64), n)
    v = np.full(n, UNMATCHED, dtype=np.int64)
    if n == 0 or m == 0 or caps.sum() == 0:
        return PairAssignment(v, 0.0)
    if np.any(w < 0):
        raise ValueError("max_weight_matching needs nonnegative weights")
    slots = np.repeat(np.arange(m), caps)
    rows, cols = linear_sum_assignment(w[:, slots], maximize=True)
    v[rows] = slots[cols]
    return PairAssignment(v, float(w[rows, slots[cols]].sum()))


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    count = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        count += (x & np.uint64(1)).astype(np.int64)
        x >>= np.uint64(1)
    return count


def _enumerate_groups(alpha: np.ndarray, tol: float) -> np.ndarray:
    """Global maximizer by enumerating all ``2**k`` subsets (bit ``i`` = patient ``i``)."""
    k = alpha.shape[0]
    vals = np.zeros(1)
    for b in range(k):
        contrib = np.zeros(1)
        for i in range(b):
            contrib = np.concatenate([contrib, contrib + alpha[b, i]])
        vals = np.concatenate([vals, vals + contrib])
    best = vals.max()
    cands = np.flatnonzero(vals >= best - tol)
    sizes = _popcount(cands)
    chosen = int(cands[np.flatnonzero(sizes == sizes.min())[0]])
    return np.array([(chosen >> i) & 1 for i in range(k)], dtype=np.int8)


def _local_search(alpha: np.ndarray, tol: float, max_flips: int = 100_000) -> np.ndarray:
    k = alpha.shape[0]
    q = np.zeros(k, dtype=bool)
    iu, ju = np.triu_indices(k, 1)
    best_pair = int(np.argmax(alpha[iu, ju]))
    if alpha[iu[best_pair], ju[best_pair]] > tol:
        q[iu[best_pair]] = q[ju[best_pair]] = True
    link = alpha[:, q].sum(axis=1)  # sum of alpha to current members
    for _ in range(max_flips):
        gain = np.where(q, -link, link)
        i = int(np.argmax(gain))
        if gain[i] <= tol:
            break
        q[i] = ~q[i]
        link += alpha[:, i] if q[i] else -alpha[:, i]
    return q.astype(np.int8)


def _branch_and_bound(alpha: np.ndarray, incumbent: np.ndarray, tol: float, node_limit: int) -> np.ndarray:
    """Depth-first search with the bound ``sum_i max(0, fixed_i + sum_{j>i} max(alpha_ij, 0))``."""
    k = alpha.shape[0]
    pos = np.maximum(alpha, 0.0)
    order = np.argsort(-pos.sum(axis=1), kind="stable")
    a = alpha[np.ix_(order, order)]
    pos_after = np.triu(np.maximum(a, 0.0), 1).sum(axis=1)
    inc_q = incumbent[order].astype(bool)
    best_val = 0.5 * float(inc_q @ a @ inc_q)
    best = inc_q.copy()

    stack = [(0, 0.0, np.zeros(k), ())]
    nodes = 0
    while stack and nodes < node_limit:
        d, cur, inn, chosen = stack.pop()
        nodes += 1
        if cur > best_val + tol:
            best_val = cur
            best = np.zeros(k, dtype=bool)
            best[list(chosen)] = True
        if d == k:
            continue
        bound = cur + np.maximum(0.0, inn[d:] + pos_after[d:]).sum()
        if bound <= best_val + tol:
            continue
        # push the exclude branch first so the include branch is explored first
        stack.append((d + 1, cur, inn, chosen))
        stack.append((d + 1, cur + inn[d], inn + a[d], chosen + (d,)))
    out = np.zeros(k, dtype=np.int8)
    out[order[best]] = 1
    return out


def solve_group_subproblem(alpha, exact_threshold: int = 20, node_limit: int = 20_000,
                           tol: float = 1e-12) -> GroupSelection:
    """Maximize ``sum_{i<i'} q_i q_i' alpha_{i,i'}`` over binary ``q``.

    Exact by enumeration when ``len(alpha) <= exact_threshold``; otherwise a
    local-search incumbent (never worse than the best pair) refined by a
    node-limited branch and bound.  Ties go to the smallest group.
    """
    alpha = np.asarray(alpha, dtype=float)
    k = alpha.shape[0]
    if k == 0:
        return GroupSelection(np.zeros(0, dtype=np.int8), 0.0)
    if k == 1:
        return GroupSelection(np.zeros(1, dtype=np.int8), 0.0)
    if k <= exact_threshold:
        q = _enumerate_groups(alpha, tol)
    else:
        q = _branch_and_bound(alpha, _local_search(alpha, tol), tol, node_limit)
    s = 0.5 * float(q @ alpha @ q)
    if s <= tol:
        return GroupSelection(np.zeros(k, dtype=np.int8), 0.0)
    return GroupSelection(q, s)
