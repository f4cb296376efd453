"""Group-based menus: merge pairwise menus of patients whose sharing raises expected quality."""
from __future__ import annotations

import numpy as np

from ..choice import acceptance_probability
from ..core import MNL, Instance, Threshold
from ..matching import solve_group_subproblem
from .basic import assignment_to_assortment, pairwise_assignment


def _two_provider_probs(spec, t_a, t_b, ok_a, ok_b, idx_a, idx_b):
    """Selection probabilities over a menu of at most two providers ``a`` and ``b``."""
    if isinstance(spec, MNL):
        e_a = np.where(ok_a, np.exp(t_a), 0.0)
        e_b = np.where(ok_b, np.exp(t_b), 0.0)
        d = np.exp(spec.gamma) + e_a + e_b
        return e_a / d, e_b / d
    pick_a = ok_a & (~ok_b | (t_a > t_b) | ((t_a == t_b) & (idx_a < idx_b)))
    pick_b = ok_b & ~pick_a
    acc = np.full(np.shape(pick_a), spec.p)
    if isinstance(spec, Threshold):
        acc = np.where(np.where(pick_a, t_a, t_b) >= spec.alpha, acc, 0.0)
    return pick_a * acc, pick_b * acc


def _union_quality(spec, first_a, first_b, second_a, second_b, has_a, has_b, reuse_a, reuse_b, ia, ib):
    """Expected total quality when two patients share a menu and respond in a fixed order."""
    pa, pb = _two_provider_probs(spec, first_a, first_b, has_a, has_b, ia, ib)
    q = pa * first_a + pb * first_b

    def second(ok_a, ok_b):
        sa, sb = _two_provider_probs(spec, second_a, second_b, ok_a, ok_b, ia, ib)
        return sa * second_a + sb * second_b

    q = q + pa * second(has_a & reuse_a, has_b)
    q = q + pb * second(has_a, has_b & reuse_b)
    return q + (1.0 - pa - pb) * second(has_a, has_b)


def _gain_block(instance: Instance, v: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    theta = instance.theta
    spec = instance.choice
    n = theta.shape[0]
    caps = instance.capacities
    vc = np.maximum(v, 0)
    own = theta[np.arange(n), vc]
    va, vb = v[rows][:, None], v[cols][None, :]
    has_a, has_b = va >= 0, vb >= 0
    distinct = has_a | has_b
    distinct &= va != vb
    # quality of row patient for column patient's provider, and vice versa
    t_a_b = theta[rows[:, None], vc[cols][None, :]]
    t_b_a = theta[cols[None, :], vc[rows][:, None]]
    t_a_a = own[rows][:, None]
    t_b_b = own[cols][None, :]
    ia, ib = vc[rows][:, None], vc[cols][None, :]
    reuse_a = caps[ia] >= 2
    reuse_b = caps[ib] >= 2
    has_b2 = has_b & distinct
    base = has_a * t_a_a * acceptance_probability(spec, t_a_a) + has_b * t_b_b * acceptance_probability(spec, t_b_b)
    a_first = _union_quality(spec, t_a_a, t_a_b, t_b_a, t_b_b, has_a, has_b2, reuse_a, reuse_b, ia, ib)
    b_first = _union_quality(spec, t_b_a, t_b_b, t_a_a, t_a_b, has_a, has_b2, reuse_a, reuse_b, ia, ib)
    gain = (0.5 * (a_first + b_first) - base) / n
    gain = np.where(distinct, gain, 0.0)
    return np.where(rows[:, None] == cols[None, :], 0.0, gain)


def pairwise_swap_gain(instance: Instance, v: np.ndarray, i: int, i2: int) -> float:
    """Exact change in MQ from letting ``i`` and ``i2`` share their pairwise providers.

    The difference is evaluated on the two-patient subsystem; with disjoint
    pairwise menus nobody else is affected, so this is the exact gain.
    """
    return float(_gain_block(instance, np.asarray(v), np.array([i]), np.array([i2]))[0, 0])


def swap_gains(instance: Instance, v: np.ndarray, block: int = 256) -> np.ndarray:
    """All pairwise gains ``alpha[i, i2]`` as a symmetric matrix with zero diagonal."""
    n = instance.n_patients
    v = np.asarray(v)
    cols = np.arange(n)
    out = np.empty((n, n))
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        out[rows] = _gain_block(instance, v, rows, cols)
    return out


def policy_group(instance: Instance, exact_threshold: int = 20, node_limit: int = 20_000,
                 matched_only: bool = False) -> np.ndarray:
    """Start from pairwise menus and repeatedly merge the best-scoring group.

    Each round solves the group subproblem on the not-yet-grouped patients;
    every member is then offered the pairwise providers of all members.  Stops
    when the best group has a nonpositive score.

    Every patient is eligible, including those without a pairwise provider;
    such a patient only receives the providers of the other members.  With
    ``matched_only`` those patients keep an empty menu, which pins the match
    rate to the pairwise rate at the cost of most of the gain when patients
    outnumber providers.
    """
    pa = pairwise_assignment(instance)
    v = pa.v
    x = assignment_to_assortment(v, instance.m_providers)
    alpha = swap_gains(instance, v)
    remaining = np.flatnonzero(v >= 0) if matched_only else np.arange(instance.n_patients)
    while remaining.size > 1:
        sel = solve_group_subproblem(alpha[np.ix_(remaining, remaining)], exact_threshold, node_limit)
        if sel.s <= 0:
            break
        members = remaining[sel.q.astype(bool)]
        providers = v[members]
        x[np.ix_(members, providers[providers >= 0])] = 1
        remaining = remaining[~sel.q.astype(bool)]
    return x
