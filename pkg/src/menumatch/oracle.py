"""Exact expected match rate and match quality on small instances.

The expectation over response orders is computed by dynamic programming over
``(set of patients who already responded, remaining capacities)``: given that
pair, the distribution of the next responder and of their selection is fully
determined, so every order is accounted for without listing all ``N!`` of them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .choice import best_offered, selection_probabilities
from .core import MNL, Instance, Threshold, validate_assortment
from .orders import OrderDistribution, UniformRandom, next_responder_weights

MAX_PATIENTS = 8
MAX_ENUMERATION_CELLS = 16

# menu(patient, pending, remaining) -> offered mask; ``pending`` includes ``patient``
DynamicMenu = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


class OracleSizeError(ValueError):
    """Instance too large for exact enumeration."""


@dataclass(frozen=True)
class ExactMetrics:
    mr: float
    mq: float


def _check_size(instance: Instance) -> None:
    if instance.n_patients > MAX_PATIENTS:
        raise OracleSizeError(
            f"exact oracle supports N <= {MAX_PATIENTS}, got N={instance.n_patients}"
        )


def exact_expected_metrics(instance: Instance, x=None, order: OrderDistribution | None = None,
                           menu: DynamicMenu | None = None) -> ExactMetrics:
    """Exact MR and MQ of a static assortment ``x`` or a dynamic ``menu`` policy."""
    _check_size(instance)
    if (x is None) == (menu is None):
        raise ValueError("pass exactly one of x or menu")
    order = order or UniformRandom()
    n, m = instance.theta.shape
    theta = instance.theta
    spec = instance.choice
    if x is not None:
        x = validate_assortment(x, instance).astype(bool)

    dist_cache: dict = {}

    def outcomes(i: int, avail: tuple) -> list:
        key = (i, avail)
        if key not in dist_cache:
            d = selection_probabilities(spec, theta[i], np.array(avail, dtype=bool))
            out = [(int(j), float(pr)) for j, pr in enumerate(d.probs) if pr > 0]
            if d.abstain > 0:
                out.append((-1, float(d.abstain)))
            dist_cache[key] = out
        return dist_cache[key]

    memo: dict = {}

    def value(done: int, rem: tuple) -> tuple[float, float]:
        key = (done, rem)
        if key in memo:
            return memo[key]
        pending = [i for i in range(n) if not (done >> i) & 1]
        if not pending:
            return 0.0, 0.0
        ev_r = ev_q = 0.0
        rem_arr = np.array(rem)
        for i, w in next_responder_weights(order, pending, n - len(pending), theta):
            if menu is not None:
                pend_mask = np.array([not (done >> k) & 1 for k in range(n)])
                offered = np.asarray(menu(i, pend_mask, rem_arr.copy()), dtype=bool)
            else:
                offered = x[i]
            avail = tuple(bool(b) for b in offered & (rem_arr > 0))
            for j, pr in outcomes(i, avail):
                if j < 0:
                    r, q = value(done | (1 << i), rem)
                    ev_r += w * pr * r
                    ev_q += w * pr * q
                else:
                    nxt = list(rem)
                    nxt[j] -= 1
                    r, q = value(done | (1 << i), tuple(nxt))
                    ev_r += w * pr * (1.0 + r)
                    ev_q += w * pr * (theta[i, j] + q)
        memo[key] = (ev_r, ev_q)
        return memo[key]

    r, q = value(0, tuple(int(c) for c in instance.capacities))
    return ExactMetrics(mr=float(r / n), mq=float(q / n))


def _selection_tables(instance: Instance):
    """Per patient, selection outcome for every provider bitmask (unit capacities)."""
    n, m = instance.theta.shape
    masks = np.arange(1 << m)
    bits = ((masks[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)  # (2^M, M)
    spec = instance.choice
    if isinstance(spec, MNL):
        e = np.exp(instance.theta)  # (N, M)
        w = bits[None, :, :] * e[:, None, :]  # (N, 2^M, M)
        denom = np.exp(spec.gamma) + w.sum(axis=2, keepdims=True)
        return "mnl", w / denom
    best = np.stack([best_offered(np.broadcast_to(instance.theta[i], bits.shape), bits) for i in range(n)])
    acc = np.where(best >= 0, spec.p, 0.0)
    if isinstance(spec, Threshold):
        q = np.take_along_axis(instance.theta, np.maximum(best, 0), axis=1)
        acc = np.where(q >= spec.alpha, acc, 0.0)
    return "argmax", (best, acc)


def exact_metrics_batch(instance: Instance, xs: np.ndarray,
                        order: OrderDistribution | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact (MR, MQ) for a stack of assortments ``xs`` of shape ``(K, N, M)``.

    Unit capacities only.  Vectorized over the stack, and over all
    taken-provider sets at once; memory is ``O(2**(N+M) * K)``.
    """
    _check_size(instance)
    if not instance.unit_capacity:
        raise ValueError("exact_metrics_batch requires unit capacities")
    order = order or UniformRandom()
    theta = instance.theta
    n, m = theta.shape
    xs = np.asarray(xs).astype(bool)
    k = xs.shape[0]
    xbits = (xs.astype(np.int64) << np.arange(m)[None, None, :]).sum(axis=2)  # (K, N)
    kind, tables = _selection_tables(instance)
    n_taken = 1 << m
    taken = np.arange(n_taken)[:, None]  # (2^M, 1)
    free = (n_taken - 1) ^ taken
    full = (1 << n) - 1
    v_r = np.zeros((1 << n, n_taken, k))
    v_q = np.zeros((1 << n, n_taken, k))
    kidx = np.broadcast_to(np.arange(k)[None, :], (n_taken, k))
    for done in sorted(range(full), key=lambda s: -bin(s).count("1")):
        pending = [i for i in range(n) if not (done >> i) & 1]
        acc_r = np.zeros((n_taken, k))
        acc_q = np.zeros((n_taken, k))
        for i, w in next_responder_weights(order, pending, n - len(pending), theta):
            nxt_r, nxt_q = v_r[done | (1 << i)], v_q[done | (1 << i)]
            oa = free & xbits[None, :, i]  # (2^M, K) offered-and-available
            stay_r = np.broadcast_to(nxt_r, (n_taken, k))
            stay_q = np.broadcast_to(nxt_q, (n_taken, k))
            if kind == "argmax":
                best, acc = tables
                j = best[i][oa]
                pr = acc[i][oa]
                jj = np.maximum(j, 0)
                moved = taken | np.where(j >= 0, 1 << jj, 0)
                gain_q = theta[i][jj]
                acc_r += w * (pr * (1.0 + nxt_r[moved, kidx]) + (1 - pr) * stay_r)
                acc_q += w * (pr * (gain_q + nxt_q[moved, kidx]) + (1 - pr) * stay_q)
            else:
                probs = tables[i][oa]  # (2^M, K, M)
                abstain = 1.0 - probs.sum(axis=2)
                tr = abstain * stay_r
                tq = abstain * stay_q
                for j in range(m):
                    moved = taken | (1 << j)
                    pj = probs[..., j]
                    tr = tr + pj * (1.0 + nxt_r[moved, kidx])
                    tq = tq + pj * (theta[i, j] + nxt_q[moved, kidx])
                acc_r += w * tr
                acc_q += w * tq
        v_r[done], v_q[done] = acc_r, acc_q
    return v_r[0, 0] / n, v_q[0, 0] / n


def _all_assortments(n: int, m: int, start: int, stop: int) -> np.ndarray:
    """Assortments ``start..stop-1`` in row-major lexicographic order (first cell most significant)."""
    codes = np.arange(start, stop, dtype=np.int64)
    cells = n * m
    bits = (codes[:, None] >> (cells - 1 - np.arange(cells))[None, :]) & 1
    return bits.reshape(-1, n, m).astype(np.int8)


def exhaustive_optimal_assortment(instance: Instance, objective: str = "mq",
                                  order: OrderDistribution | None = None,
                                  tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Best assortment over all ``2**(N*M)`` candidates; ties go to the lexicographically smallest."""
    n, m = instance.theta.shape
    if n * m > MAX_ENUMERATION_CELLS:
        raise OracleSizeError(f"exhaustive search supports N*M <= {MAX_ENUMERATION_CELLS}, got {n * m}")
    if objective not in ("mq", "mr"):
        raise ValueError(f"objective must be 'mq' or 'mr', got {objective!r}")
    _check_size(instance)
    total = 1 << (n * m)
    best_val, best_x = -np.inf, None
    batched = instance.unit_capacity and n + m <= 16
    chunk = max(1, (1 << 22) >> (n + m)) if batched else 1
    for start in range(0, total, chunk):
        xs = _all_assortments(n, m, start, min(total, start + chunk))
        if batched:
            mr, mq = exact_metrics_batch(instance, xs, order)
        else:
            ms = [exact_expected_metrics(instance, x, order) for x in xs]
            mr = np.array([e.mr for e in ms])
            mq = np.array([e.mq for e in ms])
        vals = mq if objective == "mq" else mr
        i = int(np.flatnonzero(vals >= vals.max() - tol)[0])
        if vals[i] > best_val + tol:
            best_val, best_x = float(vals[i]), xs[i]
    return best_x, best_val
