"""Pairwise menus re-solved before every response on the residual market."""
from __future__ import annotations

import numpy as np

from ..core import Instance
from ..matching import max_weight_matching


class DynamicPairwise:
    """Callable menu source: ``menu(patient, pending_mask, remaining) -> offered mask``.

    The matching is recomputed over patients that have not responded yet and
    providers with remaining capacity, so consumed capacity never reappears.
    Results are memoized on the state, which the oracle revisits often.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self._cache: dict = {}

    def assignment(self, pending_mask: np.ndarray, remaining: np.ndarray) -> np.ndarray:
        pending_mask = np.asarray(pending_mask, dtype=bool)
        remaining = np.asarray(remaining)
        key = (pending_mask.tobytes(), remaining.astype(np.int64).tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        n, m = self.instance.theta.shape
        v = np.full(n, -1, dtype=np.int64)
        rows = np.flatnonzero(pending_mask)
        cols = np.flatnonzero(remaining > 0)
        if rows.size and cols.size:
            sub = max_weight_matching(self.instance.theta[np.ix_(rows, cols)], remaining[cols])
            hit_rows = sub.v >= 0
            v[rows[hit_rows]] = cols[sub.v[hit_rows]]
        self._cache[key] = v
        return v

    def __call__(self, patient: int, pending_mask, remaining) -> np.ndarray:
        v = self.assignment(pending_mask, remaining)
        menu = np.zeros(self.instance.m_providers, dtype=bool)
        if v[patient] >= 0:
            menu[v[patient]] = True
        return menu


def policy_dynamic_pairwise(instance: Instance) -> DynamicPairwise:
    return DynamicPairwise(instance)
