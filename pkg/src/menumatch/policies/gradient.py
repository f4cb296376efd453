"""Gradient-based menus from a differentiable availability x preference surrogate of MQ.

For a fractional assortment ``x`` the surrogate estimates, per provider, the
probability it is still available to a patient averaged over that patient's
arrival position (``h``), then the probability each provider is the patient's
most preferred available one (``g``), and scores ``p * <g, theta>``; the
surrogate is on the total-quality scale, i.e. ``N`` times a per-patient MQ.
Under the threshold model providers below the threshold contribute nothing;
under MNL the match probability is the mean single-offer acceptance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..choice import effective_p
from ..core import Instance, Threshold
from .basic import policy_pairwise

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class GdConfig:
    learning_rate: float = 0.05
    iterations: int = 2000
    restarts: int = 5
    binarization_weight_schedule: tuple = (0.0, 1.0)
    rounding_threshold: float = 0.5
    seed: int = 0
    delta: float = 1e-4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1 or self.restarts < 1:
            raise ValueError("iterations and restarts must be >= 1")
        if not 0.0 < self.rounding_threshold < 1.0:
            raise ValueError("rounding_threshold must lie in (0, 1)")


def _availability(pp: np.ndarray, caps: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrival-averaged availability of each provider and its derivative in ``pp``.

    ``pp`` has shape ``(..., M)``.  Unit-capacity providers use ``(1-pp)**(t-1)``.
    Providers with ``c > 1`` use the normal-approximation bound when at least
    ``c - 1`` earlier selections are expected, and ``(1-pp)**(t-1)`` otherwise.
    """
    k = np.arange(n, dtype=float)  # t - 1
    q = (1.0 - pp)[..., None]
    av = q ** k
    dav = -k * q ** np.maximum(k - 1.0, 0.0)
    multi = caps > 1
    if np.any(multi):
        c1 = (caps - 1.0)[:, None]
        ppk = pp[..., None]
        in_tail = (c1 <= k * ppk) & (k >= 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sqrt(k * ppk * (1.0 - ppk))
            w = (k * ppk - c1) / s  # = -z >= 0 inside the tail branch
            phi = np.exp(-0.5 * w * w) / _SQRT_2PI
            bound = w / (w * w + 1.0) * phi
            dbound_dw = phi * ((1.0 - w * w) / (w * w + 1.0) ** 2 - w * w / (w * w + 1.0))
            ds = k * (1.0 - 2.0 * ppk) / (2.0 * s)
            dw = (k * s - (k * ppk - c1) * ds) / (s * s)
            dbound = dbound_dw * dw
        ok = in_tail & np.isfinite(bound) & np.isfinite(dbound)
        bound = np.where(ok, np.clip(bound, 0.0, 1.0), 0.0)
        dbound = np.where(ok, dbound, 0.0)
        sel = multi[:, None] & in_tail
        av = np.where(sel, bound, av)
        dav = np.where(sel, dbound, dav)
    return av.mean(axis=-1), dav.mean(axis=-1)


class Surrogate:
    """Precomputed pieces of the surrogate for one instance; evaluates batches ``(R, N, M)``."""

    def __init__(self, instance: Instance):
        theta = np.asarray(instance.theta, dtype=float)
        spec = instance.choice
        if isinstance(spec, Threshold):
            theta = np.where(theta >= spec.alpha, theta, 0.0)
        self.n, self.m = theta.shape
        self.p = effective_p(spec, instance.theta)
        self.caps = np.asarray(instance.capacities)
        self.order = np.argsort(-np.asarray(instance.theta), axis=1, kind="stable")
        self.theta_sorted = np.take_along_axis(theta, self.order, axis=1)

    def _shared(self, x):
        n = self.n
        cnt = x.sum(axis=-2)  # (R, M)
        if n > 1:
            raw = self.p * (cnt - 1.0) / (n - 1.0)
            pp = np.clip(raw, 0.0, self.p)
            dpp = np.where((raw > 0.0) & (raw < self.p), self.p / (n - 1.0), 0.0)
        else:
            pp = np.zeros_like(cnt)
            dpp = np.zeros_like(cnt)
        a, da = _availability(pp, self.caps, n)
        return a, da * dpp

    def terms(self, x):
        """Return ``(h, g)`` in the original provider order."""
        x = np.asarray(x, dtype=float)
        a, _ = self._shared(x)
        h = x * a[..., None, :]
        order = np.broadcast_to(self.order, h.shape)
        hs = np.take_along_axis(h, order, axis=-1)
        prefix = np.cumprod(1.0 - hs, axis=-1)
        prefix = np.concatenate([np.ones(hs.shape[:-1] + (1,)), prefix[..., :-1]], axis=-1)
        g = np.empty_like(h)
        np.put_along_axis(g, order, hs * prefix, axis=-1)
        return h, g

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, _ = self._shared(x)
        hs = np.take_along_axis(x * a[..., None, :], np.broadcast_to(self.order, x.shape), axis=-1)
        prefix = np.cumprod(1.0 - hs, axis=-1)
        prefix = np.concatenate([np.ones(hs.shape[:-1] + (1,)), prefix[..., :-1]], axis=-1)
        return self.p * (self.theta_sorted * hs * prefix).sum(axis=(-2, -1))

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        a, da_dn = self._shared(x)
        order = np.broadcast_to(self.order, x.shape)
        hs = np.take_along_axis(x * a[..., None, :], order, axis=-1)
        one_minus = 1.0 - hs
        prefix = np.cumprod(one_minus, axis=-1)
        prefix = np.concatenate([np.ones(hs.shape[:-1] + (1,)), prefix[..., :-1]], axis=-1)
        contrib = self.theta_sorted * hs * prefix
        value = self.p * contrib.sum(axis=(-2, -1))
        if np.all(one_minus > 1e-8):
            tail = np.cumsum(contrib[..., ::-1], axis=-1)[..., ::-1] - contrib  # sum over k > m
            ghs = prefix * self.theta_sorted - tail / one_minus
        else:
            # suffix recursion r_m = theta_m h_m + (1 - h_m) r_{m+1}, no division
            ghs = np.empty_like(hs)
            r = np.zeros(hs.shape[:-1])
            for col in range(self.m - 1, -1, -1):
                ghs[..., col] = prefix[..., col] * (self.theta_sorted[..., col] - r)
                r = self.theta_sorted[..., col] * hs[..., col] + one_minus[..., col] * r
        gh = np.empty_like(ghs)
        np.put_along_axis(gh, order, ghs, axis=-1)
        col_term = (gh * x).sum(axis=-2) * da_dn  # through the provider's offer count
        grad = gh * a[..., None, :] + col_term[..., None, :]
        return value, self.p * grad


def gd_objective(instance: Instance, x) -> float:
    """Surrogate total match quality ``p * <g(h(x)), theta>`` of a (fractional) assortment."""
    return float(Surrogate(instance).value(np.asarray(x, dtype=float)))


def gd_gradient(instance: Instance, x, penalty_weight: float = 0.0) -> np.ndarray:
    """Gradient of ``gd_objective(x) - penalty_weight * sum(x * (1 - x))``."""
    x = np.asarray(x, dtype=float)
    _, grad = Surrogate(instance).value_and_grad(x)
    return grad - penalty_weight * (1.0 - 2.0 * x)


def policy_gradient_descent(instance: Instance, cfg: GdConfig | None = None) -> np.ndarray:
    """Projected gradient ascent on the surrogate with an annealed push towards binary menus.

    Restart 0 starts from the pairwise menus; the others start uniformly in
    [0.25, 0.75].  Every restart is rounded and the rounded menu with the best
    surrogate value wins (lowest restart index on ties).
    """
    cfg = cfg or GdConfig()
    sur = Surrogate(instance)
    rng = np.random.default_rng(cfg.seed)
    n, m = instance.theta.shape
    lo, hi = cfg.delta, 1.0 - cfg.delta
    x = np.empty((cfg.restarts, n, m))
    x[0] = np.where(policy_pairwise(instance) == 1, hi, lo)
    if cfg.restarts > 1:
        x[1:] = rng.uniform(0.25, 0.75, size=(cfg.restarts - 1, n, m))
    start, end = cfg.binarization_weight_schedule
    steps = max(cfg.iterations - 1, 1)
    for it in range(cfg.iterations):
        lam = start + (end - start) * it / steps
        _, grad = sur.value_and_grad(x)
        grad -= lam * (1.0 - 2.0 * x)
        x = np.clip(x + cfg.learning_rate * grad, lo, hi)
    rounded = (x >= cfg.rounding_threshold).astype(np.int8)
    scores = sur.value(rounded.astype(float))
    return rounded[int(np.argmax(scores))]
