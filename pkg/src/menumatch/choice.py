"""Uniform, threshold and MNL choice models.

Each model maps an offered-and-available provider mask to a single selection or
an abstention.  Sampling consumes exactly one uniform variate per decision and
uses the inverse CDF over ``(provider 0, ..., provider M-1, abstain)``, so the
same variates drive the scalar sampler and the vectorized simulator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ABSTAIN, MNL, ChoiceModelSpec, Threshold, Uniform


@dataclass(frozen=True)
class SelectionDistribution:
    probs: np.ndarray
    abstain: float


def best_offered(theta_rows: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Lowest-index argmax of ``theta`` over entries with ``mask`` set; -1 where the mask is empty.

    Works on a single row or on a stack of rows (last axis = providers).
    """
    theta_rows = np.asarray(theta_rows, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    masked = np.where(mask, theta_rows, -np.inf)
    best = np.argmax(masked, axis=-1)
    return np.where(mask.any(axis=-1), best, ABSTAIN)


def selection_probabilities(spec: ChoiceModelSpec, theta_row, mask) -> SelectionDistribution:
    theta_row = np.asarray(theta_row, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    m = theta_row.shape[0]
    probs = np.zeros(m)
    if not mask.any():
        return SelectionDistribution(probs, 1.0)
    if isinstance(spec, MNL):
        w = np.where(mask, np.exp(theta_row), 0.0)
        denom = np.exp(spec.gamma) + w.sum()
        probs = w / denom
        return SelectionDistribution(probs, float(np.exp(spec.gamma) / denom))
    j = int(best_offered(theta_row, mask))
    if isinstance(spec, Threshold) and theta_row[j] < spec.alpha:
        return SelectionDistribution(probs, 1.0)
    probs[j] = spec.p
    return SelectionDistribution(probs, 1.0 - spec.p)


def select_from_uniform(spec: ChoiceModelSpec, theta_rows, mask, u) -> np.ndarray:
    """Vectorized inverse-CDF selection.

    ``theta_rows`` and ``mask`` have shape ``(T, M)``, ``u`` shape ``(T,)``.
    Returns the selected provider per row, or ``-1`` for abstention.
    """
    theta_rows = np.asarray(theta_rows, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    u = np.asarray(u, dtype=float)
    if isinstance(spec, MNL):
        w = np.where(mask, np.exp(theta_rows), 0.0)
        denom = np.exp(spec.gamma) + w.sum(axis=-1)
        cdf = np.cumsum(w, axis=-1) / denom[..., None]
        hit = (u[..., None] < cdf) & mask
        return np.where(hit.any(axis=-1), np.argmax(hit, axis=-1), ABSTAIN)
    best = best_offered(theta_rows, mask)
    ok = (best >= 0) & (u < spec.p)
    if isinstance(spec, Threshold):
        best_q = np.take_along_axis(theta_rows, np.maximum(best, 0)[..., None], axis=-1)[..., 0]
        ok &= best_q >= spec.alpha
    return np.where(ok, best, ABSTAIN)


def sample_selection(spec: ChoiceModelSpec, theta_row, mask, rng: np.random.Generator) -> int:
    """Draw one selection; returns a provider index or ``ABSTAIN``."""
    u = rng.random()
    out = select_from_uniform(spec, np.asarray(theta_row)[None, :], np.asarray(mask)[None, :], np.array([u]))
    return int(out[0])


def acceptance_probability(spec: ChoiceModelSpec, theta) -> np.ndarray:
    """Probability a patient accepts a menu consisting of a single provider of quality ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if isinstance(spec, MNL):
        e = np.exp(theta)
        return e / (e + np.exp(spec.gamma))
    out = np.full(theta.shape, spec.p)
    if isinstance(spec, Threshold):
        out = np.where(theta >= spec.alpha, out, 0.0)
    return out


def effective_p(spec: ChoiceModelSpec, theta) -> float:
    """Scalar match probability used by heuristics written for the uniform model.

    For MNL this is the mean single-offer acceptance probability over ``theta``.
    """
    if isinstance(spec, (Uniform, Threshold)):
        return float(spec.p)
    return float(np.mean(acceptance_probability(spec, theta)))
