"""Domain types shared across the package.

Patients and providers are 0-indexed everywhere, including files and reports.
An assortment is an ``(N, M)`` 0/1 integer array; row ``i`` is the menu offered
to patient ``i``.  Selections and pairwise assignments use ``-1`` for
"abstained" / "unmatched".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

ABSTAIN = -1
UNMATCHED = -1


class InstanceError(ValueError):
    """An instance, assortment or order violates its invariants."""


@dataclass(frozen=True)
class Uniform:
    """Select the most preferred available provider with probability ``p``."""

    p: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0) or math.isnan(self.p):
            raise InstanceError(f"uniform choice needs p in (0, 1], got {self.p}")


@dataclass(frozen=True)
class Threshold:
    """Uniform choice, but abstain when the best available quality is below ``alpha``."""

    p: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0) or math.isnan(self.p):
            raise InstanceError(f"threshold choice needs p in (0, 1], got {self.p}")
        if not (0.0 <= self.alpha <= 1.0):
            raise InstanceError(f"threshold choice needs alpha in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class MNL:
    """Multinomial logit over offered providers with an exit option of utility ``gamma``."""

    gamma: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise InstanceError(f"MNL choice needs a finite gamma, got {self.gamma}")


ChoiceModelSpec = Union[Uniform, Threshold, MNL]


def choice_to_dict(spec: ChoiceModelSpec) -> dict:
    if isinstance(spec, Uniform):
        return {"type": "uniform", "p": spec.p}
    if isinstance(spec, Threshold):
        return {"type": "threshold", "p": spec.p, "alpha": spec.alpha}
    if isinstance(spec, MNL):
        return {"type": "mnl", "gamma": spec.gamma}
    raise TypeError(f"unknown choice model {spec!r}")


def choice_from_dict(d: dict) -> ChoiceModelSpec:
    allowed = {"uniform": {"type", "p"}, "threshold": {"type", "p", "alpha"}, "mnl": {"type", "gamma"}}
    kind = d.get("type")
    if kind not in allowed:
        raise InstanceError(f"choice.type must be one of {sorted(allowed)}, got {kind!r}")
    extra = set(d) - allowed[kind]
    if extra:
        raise InstanceError(f"unknown keys in choice: {sorted(extra)}")
    if kind == "uniform":
        return Uniform(p=float(d.get("p", 1.0)))
    if kind == "threshold":
        return Threshold(p=float(d.get("p", 1.0)), alpha=float(d.get("alpha", 0.0)))
    return MNL(gamma=float(d.get("gamma", 0.0)))


def with_p(spec: ChoiceModelSpec, p: float) -> ChoiceModelSpec:
    """Return ``spec`` with its match probability replaced (MNL has none and is returned as is)."""
    if isinstance(spec, (Uniform, Threshold)):
        return replace(spec, p=p)
    return spec


@dataclass(frozen=True, eq=False)
class Instance:
    """Match-quality matrix, provider capacities and the patients' choice model.

    ``theta[i, j]`` is the quality of matching patient ``i`` with provider ``j``.
    Arrays are copied and made read-only so instances can be shared freely.
    """

    theta: np.ndarray
    capacities: np.ndarray = None
    choice: ChoiceModelSpec = field(default_factory=Uniform)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, copy=True)
        if theta.ndim != 2:
            raise InstanceError(f"theta must be a 2-d matrix, got shape {theta.shape}")
        caps = self.capacities
        if caps is None:
            caps = np.ones(theta.shape[1], dtype=np.int64)
        caps_arr = np.array(caps, copy=True)
        if caps_arr.size and not np.all(np.equal(np.mod(caps_arr, 1), 0)):
            raise InstanceError("capacities must be integers")
        caps_arr = caps_arr.astype(np.int64)
        theta.flags.writeable = False
        caps_arr.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "capacities", caps_arr)
        validate_instance(self)

    @property
    def n_patients(self) -> int:
        return self.theta.shape[0]

    @property
    def m_providers(self) -> int:
        return self.theta.shape[1]

    @property
    def unit_capacity(self) -> bool:
        return bool(np.all(self.capacities == 1))

    def replace(self, **changes) -> "Instance":
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.theta.shape == other.theta.shape
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.capacities, other.capacities)
            and self.choice == other.choice
        )

    def __repr__(self):
        return f"Instance(N={self.n_patients}, M={self.m_providers}, choice={self.choice!r})"


def validate_instance(instance: Instance) -> None:
    """Raise :class:`InstanceError` naming the offending index if an invariant fails."""
    theta = np.asarray(instance.theta)
    n, m = theta.shape
    if n < 1 or m < 1:
        raise InstanceError(f"need N >= 1 and M >= 1, got N={n}, M={m}")
    bad = ~((theta >= 0.0) & (theta <= 1.0))
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise InstanceError(f"theta out of range at ({i}, {j}): {theta[i, j]!r}")
    caps = np.asarray(instance.capacities)
    if caps.shape != (m,):
        raise InstanceError(f"capacities has shape {caps.shape}, expected ({m},)")
    nonpos = np.flatnonzero(caps < 1)
    if nonpos.size:
        j = int(nonpos[0])
        raise InstanceError(f"nonpositive capacity at provider {j}: {caps[j]}")
    if not isinstance(instance.choice, (Uniform, Threshold, MNL)):
        raise InstanceError(f"unknown choice model {instance.choice!r}")


def validate_assortment(x, instance: Instance | None = None) -> np.ndarray:
    """Return ``x`` as an int8 0/1 array, checking entries and (optionally) shape."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise InstanceError(f"assortment must be 2-d, got shape {arr.shape}")
    if instance is not None and arr.shape != instance.theta.shape:
        raise InstanceError(
            f"assortment shape {arr.shape} does not match instance {instance.theta.shape}"
        )
    bad = ~np.isin(arr, (0, 1))
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise InstanceError(f"assortment entry at ({i}, {j}) is {arr[i, j]!r}, expected 0 or 1")
    return arr.astype(np.int8)


def validate_order(sigma, n: int) -> np.ndarray:
    """Check that ``sigma`` is a permutation of ``0..n-1``; ``sigma[t]`` is the t-th responder."""
    arr = np.asarray(sigma, dtype=np.int64)
    if arr.shape != (n,) or not np.array_equal(np.sort(arr), np.arange(n)):
        raise InstanceError(f"response order must be a permutation of 0..{n - 1}, got {sigma!r}")
    return arr
