"""Instance generators, misspecification helpers, and instance file I/O."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import MNL, ChoiceModelSpec, Instance, InstanceError, Threshold, Uniform, choice_from_dict, choice_to_dict, with_p

FORMAT_VERSION = 1
EARTH_RADIUS_MILES = 3958.7613
MIN_DISTANCE_MILES = 0.1


def gen_uniform_theta(n: int, m: int, rng: np.random.Generator, choice: ChoiceModelSpec | None = None,
                      capacities=None) -> Instance:
    return Instance(rng.random((n, m)), capacities, choice or Uniform())


def gen_normal_theta(n: int, m: int, s: float, rng: np.random.Generator,
                     choice: ChoiceModelSpec | None = None, capacities=None) -> Instance:
    """Provider means ``mu_j ~ U(0, 1)``; entries ``N(mu_j, s**2)`` clipped to [0, 1]."""
    if s < 0:
        raise ValueError("s must be >= 0")
    mu = rng.random(m)
    theta = np.clip(mu[None, :] + s * rng.standard_normal((n, m)), 0.0, 1.0)
    return Instance(theta, capacities, choice or Uniform())


# ------------------------------------------------------------ geography

@dataclass(frozen=True)
class Region:
    id: str
    lat: float
    lon: float
    population_weight: float
    provider_weight: float
    spread_miles: float


def _default_regions() -> tuple:
    # Fictional state: three dense towns and a ring of sparse rural areas.
    urban = [Region("U1", 41.30, -72.90, 30.0, 45.0, 4.0),
             Region("U2", 41.76, -72.68, 25.0, 40.0, 4.0),
             Region("U3", 41.18, -73.20, 20.0, 30.0, 3.5)]
    ring = np.linspace(0.0, 2.0 * np.pi, 9, endpoint=False)
    rural = [Region(f"R{k + 1}", 41.55 + 0.35 * np.sin(a), -72.75 + 0.55 * np.cos(a), 3.0, 1.0, 8.0)
             for k, a in enumerate(ring)]
    return tuple(urban + rural)


@dataclass(frozen=True)
class GeoConfig:
    """Parameters of the synthetic geographic quality construction.

    ``comorbidity_rate`` and ``specialty_rate`` drive a stand-in model where a
    patient-provider pair has matching needs with probability equal to their
    product, independently across pairs.
    """

    n_patients: int = 1225
    n_providers: int = 700
    regions: tuple = field(default_factory=_default_regions)
    comorbidity_rate: float = 0.3
    specialty_rate: float = 0.3
    delta: float = 0.5
    alpha_floor: float = 0.5
    d_bar: float = 20.2
    p: float = 0.75

    def __post_init__(self):
        if not self.regions:
            raise InstanceError("region list is empty")
        pop = np.array([r.population_weight for r in self.regions])
        prov = np.array([r.provider_weight for r in self.regions])
        for name, w in (("population", pop), ("provider", prov)):
            if np.any(w < 0) or not np.any(w > 0):
                raise InstanceError(f"{name} weights must be nonnegative with at least one positive")
        if self.d_bar <= 0:
            raise InstanceError("d_bar must be positive")
        for name in ("comorbidity_rate", "specialty_rate", "delta", "alpha_floor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InstanceError(f"{name} must lie in [0, 1], got {v}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("n_patients", "n_providers", "comorbidity_rate", "specialty_rate",
                                           "delta", "alpha_floor", "d_bar", "p")}
        d["regions"] = [vars(r).copy() for r in self.regions]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeoConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InstanceError(f"unknown keys in geo config: {sorted(extra)}")
        d = dict(d)
        if "regions" in d:
            d["regions"] = tuple(Region(**r) for r in d["regions"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GeoInstance:
    instance: Instance
    patient_regions: np.ndarray
    provider_regions: np.ndarray
    patient_coords: np.ndarray  # (N, 2) lat, lon in degrees
    provider_coords: np.ndarray  # (M, 2)
    beta: np.ndarray
    region_ids: tuple
    config: GeoConfig | None = None


def haversine_miles(a, b) -> np.ndarray:
    """Great-circle distance between every row of ``a`` (lat, lon) and every row of ``b``."""
    a = np.radians(np.atleast_2d(np.asarray(a, dtype=float)))
    b = np.radians(np.atleast_2d(np.asarray(b, dtype=float)))
    dlat = b[None, :, 0] - a[:, None, 0]
    dlon = b[None, :, 1] - a[:, None, 1]
    h = np.sin(dlat / 2) ** 2 + np.cos(a[:, None, 0]) * np.cos(b[None, :, 0]) * np.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def geo_quality(distance, beta, delta: float, alpha_floor: float, d_bar: float) -> np.ndarray:
    """``alpha + (1 - alpha) * (delta * beta + (1 - delta) * (d_bar / d - 1))`` clipped to [0, 1]."""
    d = np.maximum(np.asarray(distance, dtype=float), MIN_DISTANCE_MILES)
    raw = alpha_floor + (1.0 - alpha_floor) * (delta * np.asarray(beta) + (1.0 - delta) * (d_bar / d - 1.0))
    return np.clip(raw, 0.0, 1.0)


def _place(regions, weights, count, rng):
    w = np.asarray(weights, dtype=float)
    idx = rng.choice(len(regions), size=count, p=w / w.sum())
    lat0 = np.array([regions[k].lat for k in idx])
    lon0 = np.array([regions[k].lon for k in idx])
    spread = np.array([regions[k].spread_miles for k in idx])
    north, east = rng.standard_normal((2, count)) * spread
    lat = lat0 + np.degrees(north / EARTH_RADIUS_MILES)
    lon = lon0 + np.degrees(east / (EARTH_RADIUS_MILES * np.cos(np.radians(lat0))))
    return idx, np.column_stack([lat, lon])


def gen_geo_instance(cfg: GeoConfig, rng: np.random.Generator, beta=None) -> GeoInstance:
    """Sample patient and provider locations and build qualities from distance and needs match.

    ``beta`` may be given explicitly; otherwise each entry is Bernoulli with
    probability ``comorbidity_rate * specialty_rate``.
    """
    regions = cfg.regions
    p_idx, p_xy = _place(regions, [r.population_weight for r in regions], cfg.n_patients, rng)
    q_idx, q_xy = _place(regions, [r.provider_weight for r in regions], cfg.n_providers, rng)
    if beta is None:
        beta = (rng.random((cfg.n_patients, cfg.n_providers)) < cfg.comorbidity_rate * cfg.specialty_rate)
    beta = np.asarray(beta).astype(np.int8)
    if beta.shape != (cfg.n_patients, cfg.n_providers) or not np.isin(beta, (0, 1)).all():
        raise InstanceError("beta must be a 0/1 matrix of shape (n_patients, n_providers)")
    theta = geo_quality(haversine_miles(p_xy, q_xy), beta, cfg.delta, cfg.alpha_floor, cfg.d_bar)
    inst = Instance(theta, None, Threshold(cfg.p, cfg.alpha_floor))
    return GeoInstance(inst, p_idx, q_idx, p_xy, q_xy, beta, tuple(r.id for r in regions), cfg)


def region_match_csv(geo: GeoInstance, matched_rate, quality) -> str:
    """Per-region CSV of mean patient match rate and quality.

    ``matched_rate[i]`` and ``quality[i]`` are per-patient averages over trials.
    """
    matched_rate = np.asarray(matched_rate, dtype=float)
    quality = np.asarray(quality, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("region", "n_patients", "match_rate", "match_quality"))
    for k, rid in enumerate(geo.region_ids):
        sel = geo.patient_regions == k
        if not sel.any():
            w.writerow((rid, 0, "", ""))
            continue
        w.writerow((rid, int(sel.sum()), repr(float(matched_rate[sel].mean())), repr(float(quality[sel].mean()))))
    return buf.getvalue()


# ------------------------------------------------------------ misspecification

def perturb_p(instance: Instance, p_hat: float) -> Instance:
    """Copy of ``instance`` whose choice model reports ``p_hat`` as the match probability."""
    if not 0.0 < p_hat <= 1.0:
        raise ValueError("p_hat must lie in (0, 1]")
    if isinstance(instance.choice, MNL):
        raise ValueError("MNL has no match probability to misspecify")
    return instance.replace(choice=with_p(instance.choice, p_hat))


def perturb_theta(instance: Instance, s: float, rng: np.random.Generator) -> tuple[Instance, Instance]:
    """``(true, observed)`` where observed qualities carry N(0, s**2) noise, clipped to [0, 1]."""
    if s < 0:
        raise ValueError("s must be >= 0")
    if s == 0:
        return instance, instance
    noisy = np.clip(instance.theta + s * rng.standard_normal(instance.theta.shape), 0.0, 1.0)
    return instance, instance.replace(theta=noisy)


# ------------------------------------------------------------ file I/O

_BASE_KEYS = {"version", "n", "m", "theta", "capacities", "choice"}
_GEO_KEYS = {"coords", "beta", "regions"}


def instance_to_dict(obj) -> dict:
    inst = obj.instance if isinstance(obj, GeoInstance) else obj
    d = {
        "version": FORMAT_VERSION,
        "n": inst.n_patients,
        "m": inst.m_providers,
        "theta": inst.theta.tolist(),
        "capacities": inst.capacities.tolist(),
        "choice": choice_to_dict(inst.choice),
    }
    if isinstance(obj, GeoInstance):
        d["coords"] = {"patients": obj.patient_coords.tolist(), "providers": obj.provider_coords.tolist()}
        d["beta"] = obj.beta.tolist()
        d["regions"] = {"ids": list(obj.region_ids), "patients": obj.patient_regions.tolist(),
                        "providers": obj.provider_regions.tolist()}
    return d


def _require(d: dict, key: str, where: str = "instance"):
    if key not in d:
        raise InstanceError(f"{where}: missing required key {key!r}")
    return d[key]


def instance_from_dict(d: dict):
    if not isinstance(d, dict):
        raise InstanceError("instance file must contain a JSON object")
    extra = set(d) - _BASE_KEYS - _GEO_KEYS
    if extra:
        raise InstanceError(f"instance: unknown keys {sorted(extra)}")
    version = d.get("version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InstanceError(f"unsupported instance format version {version!r} (expected {FORMAT_VERSION})")
    theta = np.asarray(_require(d, "theta"), dtype=float)
    n, m = int(_require(d, "n")), int(_require(d, "m"))
    if theta.shape != (n, m):
        raise InstanceError(f"theta has shape {theta.shape}, but n={n}, m={m}")
    choice = choice_from_dict(d["choice"]) if "choice" in d else Uniform()
    inst = Instance(theta, d.get("capacities"), choice)
    geo_present = _GEO_KEYS & set(d)
    if not geo_present:
        return inst
    if geo_present != _GEO_KEYS:
        raise InstanceError(f"geographic instance needs all of {sorted(_GEO_KEYS)}")
    coords, regions = d["coords"], d["regions"]
    return GeoInstance(
        instance=inst,
        patient_regions=np.asarray(_require(regions, "patients", "regions"), dtype=np.int64),
        provider_regions=np.asarray(_require(regions, "providers", "regions"), dtype=np.int64),
        patient_coords=np.asarray(_require(coords, "patients", "coords"), dtype=float).reshape(n, 2),
        provider_coords=np.asarray(_require(coords, "providers", "coords"), dtype=float).reshape(m, 2),
        beta=np.asarray(d["beta"], dtype=np.int8),
        region_ids=tuple(_require(regions, "ids", "regions")),
    )


def save_instance(obj, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(obj)) + "\n")


def load_instance(path):
    """Read an :class:`Instance` or :class:`GeoInstance` from JSON."""
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return instance_from_dict(d)
    except InstanceError as exc:
        raise InstanceError(f"{path}: {exc}") from exc
