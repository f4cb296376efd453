"""Monte Carlo engine for sequential stochastic responses.

Randomness: for every ``(master_seed, seed_index)`` pair a Philox stream is
keyed from ``SeedSequence([master_seed, seed_index])``.  Trial ``k`` reads a
fixed block of that stream (``N`` order keys followed by ``N`` choice
variates), located by advancing the counter, so a trial's randomness does not
depend on chunking, scheduling, or which policy is being evaluated.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .choice import select_from_uniform
from .core import ABSTAIN, Instance, validate_assortment, validate_order
from .orders import (EnvyBatches, OrderDistribution, UniformRandom, orders_from_uniforms,
                     sample_order)
from .policies import GdConfig, build_policy, topological_batches

__all__ = [
    "TrialRecord", "TrialBatch", "MetricSummary", "MetricsReport", "Evaluation", "CSV_COLUMNS",
    "trial_uniforms", "run_trial", "run_trials", "evaluate", "fairness_metrics", "sample_order",
    "resolve_order",
]

CSV_COLUMNS = ("seed", "trial", "policy", "mr", "mq", "fair_min", "fair_var", "fair_range",
               "mean_regret", "mean_menu_size")
_CHUNK_CELLS = 1 << 21
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class TrialRecord:
    sigma: np.ndarray
    selections: np.ndarray
    mr: float
    mq: float
    matched_qualities: np.ndarray
    regret: np.ndarray
    assortment_sizes: np.ndarray


@dataclass
class TrialBatch:
    """Outcomes of ``T`` trials as ``(T, N)`` arrays indexed by patient."""

    orders: np.ndarray
    selections: np.ndarray
    regret: np.ndarray
    menu_sizes: np.ndarray
    quality: np.ndarray  # theta of the realized match, 0 when unmatched

    @property
    def n_trials(self) -> int:
        return self.selections.shape[0]

    @property
    def matched(self) -> np.ndarray:
        return self.selections != ABSTAIN

    @property
    def mr(self) -> np.ndarray:
        return self.matched.mean(axis=1)

    @property
    def mq(self) -> np.ndarray:
        return self.quality.mean(axis=1)

    def fairness(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-trial min, population variance and range of matched qualities (NaN if none)."""
        matched = self.matched
        cnt = matched.sum(axis=1)
        some = cnt > 0
        q = self.quality
        lo = np.where(matched, q, np.inf).min(axis=1)
        hi = np.where(matched, q, -np.inf).max(axis=1)
        safe = np.maximum(cnt, 1)
        mean = np.where(matched, q, 0.0).sum(axis=1) / safe
        var = np.where(matched, (q - mean[:, None]) ** 2, 0.0).sum(axis=1) / safe
        nan = np.full(cnt.shape, np.nan)
        return np.where(some, lo, nan), np.where(some, var, nan), np.where(some, hi - lo, nan)

    def record(self, k: int) -> TrialRecord:
        sel = self.selections[k]
        hit = sel != ABSTAIN
        return TrialRecord(
            sigma=self.orders[k].copy(), selections=sel.copy(), mr=float(self.mr[k]),
            mq=float(self.mq[k]), matched_qualities=self.quality[k][self.orders[k][hit[self.orders[k]]]],
            regret=self.regret[k].copy(), assortment_sizes=self.menu_sizes[k].copy())


def fairness_metrics(matched_qualities: Iterable[Sequence[float]]) -> tuple[float, float, float, int]:
    """Mean over trials of (min, population variance, range) of matched qualities.

    Trials without any match are skipped; their number is returned last.
    """
    stats, excluded = [], 0
    for q in matched_qualities:
        q = np.asarray(q, dtype=float)
        if q.size == 0:
            excluded += 1
            continue
        stats.append((q.min(), q.var(), q.max() - q.min()))
    if not stats:
        return math.nan, math.nan, math.nan, excluded
    arr = np.array(stats)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean()), float(arr[:, 2].mean()), excluded


def resolve_order(order: OrderDistribution | None, instance: Instance) -> OrderDistribution:
    """Turn instance-dependent placeholders into concrete order distributions."""
    if order is None:
        return UniformRandom()
    if isinstance(order, EnvyBatches):
        return topological_batches(instance, order.n_batches).as_order()
    return order


def trial_uniforms(master_seed: int, seed_index: int, n: int, start: int, stop: int):
    """Order keys and choice variates, each ``(stop - start, n)``, for trials ``start..stop-1``."""
    block = -(-2 * n // 4)  # Philox counter steps per trial (4 doubles per step)
    bitgen = np.random.Philox(np.random.SeedSequence([int(master_seed), int(seed_index)]))
    bitgen.advance(start * block)
    raw = np.random.Generator(bitgen).random((stop - start, 4 * block))
    raw = np.where(raw == 0.0, _TINY, raw)
    return raw[:, :n], raw[:, n:2 * n]


def _simulate_static(instance: Instance, x: np.ndarray, orders: np.ndarray, cu: np.ndarray) -> TrialBatch:
    theta = instance.theta
    spec = instance.choice
    t_count, n = orders.shape
    offered = x.astype(bool)
    remaining = np.broadcast_to(instance.capacities, (t_count, instance.m_providers)).copy()
    sel = np.full((t_count, n), ABSTAIN, dtype=np.int64)
    regret = np.zeros((t_count, n))
    quality = np.zeros((t_count, n))
    rows = np.arange(t_count)
    best_offer = np.where(offered, theta, 0.0).max(axis=1)
    for step in range(n):
        who = orders[:, step]
        menu = offered[who]
        mask = menu & (remaining > 0)
        th = theta[who]
        best_avail = np.where(mask, th, 0.0).max(axis=1)
        choice = select_from_uniform(spec, th, mask, cu[:, step])
        hit = choice >= 0
        remaining[rows[hit], choice[hit]] -= 1
        sel[rows, who] = choice
        regret[rows, who] = best_offer[who] - best_avail
        quality[rows, who] = np.where(hit, th[rows, np.maximum(choice, 0)], 0.0)
    sizes = np.broadcast_to(offered.sum(axis=1), (t_count, n)).astype(np.int64)
    return TrialBatch(orders, sel, regret, sizes, quality)


def _simulate_dynamic(instance: Instance, menu: Callable, orders: np.ndarray, cu: np.ndarray) -> TrialBatch:
    theta = instance.theta
    spec = instance.choice
    t_count, n = orders.shape
    sel = np.full((t_count, n), ABSTAIN, dtype=np.int64)
    regret = np.zeros((t_count, n))
    quality = np.zeros((t_count, n))
    sizes = np.zeros((t_count, n), dtype=np.int64)
    for k in range(t_count):
        remaining = np.array(instance.capacities)
        pending = np.ones(n, dtype=bool)
        for step in range(n):
            i = int(orders[k, step])
            offered = np.asarray(menu(i, pending.copy(), remaining.copy()), dtype=bool)
            mask = offered & (remaining > 0)
            best_offer = theta[i][offered].max(initial=0.0)
            best_avail = theta[i][mask].max(initial=0.0)
            j = int(select_from_uniform(spec, theta[i][None], mask[None], cu[k, step:step + 1])[0])
            if j >= 0:
                remaining[j] -= 1
                quality[k, i] = theta[i, j]
            sel[k, i] = j
            regret[k, i] = best_offer - best_avail
            sizes[k, i] = int(offered.sum())
            pending[i] = False
    return TrialBatch(orders, sel, regret, sizes, quality)


def _simulate(instance, menu_source, orders, cu) -> TrialBatch:
    if callable(menu_source):
        return _simulate_dynamic(instance, menu_source, orders, cu)
    x = validate_assortment(menu_source, instance)
    return _simulate_static(instance, x, orders, cu)


def run_trials(instance: Instance, menu_source, n_trials: int, master_seed: int = 0, seed_index: int = 0,
               order: OrderDistribution | None = None, start: int = 0) -> TrialBatch:
    """Simulate trials ``start..start+n_trials-1`` of the stream ``(master_seed, seed_index)``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    order = resolve_order(order, instance)
    n = instance.n_patients
    chunk = max(1, _CHUNK_CELLS // max(n * instance.m_providers, 1))
    parts = []
    for lo in range(start, start + n_trials, chunk):
        hi = min(start + n_trials, lo + chunk)
        ou, cu = trial_uniforms(master_seed, seed_index, n, lo, hi)
        orders = orders_from_uniforms(order, ou, instance.theta)
        parts.append(_simulate(instance, menu_source, orders, cu))
    if len(parts) == 1:
        return parts[0]
    return TrialBatch(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                        ("orders", "selections", "regret", "menu_sizes", "quality")))


def run_trial(instance: Instance, menu_source, sigma, rng: np.random.Generator | None = None,
              choice_uniforms=None) -> TrialRecord:
    """One trial with a given response order; choice variates come from ``rng`` or are passed in.

    ``choice_uniforms[t]`` drives the decision of the ``t``-th responder.
    """
    n = instance.n_patients
    sigma = validate_order(sigma, n)
    if choice_uniforms is None:
        rng = rng if rng is not None else np.random.default_rng()
        choice_uniforms = rng.random(n)
    cu = np.asarray(choice_uniforms, dtype=float).reshape(1, n)
    return _simulate(instance, menu_source, sigma[None, :], cu).record(0)


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class MetricSummary:
    mean: float
    se: float


_REPORT_FIELDS = ("mr", "mq", "norm_mr", "norm_mq", "fairness_min", "fairness_var",
                  "fairness_range", "mean_regret", "mean_assortment_size")


@dataclass(frozen=True)
class MetricsReport:
    """Mean and standard error across seeds of per-seed trial averages."""

    policy: str
    n_seeds: int
    n_trials: int
    mr: MetricSummary
    mq: MetricSummary
    norm_mr: MetricSummary
    norm_mq: MetricSummary
    fairness_min: MetricSummary
    fairness_var: MetricSummary
    fairness_range: MetricSummary
    mean_regret: MetricSummary
    mean_assortment_size: MetricSummary
    fairness_excluded: int

    def to_dict(self) -> dict:
        out = {"policy": self.policy, "n_seeds": self.n_seeds, "n_trials": self.n_trials}
        for name in _REPORT_FIELDS:
            s = getattr(self, name)
            out[name] = {"mean": _json_float(s.mean), "se": _json_float(s.se)}
        out["fairness_excluded_trials"] = self.fairness_excluded
        return out


@dataclass
class Evaluation:
    reports: dict
    per_seed: dict = field(default_factory=dict)  # policy -> list of per-seed metric dicts
    trials: dict = field(default_factory=dict)  # policy -> list of TrialBatch, when kept

    def csv_rows(self) -> list[tuple]:
        rows = []
        for policy in self.reports:
            for seed, batch in enumerate(self.trials.get(policy, [])):
                fmin, fvar, frange = batch.fairness()
                mr, mq = batch.mr, batch.mq
                reg = batch.regret.mean(axis=1)
                size = batch.menu_sizes.mean(axis=1)
                for k in range(batch.n_trials):
                    rows.append((seed, k, policy, _fmt(mr[k]), _fmt(mq[k]), _fmt(fmin[k]), _fmt(fvar[k]),
                                 _fmt(frange[k]), _fmt(reg[k]), _fmt(size[k])))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.csv_rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({name: r.to_dict() for name, r in self.reports.items()}, indent=2, sort_keys=True)


def _fmt(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _json_float(v):
    return None if v is None or math.isnan(v) else float(v)


def _summary(values) -> MetricSummary:
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return MetricSummary(math.nan, math.nan)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return MetricSummary(float(v.mean()), se)


def _policy_seed(master_seed: int, seed_index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(seed_index), 1]).generate_state(1)[0])


def _seed_stats(batch: TrialBatch) -> dict:
    fmin, fvar, frange = batch.fairness()
    empty = np.isnan(fmin)

    def nanmean(a):
        return float(a[~empty].mean()) if (~empty).any() else math.nan

    return {
        "mr": float(batch.mr.mean()), "mq": float(batch.mq.mean()),
        "fairness_min": nanmean(fmin), "fairness_var": nanmean(fvar), "fairness_range": nanmean(frange),
        "mean_regret": float(batch.regret.mean()), "mean_assortment_size": float(batch.menu_sizes.mean()),
        "excluded": int(empty.sum()),
    }


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else math.nan


def evaluate(instance, policies: Sequence[str], n_trials: int = 100, n_seeds: int = 15,
             master_seed: int = 0, order: OrderDistribution | None = None,
             planning=None, gd_config: GdConfig | None = None, keep_trials: bool = True) -> Evaluation:
    """Evaluate named policies over ``n_seeds`` seeds of ``n_trials`` shared trials each.

    ``instance`` is an :class:`Instance` or a callable ``seed_index -> Instance``
    (fresh instance per seed).  ``planning`` optionally gives the instance the
    policies see (same forms), e.g. with a misspecified match probability;
    simulation always uses ``instance``.  The random policy is always run as
    the normalization baseline but is only reported when requested.
    """
    if n_trials < 1 or n_seeds < 1:
        raise ValueError("n_trials and n_seeds must be >= 1")
    names = list(dict.fromkeys(policies))
    run_names = names if "random" in names else ["random"] + names
    per_seed: dict = {p: [] for p in run_names}
    trials: dict = {p: [] for p in run_names}
    for s in range(n_seeds):
        inst = instance(s) if callable(instance) else instance
        plan = inst if planning is None else (planning(s) if callable(planning) else planning)
        seed_order = resolve_order(order, plan)
        pseed = _policy_seed(master_seed, s)
        for name in run_names:
            source = build_policy(name, plan, seed=pseed, gd_config=gd_config, order=seed_order)
            batch = run_trials(inst, source, n_trials, master_seed, s, seed_order)
            per_seed[name].append(_seed_stats(batch))
            if keep_trials and name in names:
                trials[name].append(batch)
        base = per_seed["random"][-1]
        for name in run_names:
            st = per_seed[name][-1]
            st["norm_mr"] = _ratio(st["mr"], base["mr"])
            st["norm_mq"] = _ratio(st["mq"], base["mq"])
    reports = {}
    for name in names:
        rows = per_seed[name]
        reports[name] = MetricsReport(
            policy=name, n_seeds=n_seeds, n_trials=n_trials,
            **{f: _summary([r[f] for r in rows]) for f in _REPORT_FIELDS},
            fairness_excluded=sum(r["excluded"] for r in rows))
    return Evaluation(reports, {n: per_seed[n] for n in names}, {n: trials[n] for n in names if trials[n]})
