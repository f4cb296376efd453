"""Command-line front end: ``gen``, ``run``, ``sweep`` and ``oracle`` subcommands.

Experiments are described by a JSON config (or a bundled preset name)::

    {"generator": {"type": "uniform", "m": 10, "n_over_m": 4},
     "choice": {"type": "uniform", "p": 0.5},
     "grid": {"p": [0.1, 0.5], "n_over_m": [1, 8]},
     "policies": ["greedy", "pairwise", "gd"],
     "order": {"type": "uniform"},
     "n_trials": 100, "n_seeds": 15, "seed": 0, "gd": {"iterations": 2000}}

Grid axes override the matching generator/choice fields per cell.  Instances
depend only on the master seed, seed index and generator settings, so cells
that differ only in what policies are told (``p_hat``, ``noise_s``) are
evaluated on the same instances.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .core import Instance, InstanceError, choice_from_dict
from .gen import (GeoConfig, GeoInstance, gen_geo_instance, gen_normal_theta, gen_uniform_theta, load_instance,
                  perturb_p, perturb_theta, region_match_csv, save_instance)
from .oracle import OracleSizeError, exact_expected_metrics
from .orders import Batched, EnvyBatches, ProportionalToMeanTheta, UniformRandom
from .policies import POLICY_NAMES, GdConfig, build_policy
from .simulate import evaluate

EXIT_OK, EXIT_CONFIG, EXIT_SIZE = 0, 2, 3
PRESETS = ("example2", "fig2-uniform", "fig3-phase", "fig5-choice", "fig8-assumptions", "paper-ct")
GRID_AXES = ("p", "gamma", "alpha", "n_over_m", "n", "m", "capacity", "s", "p_hat", "noise_s", "order")
DEFAULT_MAX_CELLS = 200
_REPORT_METRICS = ("mr", "mq", "norm_mr", "norm_mq", "fairness_min", "fairness_var", "fairness_range",
                   "mean_regret", "mean_assortment_size")


class ConfigError(ValueError):
    pass


class SizeGuardError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    generator: dict
    choice: dict = field(default_factory=lambda: {"type": "uniform", "p": 1.0})
    grid: dict = field(default_factory=dict)
    policies: list = field(default_factory=lambda: ["greedy", "pairwise"])
    order: dict = field(default_factory=lambda: {"type": "uniform"})
    n_trials: int = 100
    n_seeds: int = 15
    seed: int = 0
    gd: dict = field(default_factory=dict)
    max_cells: int = DEFAULT_MAX_CELLS
    name: str = ""
    description: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "generator" not in d:
            raise ConfigError("config: missing required key 'generator'")
        cfg = cls(**d)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.generator.get("type") not in ("uniform", "normal", "geo", "fixed"):
            raise ConfigError(f"generator.type must be uniform, normal, geo or fixed, got {self.generator.get('type')!r}")
        if not self.policies:
            raise ConfigError("policy list is empty")
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if unknown:
            raise ConfigError(f"unknown policy names {unknown}; known: {list(POLICY_NAMES)}")
        for axis, values in self.grid.items():
            if axis not in GRID_AXES:
                raise ConfigError(f"unknown grid axis {axis!r}; known: {list(GRID_AXES)}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"grid axis {axis!r} must be a nonempty list")
        if self.n_trials < 1 or self.n_seeds < 1:
            raise ConfigError("n_trials and n_seeds must be >= 1")
        try:
            gd_config(self.gd)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"gd: {exc}") from exc
        try:
            choice_from_dict(self.choice)
        except InstanceError as exc:
            raise ConfigError(f"choice: {exc}") from exc

    def cells(self) -> list[dict]:
        axes = list(self.grid)
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.grid[a] for a in axes))]


def gd_config(d: dict) -> GdConfig:
    d = dict(d)
    if "binarization_weight_schedule" in d:
        d["binarization_weight_schedule"] = tuple(d["binarization_weight_schedule"])
    return GdConfig(**d)


def load_config(source: str) -> ExperimentConfig:
    if source in PRESETS:
        text = resources.files("menumatch").joinpath("presets", f"{source}.json").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config {source!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
        text = path.read_text()
    try:
        return ExperimentConfig.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


# ---------------------------------------------------------------- cells

def _cell_choice(cfg: ExperimentConfig, cell: dict):
    d = dict(cfg.choice)
    if "gamma" in cell:
        d = {"type": "mnl", "gamma": cell["gamma"]}
    if "alpha" in cell:
        d = {"type": "threshold", "p": d.get("p", 1.0), "alpha": cell["alpha"]}
    if "p" in cell:
        if d["type"] == "mnl":
            raise ConfigError("grid axis 'p' does not apply to the MNL choice model")
        d["p"] = cell["p"]
    try:
        return choice_from_dict(d)
    except InstanceError as exc:
        raise ConfigError(f"choice: {exc}") from exc


def _cell_order(cfg: ExperimentConfig, cell: dict):
    d = cell.get("order", cfg.order)
    kind = d.get("type", "uniform")
    if kind == "uniform":
        return UniformRandom()
    if kind == "proportional":
        return ProportionalToMeanTheta()
    if kind == "envy_batches":
        return EnvyBatches(int(d.get("n_batches", 4)))
    if kind == "batched":
        return Batched(d["batches"])
    raise ConfigError(f"unknown order type {kind!r}")


def _size(cfg: ExperimentConfig, cell: dict) -> tuple[int, int]:
    g = cfg.generator
    m = int(cell.get("m", g.get("m", 10)))
    if "n" in cell:
        n = int(cell["n"])
    elif "n_over_m" in cell:
        n = int(round(cell["n_over_m"] * m))
    elif "n" in g:
        n = int(g["n"])
    else:
        n = int(round(g.get("n_over_m", 1) * m))
    return n, m


class CellFactory:
    """Picklable ``seed_index -> Instance`` builder for one grid cell."""

    def __init__(self, cfg: ExperimentConfig, cell: dict):
        self.cfg, self.cell = cfg, cell
        self.choice = _cell_choice(cfg, cell)
        gen = cfg.generator
        if gen["type"] == "fixed":
            theta = np.asarray(gen["theta"], dtype=float)
            self.n, self.m = theta.shape
        elif gen["type"] == "geo":
            geo = GeoConfig.from_dict({k: v for k, v in gen.items() if k != "type"})
            self.n, self.m = geo.n_patients, geo.n_providers
        else:
            self.n, self.m = _size(cfg, cell)
        caps = cell.get("capacity", gen.get("capacity", 1))
        self.capacities = np.full(self.m, int(caps))

    def rng(self, seed_index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([int(self.cfg.seed), int(seed_index), 2]))

    def geo(self, seed_index: int) -> GeoInstance:
        gen = self.cfg.generator
        geo = GeoConfig.from_dict({k: v for k, v in gen.items() if k != "type"})
        return gen_geo_instance(geo, self.rng(seed_index))

    def __call__(self, seed_index: int):
        gen = self.cfg.generator
        rng = self.rng(seed_index)
        if gen["type"] == "fixed":
            return Instance(gen["theta"], self.capacities, self.choice)
        if gen["type"] == "uniform":
            return gen_uniform_theta(self.n, self.m, rng, self.choice, self.capacities)
        if gen["type"] == "normal":
            s = float(self.cell.get("s", gen.get("s", 0.1)))
            return gen_normal_theta(self.n, self.m, s, rng, self.choice, self.capacities)
        inst = self.geo(seed_index).instance
        choice = self.choice if ("p" in self.cell or "alpha" in self.cell or "gamma" in self.cell) else inst.choice
        return inst.replace(choice=choice, capacities=self.capacities)


class PlanningFactory:
    """What the policies are told: misspecified match probability and/or noisy qualities."""

    def __init__(self, truth, master_seed: int, p_hat, noise_s):
        self.truth, self.master_seed, self.p_hat, self.noise_s = truth, master_seed, p_hat, noise_s

    def __call__(self, seed_index: int) -> Instance:
        inst = self.truth(seed_index) if callable(self.truth) else self.truth
        if self.noise_s is not None:
            rng = np.random.default_rng(np.random.SeedSequence([int(self.master_seed), int(seed_index), 3]))
            _, inst = perturb_theta(inst, float(self.noise_s), rng)
        if self.p_hat is not None:
            inst = perturb_p(inst, float(self.p_hat))
        return inst


def _policies(cfg: ExperimentConfig, order) -> tuple[list, list]:
    names = list(cfg.policies)
    if "random" not in names:
        names = ["random"] + names
    skipped = []
    if not isinstance(order, (Batched, EnvyBatches)) and "order_aware" in names:
        names.remove("order_aware")
        skipped.append("order_aware")
    return names, skipped


def run_cell(cfg: ExperimentConfig, index: int, cell: dict, trials_override=None, seeds_override=None,
             instance_override=None):
    """Evaluate one cell; returns ``(summary, per-trial csv, per-region csv or None)``.

    The region table is only built for generated geographic instances and
    reuses the first seed's trials.
    """
    factory = CellFactory(cfg, cell)
    truth = factory if instance_override is None else instance_override
    planning = None
    if "p_hat" in cell or "noise_s" in cell:
        planning = PlanningFactory(truth, cfg.seed, cell.get("p_hat"), cell.get("noise_s"))
    order = _cell_order(cfg, cell)
    names, skipped = _policies(cfg, order)
    result = evaluate(truth, names, n_trials=trials_override or cfg.n_trials,
                      n_seeds=seeds_override or cfg.n_seeds, master_seed=cfg.seed, order=order,
                      planning=planning, gd_config=gd_config(cfg.gd))
    summary = {"cell": index, "params": cell, "reports": {n: r.to_dict() for n, r in result.reports.items()}}
    if skipped:
        summary["skipped_policies"] = skipped
    regions = None
    if cfg.generator["type"] == "geo" and instance_override is None:
        summary["needs_match_model"] = "synthetic stand-in: independent Bernoulli(comorbidity_rate * specialty_rate)"
        regions = _region_report(factory.geo(0), result)
    return summary, result.to_csv(), regions


def _run_cell_job(args):
    return run_cell(*args)


def _run_cells(cfg, cells, jobs, trials, seeds):
    jobs_args = [(cfg, k, c, trials, seeds) for k, c in enumerate(cells)]
    if jobs and jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell_job, jobs_args))
    return [_run_cell_job(a) for a in jobs_args]


def _guard(cfg: ExperimentConfig, cells: list, force: bool) -> None:
    if not cells:
        raise ConfigError("grid has no cells")
    if len(cells) > cfg.max_cells and not force:
        raise SizeGuardError(f"grid has {len(cells)} cells, above the limit of {cfg.max_cells}; pass --force to run it")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "trials", None) is not None:
        cfg.n_trials = args.trials
    if getattr(args, "seeds", None) is not None:
        cfg.n_seeds = args.seeds
    cfg.check()
    return cfg


# ---------------------------------------------------------------- commands

def cmd_generate(cfg: ExperimentConfig, out: Path, force: bool = False) -> list[Path]:
    cells = cfg.cells()
    _guard(cfg, cells, force)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for k, cell in enumerate(cells):
        factory = CellFactory(cfg, cell)
        for s in range(cfg.n_seeds):
            path = out / f"cell{k:03d}_seed{s:03d}.json"
            if cfg.generator["type"] == "geo":
                geo = factory.geo(s)
                inst = factory(s)
                geo = GeoInstance(inst, geo.patient_regions, geo.provider_regions, geo.patient_coords,
                                  geo.provider_coords, geo.beta, geo.region_ids, geo.config)
                save_instance(geo, path)
            else:
                save_instance(factory(s), path)
            written.append(path)
    return written


def cmd_run(cfg: ExperimentConfig, out: Path, instance_path: str | None = None, jobs: int = 1,
            force: bool = False) -> list[dict]:
    cells = cfg.cells()
    _guard(cfg, cells, force)
    out.mkdir(parents=True, exist_ok=True)
    if instance_path is not None:
        loaded = load_instance(instance_path)
        inst = loaded.instance if isinstance(loaded, GeoInstance) else loaded
        results = [run_cell(cfg, k, c, None, None, inst) for k, c in enumerate(cells)]
    else:
        results = _run_cells(cfg, cells, jobs, None, None)
    summaries = [s for s, _, _ in results]
    single = len(results) == 1
    for k, (_, text, regions) in enumerate(results):
        suffix = "" if single else f"_cell{k:03d}"
        (out / f"trials{suffix}.csv").write_text(text)
        if regions is not None:
            (out / f"regions{suffix}.csv").write_text(regions)
    (out / "report.json").write_text(json.dumps(summaries, indent=2, sort_keys=True) + "\n")
    return summaries


def _region_report(geo: GeoInstance, result) -> str:
    buf = []
    for name, batches in result.trials.items():
        batch = batches[0]
        lines = region_match_csv(geo, batch.matched.mean(axis=0), batch.quality.mean(axis=0)).splitlines()
        if not buf:
            buf.append("policy," + lines[0])
        buf.extend(f"{name},{line}" for line in lines[1:])
    return "\n".join(buf) + "\n"


def _metric_rows(summaries: list[dict], axes: list[str]) -> tuple[str, str]:
    metrics = io.StringIO()
    mw = csv.writer(metrics, lineterminator="\n")
    header = ["cell", *axes, "policy"]
    for m in _REPORT_METRICS:
        header += [f"{m}_mean", f"{m}_se"]
    mw.writerow(header)
    winners = io.StringIO()
    ww = csv.writer(winners, lineterminator="\n")
    ww.writerow(["cell", *axes, "best_mq_policy", "best_mq", "best_mr_policy", "best_mr"])

    def fmt(v):
        return "" if v is None else repr(float(v))

    for s in summaries:
        params = [json.dumps(s["params"][a], sort_keys=True) if isinstance(s["params"][a], dict)
                  else s["params"][a] for a in axes]
        best = {}
        for name, rep in s["reports"].items():
            row = [s["cell"], *params, name]
            for m in _REPORT_METRICS:
                row += [fmt(rep[m]["mean"]), fmt(rep[m]["se"])]
            mw.writerow(row)
            if name == "random":
                continue
            for key in ("mq", "mr"):
                v = rep[key]["mean"]
                if v is not None and (key not in best or v > best[key][1]):
                    best[key] = (name, v)
        bq = best.get("mq", ("", None))
        br = best.get("mr", ("", None))
        ww.writerow([s["cell"], *params, bq[0], fmt(bq[1]), br[0], fmt(br[1])])
    return metrics.getvalue(), winners.getvalue()


def cmd_sweep(cfg: ExperimentConfig, out: Path, jobs: int = 1, force: bool = False) -> list[dict]:
    cells = cfg.cells()
    _guard(cfg, cells, force)
    out.mkdir(parents=True, exist_ok=True)
    results = _run_cells(cfg, cells, jobs, None, None)
    summaries = [s for s, _, _ in results]
    metrics, winners = _metric_rows(summaries, list(cfg.grid))
    (out / "metrics.csv").write_text(metrics)
    (out / "winners.csv").write_text(winners)
    (out / "report.json").write_text(json.dumps(summaries, indent=2, sort_keys=True) + "\n")
    return summaries


def _read_assortment(path: str) -> np.ndarray:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if isinstance(d, dict):
        if set(d) - {"x"} or "x" not in d:
            raise ConfigError(f"{path}: assortment file must be a list or an object with only key 'x'")
        d = d["x"]
    return np.asarray(d)


def cmd_oracle(instance_path: str, assortment_path: str | None = None, policy: str | None = None) -> dict:
    loaded = load_instance(instance_path)
    inst = loaded.instance if isinstance(loaded, GeoInstance) else loaded
    if (assortment_path is None) == (policy is None):
        raise ConfigError("pass exactly one of --assortment or --policy")
    if assortment_path is not None:
        res = exact_expected_metrics(inst, _read_assortment(assortment_path))
    else:
        src = build_policy(policy, inst)
        if callable(src):
            res = exact_expected_metrics(inst, menu=src)
        else:
            res = exact_expected_metrics(inst, src)
    return {"mr": float(res.mr), "mq": float(res.mq)}


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="menumatch", description="Assortment policies for patient-provider matching.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, with_jobs=True):
        p.add_argument("--config", required=True, help=f"config file or preset ({', '.join(PRESETS)})")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--trials", type=int, help="trials per seed")
        p.add_argument("--seeds", type=int, help="number of seeds")
        p.add_argument("--force", action="store_true", help="run grids above the size limit")
        if with_jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes for grid cells")

    common(sub.add_parser("gen", help="write seeded instances for every grid cell"), with_jobs=False)
    run = sub.add_parser("run", help="evaluate policies; per-trial CSV and JSON report")
    common(run)
    run.add_argument("--instance", help="evaluate on this instance file instead of the generator")
    common(sub.add_parser("sweep", help="evaluate the full grid; metric and winner tables"))
    orc = sub.add_parser("oracle", help="exact MR/MQ of an assortment on a small instance")
    orc.add_argument("--instance", required=True)
    orc.add_argument("--assortment", help="JSON list of rows, or {\"x\": rows}")
    orc.add_argument("--policy", choices=POLICY_NAMES)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "oracle":
            print(json.dumps(cmd_oracle(args.instance, args.assortment, args.policy), sort_keys=True))
            return EXIT_OK
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "gen":
            paths = cmd_generate(cfg, args.out, args.force)
            print(f"wrote {len(paths)} instance files to {args.out}")
        elif args.command == "run":
            summaries = cmd_run(cfg, args.out, args.instance, args.jobs, args.force)
            _print_summaries(summaries)
        else:
            summaries = cmd_sweep(cfg, args.out, args.jobs, args.force)
            print(f"swept {len(summaries)} cells; tables in {args.out}")
        return EXIT_OK
    except (OracleSizeError, SizeGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except (ConfigError, InstanceError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _print_summaries(summaries: list[dict]) -> None:
    for s in summaries:
        if s["params"]:
            print(f"cell {s['cell']}: {json.dumps(s['params'], sort_keys=True)}")
        for name, rep in s["reports"].items():
            mq, mr = rep["mq"], rep["mr"]
            se = "" if mq["se"] is None else f" +- {mq['se']:.4f}"
            print(f"  {name:12s} MQ {mq['mean']:.4f}{se}  MR {mr['mean']:.4f}")


if __name__ == "__main__":
    raise SystemExit(main())
