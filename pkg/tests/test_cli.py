import json

import numpy as np
import pytest

from menumatch.cli import EXIT_CONFIG, EXIT_OK, EXIT_SIZE, PRESETS, load_config, main
from menumatch.core import Instance, Uniform
from menumatch.gen import save_instance
from menumatch.simulate import run_trials


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_config(name)
    assert cfg.cells()


def test_geo_preset_size():
    cfg = load_config("paper-ct")
    assert (cfg.generator["n_patients"], cfg.generator["n_providers"]) == (1225, 700)


def test_gen_grid_writes_files(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 3, "n": 4},
                                       "grid": {"p": [0.2, 0.5, 0.8]}, "n_seeds": 2})
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_OK
    assert len(list((tmp_path / "out").glob("*.json"))) == 6


def test_empty_grid_axis_is_config_error(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 3, "n": 4}, "grid": {"p": []}})
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_unknown_policy_is_config_error(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 3, "n": 4}, "policies": ["magic"]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_run_example2(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", "example2", "--out", str(out), "--trials", "2000", "--seeds", "3"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())[0]["reports"]
    expected = {"greedy": 0.1640625, "pairwise": 0.175, "group": 0.21875, "group_matched": 0.175}
    for name, exact in expected.items():
        assert abs(report[name]["mq"]["mean"] - exact) < 0.01
    rows = (out / "trials.csv").read_text().splitlines()
    policies = {r.split(",")[2] for r in rows[1:]}
    assert policies <= set(load_config("example2").policies) | {"random"}


def test_run_is_byte_identical(tmp_path):
    args = ["run", "--config", "example2", "--trials", "20", "--seeds", "2", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for f in ("trials.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sweep_winner_table(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 3},
                                       "choice": {"type": "uniform", "p": 0.5},
                                       "grid": {"p": [0.1, 0.9], "n_over_m": [1, 2]},
                                       "policies": ["greedy", "pairwise"], "n_trials": 10, "n_seeds": 2})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    winners = (tmp_path / "o" / "winners.csv").read_text().splitlines()
    assert len(winners) == 5
    assert all(line.split(",")[3] in ("greedy", "pairwise") for line in winners[1:])


def test_degenerate_sweep(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 2, "n": 2},
                                       "policies": ["greedy"], "n_trials": 5, "n_seeds": 2})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert len((tmp_path / "o" / "winners.csv").read_text().splitlines()) == 2


def test_grid_guard(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 2, "n": 2}, "max_cells": 1,
                                       "grid": {"p": [0.1, 0.2]}, "policies": ["greedy"], "n_trials": 2,
                                       "n_seeds": 1})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_SIZE
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--force"]) == EXIT_OK


def test_parallel_jobs_match_serial(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 3, "n": 6},
                                       "grid": {"p": [0.3, 0.7]}, "policies": ["greedy", "pairwise"],
                                       "n_trials": 10, "n_seeds": 2})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == EXIT_OK
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_oracle_command(tmp_path, capsys):
    inst = tmp_path / "i.json"
    save_instance(Instance(np.array([[0.7], [0.7], [0.1]]), choice=Uniform(0.75)), inst)
    x = _write(tmp_path / "x.json", {"x": [[1], [1], [0]]})
    assert main(["oracle", "--instance", str(inst), "--assortment", x]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["mq"] == pytest.approx(0.21875)
    z = _write(tmp_path / "z.json", [[0], [0], [0]])
    assert main(["oracle", "--instance", str(inst), "--assortment", z]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"mq": 0.0, "mr": 0.0}


def test_oracle_random_instance_vs_monte_carlo(tmp_path, capsys):
    rng = np.random.default_rng(0)
    inst = Instance(rng.random((4, 3)), choice=Uniform(0.6))
    save_instance(inst, tmp_path / "i.json")
    x = (rng.random((4, 3)) < 0.5).astype(int)
    xp = _write(tmp_path / "x.json", x.tolist())
    assert main(["oracle", "--instance", str(tmp_path / "i.json"), "--assortment", xp]) == EXIT_OK
    mq = json.loads(capsys.readouterr().out)["mq"]
    b = run_trials(inst, x, 20_000)
    assert abs(b.mq.mean() - mq) <= 4 * b.mq.std(ddof=1) / np.sqrt(b.n_trials)


def test_oracle_size_guard(tmp_path):
    save_instance(Instance(np.full((9, 2), 0.5)), tmp_path / "i.json")
    x = _write(tmp_path / "x.json", np.ones((9, 2), int).tolist())
    assert main(["oracle", "--instance", str(tmp_path / "i.json"), "--assortment", x]) == EXIT_SIZE


def test_run_with_instance_file(tmp_path):
    save_instance(Instance(np.array([[0.7], [0.7], [0.1]]), choice=Uniform(0.75)), tmp_path / "i.json")
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "uniform", "m": 1, "n": 3},
                                       "policies": ["pairwise"], "n_trials": 500, "n_seeds": 2})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--instance", str(tmp_path / "i.json")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())[0]["reports"]["pairwise"]
    assert abs(rep["mq"]["mean"] - 0.175) < 0.03


def test_small_geo_run_writes_region_table(tmp_path):
    cfg = _write(tmp_path / "c.json", {"generator": {"type": "geo", "n_patients": 30, "n_providers": 10},
                                       "policies": ["greedy", "pairwise"], "n_trials": 5, "n_seeds": 1})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = (tmp_path / "o" / "regions.csv").read_text().splitlines()
    assert rows[0] == "policy,region,n_patients,match_rate,match_quality"
    assert {r.split(",")[0] for r in rows[1:]} == {"random", "greedy", "pairwise"}
    report = json.loads((tmp_path / "o" / "report.json").read_text())[0]
    assert "stand-in" in report["needs_match_model"]
