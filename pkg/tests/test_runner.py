import csv
import json
import os
import subprocess
import sys

import pytest

from ncspectral import cli
from ncspectral.runner import (
    SUMMARY_COLUMNS,
    ConfigError,
    FIGURE_PRESETS,
    default_therm,
    grid_values,
    parse_config,
    parse_config_text,
    point_key,
    preset_spec,
    run_sweep_spec,
    spec_from_dict,
)

THESIS = """\
version: 1
model:
  dim: 4
  n: [5, 10, 15, 20]
  omega: {start: 0.0, stop: 1.0, step: 0.1}
  mu: 1.0
  alpha: 0.0
"""


def tiny(out, **run):
    doc = {
        "model": {"dim": 2, "n": [2, 3], "omega": [0.5, 1.0], "mu": 1.0},
        "run": {"therm_sweeps": 10, "meas_sweeps": 40, "checkpoint_every": 6, "seed": 42, **run},
        "output": str(out),
    }
    return spec_from_dict(doc)


def tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_minimal_config_defaults(tmp_path):
    spec = parse_config_text("model:\n  dim: 2\n", tmp_path)
    assert spec.n_list == (5,) and spec.omega_grid == (1.0,) and spec.mu_grid == (1.0,)
    assert spec.therm_sweeps is None and spec.plan_for(5).therm_sweeps == 500
    assert spec.meas_interval == 1 and spec.output == os.path.join(str(tmp_path), "out")


def test_thesis_scan_enumerates_44_jobs(tmp_path):
    spec = parse_config_text(THESIS, tmp_path)
    pts = spec.points()
    assert len(pts) == 44
    assert pts == sorted(pts, key=lambda p: (p.n, p.omega))
    assert [p.omega for p in pts[:11]] == [round(0.1 * i, 12) for i in range(11)]


@pytest.mark.parametrize(
    "text, needle",
    [
        ("model:\n  dim: 2\n  mu: -1\n", "line 3: model.mu"),
        ("model:\n  dim: 3\n", "line 2: model.dim"),
        ("model:\n  dim: 2\n  colour: 1\n", "line 3: model.colour: unknown key"),
        ("model:\n  dim: 2\nrun:\n  sweeps: 5\n", "line 4: run.sweeps: unknown key"),
        ("model:\n  dim: 2\nextra: 1\n", "line 3: extra: unknown key"),
        ("version: 2\nmodel:\n  dim: 2\n", "line 1: version"),
        ("model:\n  dim: 2\n  n: [0]\n", "line 3: model.n"),
        ("model:\n  dim: 2\nrun:\n  meas_interval: 0\n", "line 4: run.meas_interval"),
        ("model:\n  dim: 2\n  omega: {start: 0, stop: 1}\n", "line 3: model.omega"),
        ("model: [1, 2\n", "line"),
        ("run:\n  seed: 1\n", "model: dim is required"),
        ("model:\n  dim: 2\nreport:\n  strip_prefactor: half\n", "line 4: report.strip_prefactor"),
    ],
)
def test_config_errors_have_context(tmp_path, text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, tmp_path)
    assert needle in str(exc.value)


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.yaml")


def test_grid_values():
    assert grid_values(2, "x") == (2.0,)
    assert grid_values([1, 2.5], "x") == (1.0, 2.5)
    assert grid_values({"start": 0.5, "stop": 3.0, "step": 0.25}, "x")[-1] == 3.0
    assert len(grid_values({"start": 0.0, "stop": 1.0, "step": 0.1}, "x")) == 11
    with pytest.raises(ConfigError):
        grid_values([], "x")
    with pytest.raises(ConfigError):
        grid_values(True, "x")


def test_therm_defaults():
    assert [default_therm(n) for n in (5, 10, 15, 20)] == [500, 500, 1000, 2000]


def test_point_keys_distinct():
    spec = parse_config_text(THESIS)
    keys = {point_key(p) for p in spec.points()}
    assert len(keys) == 44


def test_presets_valid():
    for name in FIGURE_PRESETS:
        spec = preset_spec(name, "/tmp/unused")
        assert spec.points()
    assert len(preset_spec("4d-omega-mu1").points()) == 44
    with pytest.raises(ConfigError):
        preset_spec("nope")


def test_sweep_outputs_and_summary(tmp_path):
    spec = tiny(tmp_path / "a")
    assert run_sweep_spec(spec, workers=1) == 0
    rows = list(csv.DictReader(open(tmp_path / "a" / "summary.csv")))
    assert list(rows[0]) == list(SUMMARY_COLUMNS)
    keys = [(int(r["dim"]), int(r["N"]), float(r["omega"]), float(r["mu"]), float(r["alpha"])) for r in rows]
    assert keys == sorted(keys) and len(set(keys)) == 4
    assert {r["method"] for r in rows} <= {"sokal_madras", "uncorrelated", "jackknife"}
    assert all(r["sweeps"] == "50" and r["seed"] == "42" for r in rows)
    pdir = tmp_path / "a" / "points"
    dirs = sorted(os.listdir(pdir))
    assert len(dirs) == 4
    for d in dirs:
        files = set(os.listdir(pdir / d))
        assert files == {"series.csv", "aggregate.csv", "state.ckpt", "meta.json"}
        meta = json.loads((pdir / d / "meta.json").read_text())
        assert meta["status"] == "complete" and meta["n_measurements"] == 40
        series = list(csv.DictReader(open(pdir / d / "series.csv")))
        assert len(series) == 40
        assert all(isinstance(float(v), float) for row in series for v in row.values())


def test_empty_measurement_plan(tmp_path):
    spec = tiny(tmp_path / "e", meas_sweeps=0)
    assert run_sweep_spec(spec, workers=1) == 0
    assert open(tmp_path / "e" / "summary.csv").read() == ",".join(SUMMARY_COLUMNS) + "\n"


def test_resume_after_interrupt_is_byte_identical(tmp_path):
    full = tiny(tmp_path / "full")
    assert run_sweep_spec(full, workers=1) == 0
    part = tiny(tmp_path / "part")
    assert run_sweep_spec(part, workers=1, stop_after=17) == 1
    assert open(tmp_path / "part" / "summary.csv").read().count("\n") == 1
    assert run_sweep_spec(part, resume=True, workers=1, stop_after=20) == 1
    assert run_sweep_spec(part, resume=True, workers=1) == 0
    a, b = tree(tmp_path / "full"), tree(tmp_path / "part")
    assert a.keys() == b.keys()
    for k in a:
        assert a[k] == b[k], k
    # a second resume skips everything and leaves the files alone
    assert run_sweep_spec(part, resume=True, workers=1) == 0
    assert tree(tmp_path / "part")["summary.csv"] == a["summary.csv"]


def test_same_seed_identical_trees_any_worker_count(tmp_path):
    assert run_sweep_spec(tiny(tmp_path / "x"), workers=1) == 0
    assert run_sweep_spec(tiny(tmp_path / "y"), workers=2) == 0
    a, b = tree(tmp_path / "x"), tree(tmp_path / "y")
    assert a == b
    assert run_sweep_spec(tiny(tmp_path / "z", seed=43), workers=1) == 0
    assert tree(tmp_path / "z")["summary.csv"] != a["summary.csv"]


def test_resume_rejects_mismatched_checkpoint(tmp_path):
    assert run_sweep_spec(tiny(tmp_path / "m"), workers=1, stop_after=5) == 1
    # different plan, same directory: the point fails, others are reported too
    assert run_sweep_spec(tiny(tmp_path / "m", meas_sweeps=41), resume=True, workers=1) == 1


def test_cli_dry_run(tmp_path, capsys):
    cfg = tmp_path / "thesis.yaml"
    cfg.write_text(THESIS)
    assert cli.main(["sweep", str(cfg), "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "# 44 jobs" in out and "meas_sweeps: 10000" in out
    assert cli.main(["sweep", "--figure", "4d-mu-omega0", "--dry-run", "--seed", "42", "--therm", "7"]) == 0
    out = capsys.readouterr().out
    assert "seed: 42" in out and "therm=7" in out


def test_cli_validation_error(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("model:\n  dim: 2\n  mu: -1\n")
    assert cli.main(["sweep", str(cfg)]) == 2
    assert "model.mu" in capsys.readouterr().err
    assert cli.main(["simulate", "--mu", "-1", "--dry-run"]) == 2


def test_cli_simulate_and_seed(tmp_path):
    args = ["simulate", "--dim", "2", "--n", "2", "--sweeps", "30", "--therm", "5", "--workers", "1"]
    assert cli.main(args + ["--seed", "42", "--out", str(tmp_path / "s1")]) == 0
    assert cli.main(args + ["--seed", "42", "--out", str(tmp_path / "s2")]) == 0
    assert tree(tmp_path / "s1") == tree(tmp_path / "s2")


def test_cli_ising_and_moyal(tmp_path):
    out = tmp_path / "ising.csv"
    assert cli.main(["ising", "--l", "4", "--beta-min", "0.2", "--beta-max", "0.3", "--beta-step", "0.05",
                     "--sweeps", "200", "--therm", "20", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 3 and all(float(v) == float(v) for r in rows for v in r.values())
    out = tmp_path / "moyal.csv"
    assert cli.main(["moyal-check", "--max-index", "2", "--theta", "1.0", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 9 + 81


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ncspectral", "sweep", "--figure", "check-mu-peak", "--dry-run"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "# 11 jobs" in res.stdout


def test_workers_env(monkeypatch):
    from ncspectral.runner import worker_count

    monkeypatch.setenv("NCSPECTRAL_WORKERS", "3")
    assert worker_count() == 3 and worker_count(5) == 5
