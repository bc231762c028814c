"""Parameter-sweep orchestration: config files, per-point runs, resume, CSV output.

Config schema (YAML, ``version: 1``)::

    version: 1
    model:
      dim: 4                    # 2 or 4
      n: [5, 10]                # scalar or list
      omega: {start: 0.0, stop: 1.0, step: 0.1}   # scalar, list or inclusive range
      mu: 1.0
      alpha: 0.0
      allow_large_omega: false
      hermitian_alpha_convention: false
    run:
      therm_sweeps: auto        # int, or auto = 500 (N <= 10), 1000 (N <= 15), 2000 above
      meas_sweeps: 10000
      meas_interval: 1          # sweeps between measurements
      seed: 0
      start: hot                # hot | cold
      hot_amplitude: 2.0
      proposal_amplitude: 2.0
      checkpoint_every: 200     # sweeps
    report:
      density: true
      strip_prefactor: d_term   # none | d_term | global
    output: runs/out            # relative paths resolve against the config file

Output layout under ``output``::

    summary.csv                 # one row per (point, observable), sorted
    points/<dim>d_N<n>_om<omega>_mu<mu>_al<alpha>/
        series.csv              # raw measurements, one row per measurement
        aggregate.csv           # this point's summary rows
        state.ckpt              # sampler checkpoint (see sampler module)
        meta.json               # params, plan, chain diagnostics, status

Each point draws from its own stream keyed by the base seed and a hash of
(dim, N, omega, mu, alpha), so results do not depend on grid order or on the
worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .model import Dim, ModelParams, ParamError
from .observables import ReportOptions, aggregate
from .sampler import (
    PROPOSAL_AMPLITUDE,
    RunPlan,
    Start,
    init_chain,
    load_checkpoint,
    run_chain,
    save_checkpoint,
)

SCHEMA_VERSION = 1
WORKERS_ENV = "NCSPECTRAL_WORKERS"

SUMMARY_COLUMNS = (
    "dim", "N", "omega", "mu", "alpha", "observable", "mean", "sigma", "tau",
    "t_eff", "sweeps", "seed", "method", "k_max", "flags",
)


class ConfigError(ValueError):
    pass


def default_therm(n: int) -> int:
    if n <= 10:
        return 500
    if n <= 15:
        return 1000
    return 2000


@dataclass(frozen=True)
class SweepSpec:
    dim: Dim
    n_list: tuple[int, ...]
    omega_grid: tuple[float, ...]
    mu_grid: tuple[float, ...]
    alpha_grid: tuple[float, ...]
    therm_sweeps: int | None  # None = by N
    meas_sweeps: int = 10000
    meas_interval: int = 1
    seed: int = 0
    start: Start = Start.HOT
    hot_amplitude: float = 2.0
    proposal_amplitude: float = PROPOSAL_AMPLITUDE
    checkpoint_every: int = 200
    report: ReportOptions = field(default_factory=ReportOptions)
    allow_large_omega: bool = False
    hermitian_alpha_convention: bool = False
    output: str = "out"

    def plan_for(self, n: int) -> RunPlan:
        therm = default_therm(n) if self.therm_sweeps is None else self.therm_sweeps
        return RunPlan(therm, self.meas_sweeps, self.meas_interval, self.seed, self.start, self.hot_amplitude)

    def points(self) -> list[ModelParams]:
        pts = [
            ModelParams(self.dim, n, om, mu, al, self.allow_large_omega, self.hermitian_alpha_convention)
            for n, om, mu, al in itertools.product(self.n_list, self.omega_grid, self.mu_grid, self.alpha_grid)
        ]
        return sorted(pts, key=point_sort_key)

    def as_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "model": {
                "dim": int(self.dim),
                "n": list(self.n_list),
                "omega": list(self.omega_grid),
                "mu": list(self.mu_grid),
                "alpha": list(self.alpha_grid),
                "allow_large_omega": self.allow_large_omega,
                "hermitian_alpha_convention": self.hermitian_alpha_convention,
            },
            "run": {
                "therm_sweeps": "auto" if self.therm_sweeps is None else self.therm_sweeps,
                "meas_sweeps": self.meas_sweeps,
                "meas_interval": self.meas_interval,
                "seed": self.seed,
                "start": self.start.value,
                "hot_amplitude": self.hot_amplitude,
                "proposal_amplitude": self.proposal_amplitude,
                "checkpoint_every": self.checkpoint_every,
            },
            "report": {"density": self.report.density, "strip_prefactor": self.report.strip_prefactor},
            "output": self.output,
        }


def point_sort_key(p: ModelParams):
    return (int(p.dim), p.n, p.omega, p.mu, p.alpha)


# -- config parsing ---------------------------------------------------------

_SECTIONS = {
    "version": None,
    "model": {"dim", "n", "omega", "mu", "alpha", "allow_large_omega", "hermitian_alpha_convention"},
    "run": {"therm_sweeps", "meas_sweeps", "meas_interval", "seed", "start", "hot_amplitude",
            "proposal_amplitude", "checkpoint_every"},
    "report": {"density", "strip_prefactor"},
    "output": None,
}


def _key_lines(text: str) -> dict[tuple[str, ...], int]:
    """1-based line of every mapping key, addressed by its path."""
    lines: dict[tuple[str, ...], int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = (*path, str(k.value))
                lines[key] = k.start_mark.line + 1
                walk(v, key)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, ())
    return lines


def grid_values(value, name: str) -> tuple[float, ...]:
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected number, list or range")
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"{name}: grid must not be empty")
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name}: non-numeric entry {v!r}")
            out.append(float(v))
        return tuple(out)
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "step"}
        if extra or not {"start", "stop", "step"} <= set(value):
            raise ConfigError(f"{name}: range needs exactly start, stop, step")
        start, stop, step = (float(value[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise ConfigError(f"{name}: need step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(count))
    raise ConfigError(f"{name}: expected number, list or range")


def spec_from_dict(doc: dict, base_dir: str | os.PathLike = ".", lines: dict | None = None) -> SweepSpec:
    lines = lines or {}

    def fail(path: tuple[str, ...], msg: str):
        line = None
        for i in range(len(path), 0, -1):
            line = lines.get(path[:i])
            if line is not None:
                break
        where = f"line {line}: " if line is not None else ""
        raise ConfigError(f"{where}{'.'.join(path)}: {msg}")

    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    for key, allowed in _SECTIONS.items():
        sub = doc.get(key)
        if allowed is not None and sub is not None:
            if not isinstance(sub, dict):
                fail((key,), "must be a mapping")
            for k in sub:
                if k not in allowed:
                    fail((key, str(k)), "unknown key")
    for key in doc:
        if key not in _SECTIONS:
            fail((str(key),), "unknown key")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        fail(("version",), f"unsupported schema version {version!r}")
    model = doc.get("model") or {}
    run = doc.get("run") or {}
    report = doc.get("report") or {}
    if "dim" not in model:
        fail(("model",), "dim is required")

    def get_grid(name, default):
        try:
            return grid_values(model.get(name, default), name)
        except ConfigError as exc:
            fail(("model", name), str(exc).split(": ", 1)[1])

    def get_int(sec, name, default, minimum):
        v = sec.get(name, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            fail(("run", name), f"expected integer >= {minimum}, got {v!r}")
        return v

    try:
        dim = Dim(model["dim"])
    except ValueError:
        fail(("model", "dim"), f"must be 2 or 4, got {model['dim']!r}")
    n_raw = model.get("n", 5)
    n_list = n_raw if isinstance(n_raw, list) else [n_raw]
    if not n_list or any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in n_list):
        fail(("model", "n"), f"expected positive integer(s), got {n_raw!r}")
    therm = run.get("therm_sweeps", "auto")
    if therm != "auto":
        therm = get_int(run, "therm_sweeps", 0, 0)
    start = run.get("start", "hot")
    if start not in ("hot", "cold"):
        fail(("run", "start"), f"must be hot or cold, got {start!r}")
    try:
        report_opts = ReportOptions(
            density=bool(report.get("density", True)),
            strip_prefactor=report.get("strip_prefactor", "d_term"),
        )
    except ValueError as exc:
        fail(("report", "strip_prefactor"), str(exc))
    output = doc.get("output", "out")
    if not os.path.isabs(output):
        output = os.path.join(os.fspath(base_dir), output)
    spec = SweepSpec(
        dim=dim,
        n_list=tuple(int(n) for n in n_list),
        omega_grid=get_grid("omega", 1.0),
        mu_grid=get_grid("mu", 1.0),
        alpha_grid=get_grid("alpha", 0.0),
        therm_sweeps=None if therm == "auto" else therm,
        meas_sweeps=get_int(run, "meas_sweeps", 10000, 0),
        meas_interval=get_int(run, "meas_interval", 1, 1),
        seed=get_int(run, "seed", 0, 0),
        start=Start(start),
        hot_amplitude=float(run.get("hot_amplitude", 2.0)),
        proposal_amplitude=float(run.get("proposal_amplitude", PROPOSAL_AMPLITUDE)),
        checkpoint_every=get_int(run, "checkpoint_every", 200, 1),
        report=report_opts,
        allow_large_omega=bool(model.get("allow_large_omega", False)),
        hermitian_alpha_convention=bool(model.get("hermitian_alpha_convention", False)),
        output=output,
    )
    try:
        spec.points()
    except ParamError as exc:
        fail(("model", exc.field), str(exc).split(": ", 1)[1])
    if spec.hot_amplitude < 0:
        fail(("run", "hot_amplitude"), "must be >= 0")
    if spec.proposal_amplitude < 0:
        fail(("run", "proposal_amplitude"), "must be >= 0")
    return spec


def parse_config_text(text: str, base_dir: str | os.PathLike = ".") -> SweepSpec:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{where}YAML parse error: {getattr(exc, 'problem', exc)}") from None
    return spec_from_dict(doc or {}, base_dir, _key_lines(text))


def parse_config(path: str | os.PathLike) -> SweepSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return parse_config_text(path.read_text(), path.parent)


# -- presets ----------------------------------------------------------------

_OMEGA_SCAN = {"start": 0.0, "stop": 1.0, "step": 0.1}
_MU_SCAN = {"start": 0.0, "stop": 3.0, "step": 0.25}
_THESIS_N = [5, 10, 15, 20]


def _preset(dim, omega, mu, alpha=0.0, n=_THESIS_N, meas=20000, therm="auto"):
    return {
        "version": SCHEMA_VERSION,
        "model": {"dim": dim, "n": list(n), "omega": omega, "mu": mu, "alpha": alpha},
        "run": {"therm_sweeps": therm, "meas_sweeps": meas, "meas_interval": 1},
    }


FIGURE_PRESETS = {
    "4d-alpha-omega1": _preset(4, 1.0, 1.0, {"start": 0.0, "stop": 6.2, "step": 0.4}),
    "4d-alpha-omega0.5": _preset(4, 0.5, 1.0, {"start": 0.0, "stop": 6.2, "step": 0.4}),
    "4d-omega-mu0": _preset(4, _OMEGA_SCAN, 0.0),
    "4d-omega-mu1": _preset(4, _OMEGA_SCAN, 1.0),
    "4d-omega-mu3": _preset(4, _OMEGA_SCAN, 3.0),
    "4d-mu-omega0": _preset(4, 0.0, _MU_SCAN),
    "4d-mu-omega0.5": _preset(4, 0.5, _MU_SCAN),
    "4d-mu-omega1": _preset(4, 1.0, _MU_SCAN),
    "2d-omega-mu0": _preset(2, _OMEGA_SCAN, 0.0),
    "2d-omega-mu1": _preset(2, _OMEGA_SCAN, 1.0),
    "2d-omega-mu3": _preset(2, _OMEGA_SCAN, 3.0),
    "2d-mu-omega0": _preset(2, 0.0, _MU_SCAN),
    "2d-mu-omega0.5": _preset(2, 0.5, _MU_SCAN),
    "2d-mu-omega1": _preset(2, 1.0, _MU_SCAN),
    # desk-scale versions of the qualitative checks in the slow test suite
    "check-omega-peak": _preset(4, {"start": 0.1, "stop": 1.0, "step": 0.1}, 1.0, n=[5, 10], meas=20000, therm=2000),
    "check-mu-peak": _preset(4, 0.0, {"start": 0.5, "stop": 3.0, "step": 0.25}, n=[10], meas=20000, therm=2000),
}


def preset_spec(name: str, output: str | None = None) -> SweepSpec:
    if name not in FIGURE_PRESETS:
        raise ConfigError(f"unknown figure preset {name!r}; choose from {', '.join(sorted(FIGURE_PRESETS))}")
    doc = json.loads(json.dumps(FIGURE_PRESETS[name]))
    doc["output"] = output or os.path.join("runs", name)
    return spec_from_dict(doc)


# -- running ----------------------------------------------------------------


def _fmt(x) -> str:
    # repr of a builtin float round-trips exactly; numpy scalars repr as np.float64(...)
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def point_key(p: ModelParams) -> tuple[int, ...]:
    text = f"{int(p.dim)}|{p.n}|{p.omega!r}|{p.mu!r}|{p.alpha!r}"
    digest = hashlib.sha256(text.encode()).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def point_dirname(p: ModelParams) -> str:
    return f"{int(p.dim)}d_N{p.n}_om{p.omega!r}_mu{p.mu!r}_al{p.alpha!r}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def summary_rows(params: ModelParams, series: dict, spec: SweepSpec, sweeps: int) -> list[list]:
    if not series or len(next(iter(series.values()))) == 0:
        return []
    summ = aggregate(series, params, spec.report)
    rows = []
    for name in sorted(summ.estimates):
        e = summ.estimates[name]
        rows.append([
            int(params.dim), params.n, params.omega, params.mu, params.alpha, name,
            float(e.mean), float(e.sigma), float(e.tau), float(e.t_eff), sweeps, spec.seed,
            e.method.value, "" if e.k_max is None else e.k_max, ";".join(e.flags),
        ])
    return rows


@dataclass
class PointResult:
    params: ModelParams
    rows: list[list]
    complete: bool
    skipped: bool = False


def run_point(params: ModelParams, spec: SweepSpec, resume: bool = False, stop_after: int | None = None) -> PointResult:
    """Run (or continue) one grid point and write its directory.

    ``stop_after`` interrupts the chain after that many sweeps in this call,
    leaving a checkpoint behind as a killed run would.
    """
    pdir = Path(spec.output) / "points" / point_dirname(params)
    pdir.mkdir(parents=True, exist_ok=True)
    meta_path = pdir / "meta.json"
    ckpt_path = pdir / "state.ckpt"
    agg_path = pdir / "aggregate.csv"
    plan = spec.plan_for(params.n)
    if resume and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        if meta.get("status") == "complete" and agg_path.exists():
            with open(agg_path, newline="") as fh:
                rows = list(csv.reader(fh))[1:]
            return PointResult(params, rows, True, skipped=True)
    state = records = None
    if resume and ckpt_path.exists():
        state, ck_plan, records = load_checkpoint(ckpt_path)
        if ck_plan != plan or state.params != params:
            raise RuntimeError(f"{ckpt_path}: checkpoint does not match the requested run")

    session = {"sweeps": 0}

    def on_sweep(st, recs):
        session["sweeps"] += 1
        if st.sweep_count % spec.checkpoint_every == 0 or st.sweep_count == plan.total_sweeps:
            save_checkpoint(ckpt_path, st, plan, recs)
        if stop_after is not None and session["sweeps"] >= stop_after:
            save_checkpoint(ckpt_path, st, plan, recs)
            return False
        return None

    if state is None:
        state = init_chain(params, plan, point_key(params), spec.proposal_amplitude)
        save_checkpoint(ckpt_path, state, plan, [])
    bundle = run_chain(params, plan, key=point_key(params), state=state, records=records, on_sweep=on_sweep)
    complete = bundle.meta["complete"] and state.sweep_count >= plan.total_sweeps
    columns = list(bundle.series)
    series_rows = zip(*(bundle.series[c] for c in columns)) if columns else []
    _write_atomic(pdir / "series.csv", _csv_text(columns, series_rows))
    rows = summary_rows(params, bundle.series, spec, state.sweep_count) if complete else []
    meta = {
        "schema": SCHEMA_VERSION,
        "status": "complete" if complete else "partial",
        "params": params.as_dict(),
        "seed": spec.seed,
        "point_key": list(point_key(params)),
        "n_measurements": len(bundle),
        "chain": bundle.meta,
        "report": {"density": spec.report.density, "strip_prefactor": spec.report.strip_prefactor},
    }
    if complete:
        _write_atomic(agg_path, _csv_text(SUMMARY_COLUMNS, rows))
    _write_atomic(meta_path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return PointResult(params, [[_fmt(x) for x in r] for r in rows], complete)


def _run_point_job(args):
    params, spec, resume, stop_after = args
    return run_point(params, spec, resume, stop_after)


def worker_count(requested: int | None = None) -> int:
    if requested:
        return max(1, requested)
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep_spec(
    spec: SweepSpec,
    resume: bool = False,
    workers: int | None = None,
    stop_after: int | None = None,
) -> int:
    """Run every grid point; returns a process exit code.

    Finished points are collected by this process only, which writes
    ``summary.csv``. Points that fail or are interrupted are left out and the
    exit code is nonzero; their checkpoints stay on disk for ``resume``.
    """
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    # resolved config without the output path, so equal runs give equal trees
    echo = spec.as_dict()
    echo.pop("output")
    _write_atomic(out / "sweep.yaml", yaml.safe_dump(echo, sort_keys=True))
    points = spec.points()
    jobs = [(p, spec, resume, stop_after) for p in points]
    n_workers = min(worker_count(workers), max(1, len(jobs)))
    results: list[PointResult] = []
    failures = 0
    if n_workers == 1:
        for job in jobs:
            try:
                results.append(_run_point_job(job))
            except Exception as exc:  # noqa: BLE001 - keep other points going
                failures += 1
                print(f"point {point_dirname(job[0])} failed: {exc}")
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_run_point_job, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    failures += 1
                    print(f"point {point_dirname(job[0])} failed: {exc}")
    rows = []
    incomplete = 0
    for res in sorted(results, key=lambda r: point_sort_key(r.params)):
        if not res.complete:
            incomplete += 1
        rows.extend(res.rows)
    _write_atomic(out / "summary.csv", _csv_text(SUMMARY_COLUMNS, rows))
    return 1 if (failures or incomplete) else 0


def load_summary(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_table(rows: list[dict], observable: str, x: str) -> dict[int, list[tuple[float, float, float]]]:
    """Group one observable by N as (x, mean, sigma) triples sorted by x."""
    out: dict[int, list] = {}
    for r in rows:
        if r["observable"] != observable:
            continue
        out.setdefault(int(r["N"]), []).append((float(r[x]), float(r["mean"]), float(r["sigma"])))
    return {k: sorted(v) for k, v in out.items()}


def with_overrides(spec: SweepSpec, **kw) -> SweepSpec:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(spec, **kw)
