"""Metropolis chain over the matrix entries.

One step updates a single complex entry; the entries are visited in a fixed
order (psi, Z_0, Z_1, ..., row-major inside each matrix), so a sweep is
exactly ``n_fields * N^2`` steps. Every step consumes three uniforms from the
chain generator: real and imaginary part of the proposal and the acceptance
test, whether the step runs through ``metropolis_step`` or the compiled
``run_sweep``.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .action import ActionCache, commit, propose_delta
from .model import DEFAULT_HOT_AMPLITUDE, FieldConfig, ModelParams, derive_coeffs, random_config, zero_config

PROPOSAL_AMPLITUDE = 2.0
RNG_NAME = "numpy.random.PCG64 via SeedSequence(entropy=seed, spawn_key=point key)"
CHECKPOINT_FORMAT = "ncspectral-checkpoint"
CHECKPOINT_VERSION = 1


class Start(str, enum.Enum):
    HOT = "hot"
    COLD = "cold"


class ActionKind(str, enum.Enum):
    MODEL = "model"
    # test seam: S = sum over all entries of |x|^2
    GAUSSIAN = "gaussian"


_KIND_CODE = {ActionKind.MODEL: _kernels.ACTION_MODEL, ActionKind.GAUSSIAN: _kernels.ACTION_GAUSSIAN}


@dataclass(frozen=True)
class RunPlan:
    therm_sweeps: int = 500
    meas_sweeps: int = 1000
    meas_interval: int = 1
    seed: int = 0
    start: Start = Start.HOT
    hot_amplitude: float = DEFAULT_HOT_AMPLITUDE

    def __post_init__(self):
        object.__setattr__(self, "start", Start(self.start))
        if self.therm_sweeps < 0:
            raise ValueError("therm_sweeps must be >= 0")
        if self.meas_sweeps < 0:
            raise ValueError("meas_sweeps must be >= 0")
        if self.meas_interval < 1:
            raise ValueError("meas_interval must be >= 1")
        if self.hot_amplitude < 0:
            raise ValueError("hot_amplitude must be >= 0")

    @property
    def total_sweeps(self) -> int:
        return self.therm_sweeps + self.meas_sweeps

    def as_dict(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.value
        return d


def make_rng(seed: int, key: tuple[int, ...] = ()) -> np.random.Generator:
    """Independent stream for ``(seed, key)``; distinct keys never overlap in practice."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


class ChainState:
    """Single-owner Markov chain state."""

    def __init__(
        self,
        params: ModelParams,
        config: FieldConfig,
        rng: np.random.Generator,
        amplitude: float = PROPOSAL_AMPLITUDE,
        action_kind: ActionKind = ActionKind.MODEL,
    ):
        self.params = params
        self.coeffs = derive_coeffs(params)
        self.config = config
        self.cache = ActionCache(params, config, self.coeffs)
        self.rng = rng
        self.amplitude = float(amplitude)
        self.action_kind = ActionKind(action_kind)
        self.cursor = 0
        self.sweep_count = 0
        self.step_count = 0
        self.accept_count = 0
        self.max_drift = 0.0

    @property
    def n_sites(self) -> int:
        return self.params.n_sites

    @property
    def site(self) -> tuple[int, int, int]:
        n = self.params.n
        fld, rem = divmod(self.cursor, n * n)
        return fld, rem // n, rem % n

    @property
    def acceptance(self) -> float:
        return self.accept_count / self.step_count if self.step_count else 0.0

    @property
    def action(self) -> float:
        if self.action_kind is ActionKind.GAUSSIAN:
            return full_gaussian_action(self.config)
        return self.cache.total


def full_gaussian_action(config: FieldConfig) -> float:
    return float(np.vdot(config.fields, config.fields).real)


def init_chain(
    params: ModelParams,
    plan: RunPlan,
    key: tuple[int, ...] = (),
    amplitude: float = PROPOSAL_AMPLITUDE,
    action_kind: ActionKind = ActionKind.MODEL,
) -> ChainState:
    rng = make_rng(plan.seed, key)
    if plan.start is Start.HOT:
        config = random_config(params, plan.hot_amplitude, rng)
    else:
        config = zero_config(params)
    return ChainState(params, config, rng, amplitude, action_kind)


def metropolis_step(state: ChainState, forced_delta_s: float | None = None) -> bool:
    """One Metropolis update at the cursor site; the cursor always advances.

    ``forced_delta_s`` replaces the computed action change (test hook); an
    accepted move still applies the drawn proposal.
    """
    u = state.rng.random(3)
    a = state.amplitude
    delta = complex(a * (2.0 * u[0] - 1.0), a * (2.0 * u[1] - 1.0))
    site = state.site
    if state.action_kind is ActionKind.GAUSSIAN:
        x = state.config.fields[site]
        ds = abs(x + delta) ** 2 - abs(x) ** 2
    else:
        ds = propose_delta(state, site, delta)
    if forced_delta_s is not None:
        ds = forced_delta_s
    accepted = bool(_kernels.metropolis_accept(ds, u[2]))
    if accepted:
        if state.action_kind is ActionKind.GAUSSIAN:
            state.config.fields[site] += delta
        else:
            commit(state, site, delta)
        state.accept_count += 1
    state.step_count += 1
    state.cursor = (state.cursor + 1) % state.n_sites
    return accepted


def run_sweep(state: ChainState) -> float:
    """One full cycle of the cursor, then a full refresh of the cached action.

    Returns the acceptance fraction of the sweep.
    """
    nsteps = state.n_sites
    rnd = state.rng.random((nsteps, 3))
    cache = state.cache
    accepted = _kernels.sweep(
        cache.fields, cache.slots, cache.dslots, cache.touched, cache.dterms,
        cache.terms_array, cache.kernel_params, cache.layout.nz, rnd,
        state.amplitude, _KIND_CODE[state.action_kind], state.cursor,
    )
    cache.pending = None
    if state.action_kind is ActionKind.MODEL:
        cache.staleness += int(accepted)
        state.max_drift = max(state.max_drift, cache.refresh())
    else:
        # the model cache is not used by the toy action; rebuilt on demand
        cache.valid = False
    state.accept_count += int(accepted)
    state.step_count += nsteps
    state.sweep_count += 1
    return accepted / nsteps


Observer = Callable[[ChainState], dict]


@dataclass
class TimeSeriesBundle:
    series: dict[str, np.ndarray]
    params: ModelParams
    meas_interval: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        lengths = {len(v) for v in self.series.values()}
        return lengths.pop() if lengths else 0


def _default_observer(state: ChainState) -> dict:
    from .observables import default_observer

    return default_observer(state)


def run_chain(
    params: ModelParams,
    plan: RunPlan,
    observers: list[Observer] | None = None,
    *,
    key: tuple[int, ...] = (),
    amplitude: float = PROPOSAL_AMPLITUDE,
    action_kind: ActionKind = ActionKind.MODEL,
    state: ChainState | None = None,
    records: list[dict] | None = None,
    on_sweep: Callable[[ChainState, list[dict]], bool | None] | None = None,
) -> TimeSeriesBundle:
    """Thermalize, then measure every ``plan.meas_interval`` sweeps.

    Passing ``state``/``records`` (from a checkpoint) continues an interrupted
    chain. ``on_sweep`` runs after every sweep; returning ``False`` stops
    the chain early and the partial bundle is returned with
    ``meta["complete"] = False``.
    """
    if observers is None:
        observers = [_default_observer]
    if state is None:
        state = init_chain(params, plan, key, amplitude, action_kind)
    records = [] if records is None else records
    complete = True
    while state.sweep_count < plan.total_sweeps:
        run_sweep(state)
        done = state.sweep_count - plan.therm_sweeps
        if done > 0 and done % plan.meas_interval == 0:
            rec = {}
            for obs in observers:
                rec.update(obs(state))
            records.append(rec)
        if on_sweep is not None and on_sweep(state, records) is False:
            complete = state.sweep_count >= plan.total_sweeps
            break
    return TimeSeriesBundle(
        series=records_to_series(records),
        params=params,
        meas_interval=plan.meas_interval,
        meta=chain_meta(state, plan, complete),
    )


def records_to_series(records: list[dict]) -> dict[str, np.ndarray]:
    if not records:
        return {}
    keys = list(records[0])
    return {k: np.array([r[k] for r in records], dtype=np.float64) for k in keys}


def chain_meta(state: ChainState, plan: RunPlan, complete: bool = True) -> dict:
    return {
        "complete": complete,
        "sweeps": state.sweep_count,
        "steps": state.step_count,
        "acceptance": state.acceptance,
        "max_refresh_drift": state.max_drift,
        "meas_interval_unit": "sweeps",
        "proposal_amplitude": state.amplitude,
        "rng": RNG_NAME,
        "plan": plan.as_dict(),
    }


# -- checkpoints -------------------------------------------------------------
#
# A checkpoint is an uncompressed .npz archive (zip of .npy members):
#   header  : 0-d unicode array holding a JSON object with format/version,
#             params, plan, counters, cursor, proposal amplitude, action kind,
#             record column names and the PCG64 bit-generator state
#   fields  : '<c16' array (n_fields, N, N), little-endian complex128
#   records : '<f8' array (n_records, n_columns)
# Resuming rebuilds the action cache from ``fields``; checkpoints are only
# written at sweep boundaries, where the cache has just been refreshed.


def save_checkpoint(path: str | os.PathLike, state: ChainState, plan: RunPlan, records: list[dict]) -> None:
    columns = list(records[0]) if records else []
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "params": state.params.as_dict(),
        "plan": plan.as_dict(),
        "cursor": state.cursor,
        "sweep_count": state.sweep_count,
        "step_count": state.step_count,
        "accept_count": state.accept_count,
        "max_drift": state.max_drift,
        "amplitude": state.amplitude,
        "action_kind": state.action_kind.value,
        "columns": columns,
        "rng": state.rng.bit_generator.state,
    }
    rec = np.array([[r[c] for c in columns] for r in records], dtype="<f8").reshape(len(records), len(columns))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            fields=state.config.fields.astype("<c16"),
            records=rec,
        )
    os.replace(tmp, path)


class CheckpointError(RuntimeError):
    pass


def load_checkpoint(path: str | os.PathLike) -> tuple[ChainState, RunPlan, list[dict]]:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        fields = np.array(z["fields"], dtype=np.complex128)
        rec = np.array(z["records"], dtype=np.float64)
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    params = ModelParams.from_dict(header["params"])
    plan = RunPlan(**header["plan"])
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = header["rng"]
    state = ChainState(params, FieldConfig(fields), rng, header["amplitude"], ActionKind(header["action_kind"]))
    state.cursor = header["cursor"]
    state.sweep_count = header["sweep_count"]
    state.step_count = header["step_count"]
    state.accept_count = header["accept_count"]
    state.max_drift = header["max_drift"]
    columns = header["columns"]
    records = [dict(zip(columns, map(float, row))) for row in rec]
    return state, plan, records
