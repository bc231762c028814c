"""Per-configuration measurements and their aggregation into summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import stats
from .action import ActionTerms
from .model import FieldConfig, ModelParams


def full_power(m: np.ndarray) -> float:
    """Sum of |m_nm|^2 over all entries, i.e. Tr(m^dagger m)."""
    return float(np.vdot(m, m).real)


def diagonal_power(m: np.ndarray) -> float:
    return float(np.sum(np.abs(np.diagonal(m)) ** 2))


def mode_power(m: np.ndarray, l: int, strict: bool = False) -> float:
    """Off-diagonal power up to mode ``l``.

    By default sums |m_nm|^2 over n != m with n, m <= l (cumulative). With
    ``strict`` only the shell max(n, m) == l is kept, so the shells for
    l = 1..N-1 plus the diagonal partition the full power.
    """
    n = m.shape[0]
    l = min(l, n - 1)
    if l < 1:
        return 0.0
    a = np.abs(m) ** 2
    if strict:
        return float(a[l, :l].sum() + a[:l, l].sum())
    sub = a[: l + 1, : l + 1]
    return float(sub.sum() - np.trace(sub))


@dataclass
class ObservableRecord:
    s_total: float
    s_f: float
    s_v0: float
    s_v1: float
    s_d: float
    phi_a2: float
    phi_02: float
    phi_12: float
    z_a2: list[float] = field(default_factory=list)
    z_02: list[float] = field(default_factory=list)
    z_12: list[float] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        out = {
            "s_total": self.s_total,
            "s_f": self.s_f,
            "s_v0": self.s_v0,
            "s_v1": self.s_v1,
            "s_d": self.s_d,
            "phi_a2": self.phi_a2,
            "phi_02": self.phi_02,
            "phi_12": self.phi_12,
        }
        for i, (a, b, c) in enumerate(zip(self.z_a2, self.z_02, self.z_12)):
            out[f"z{i}_a2"] = a
            out[f"z{i}_02"] = b
            out[f"z{i}_12"] = c
        return out


def measure(config: FieldConfig, terms: ActionTerms) -> ObservableRecord:
    psi = config.psi
    z = config.z
    return ObservableRecord(
        s_total=terms.f_term + terms.v0_term + terms.v1_term + terms.d_term,
        s_f=terms.f_term,
        s_v0=terms.v0_term,
        s_v1=terms.v1_term,
        s_d=terms.d_term,
        phi_a2=full_power(psi),
        phi_02=diagonal_power(psi),
        phi_12=mode_power(psi, 1),
        z_a2=[full_power(m) for m in z],
        z_02=[diagonal_power(m) for m in z],
        z_12=[mode_power(m, 1) for m in z],
    )


def default_observer(state) -> dict[str, float]:
    return measure(state.config, state.cache.terms).as_dict()


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class ReportOptions:
    """How raw action terms are turned into reported quantities.

    ``strip_prefactor``: ``"d_term"`` divides the covariant-derivative term by
    its 2(1 + w^2) prefactor, ``"global"`` divides every term by (1 + w^2),
    ``"none"`` reports the sampled action unchanged. ``density`` divides all
    extensive quantities by N^2.
    """

    density: bool = True
    strip_prefactor: str = "d_term"

    def __post_init__(self):
        if self.strip_prefactor not in ("none", "d_term", "global"):
            raise ValueError(f"unknown strip_prefactor {self.strip_prefactor!r}")


ACTION_KEYS = ("s_f", "s_v0", "s_v1", "s_d")
SUSCEPTIBILITY_KEYS = ("phi_02", "phi_12")


def reported_terms(series: dict[str, np.ndarray], params: ModelParams, options: ReportOptions):
    w2 = params.omega ** 2
    out = {k: np.asarray(series[k], dtype=np.float64) for k in ACTION_KEYS}
    if options.strip_prefactor == "d_term":
        out["s_d"] = out["s_d"] / (2.0 * (1.0 + w2))
    elif options.strip_prefactor == "global":
        out = {k: v / (1.0 + w2) for k, v in out.items()}
    out["s_v"] = out["s_v0"] + out["s_v1"]
    out["s_total"] = out["s_f"] + out["s_v0"] + out["s_v1"] + out["s_d"]
    return out


@dataclass
class Summary:
    estimates: dict[str, stats.ErrorEstimate]
    n_meas: int

    def __getitem__(self, key):
        return self.estimates[key]

    def __contains__(self, key):
        return key in self.estimates


def _estimate(x: np.ndarray) -> stats.ErrorEstimate:
    if x.size >= 10:
        return stats.corrected_error(x)
    if x.size >= 2:
        return stats.naive_error(x)
    return stats.ErrorEstimate(float(x[0]), 0.0, 0.5, stats.Method.UNCORRELATED, 1.0)


def _variance_estimate(x: np.ndarray) -> stats.ErrorEstimate:
    value = stats.variance_estimator(x)
    if x.size < 4:
        est = stats.ErrorEstimate(value, 0.0, 0.5, stats.Method.JACKKNIFE, float(x.size))
        est.flags.append("too_short_for_error")
        return est
    k = stats.jackknife_block_length(x)
    _, sigma, nb = stats.jackknife(x, k, stats.variance_estimator)
    est = stats.ErrorEstimate(value, sigma, 0.5, stats.Method.JACKKNIFE, float(nb * k), block_length=k)
    if value < -2 * sigma:
        est.flags.append("negative_variance")
    return est


def aggregate(series: dict[str, np.ndarray], params: ModelParams, options: ReportOptions = ReportOptions()) -> Summary:
    """Mean and error for every series plus specific heat and susceptibilities."""
    lengths = {len(v) for v in series.values()}
    if not series or lengths == {0}:
        raise AggregationError("cannot aggregate an empty measurement series")
    if len(lengths) != 1:
        raise AggregationError(f"series have unequal lengths {sorted(lengths)}")
    scale = 1.0 / params.n ** 2 if options.density else 1.0
    data = {k: np.asarray(v, dtype=np.float64) for k, v in series.items()}
    data.update(reported_terms(series, params, options))
    est = {}
    for key, x in data.items():
        est[key] = _scaled(_estimate(x), scale)
    est["specific_heat"] = _scaled(_variance_estimate(data["s_total"]), scale)
    chi_keys = list(SUSCEPTIBILITY_KEYS) + [k for k in data if k.startswith("z") and k[-3:] in ("_02", "_12")]
    for key in chi_keys:
        e = _scaled(_variance_estimate(data[key]), scale)
        e.flags.append("low_precision")
        est["chi_" + key] = e
    return Summary(est, n_meas=lengths.pop())


def _scaled(e: stats.ErrorEstimate, scale: float) -> stats.ErrorEstimate:
    if scale != 1.0:
        e.mean *= scale
        e.sigma *= scale
    return e
