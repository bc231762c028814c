"""2D Ising model used to calibrate the Metropolis + error-analysis stack.

Single-spin-flip Metropolis with the same accept rule as the matrix model
(``_kernels.metropolis_accept``). Sites are drawn uniformly at random; with a
fixed visiting order every spin would flip on every sweep at beta = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import stats
from ._kernels import metropolis_accept
from .sampler import RunPlan, Start, make_rng

BETA_C = 0.5 * math.log(1.0 + math.sqrt(2.0))


@dataclass
class IsingLattice:
    spins: np.ndarray
    beta: float

    def __post_init__(self):
        self.spins = np.ascontiguousarray(self.spins, dtype=np.int8)
        if self.spins.ndim != 2 or self.spins.shape[0] != self.spins.shape[1]:
            raise ValueError("spins must be an L x L array")
        if not np.all(np.abs(self.spins) == 1):
            raise ValueError("spins must be +1 or -1")

    @property
    def l(self) -> int:
        return self.spins.shape[0]


def ising_energy(lattice: IsingLattice) -> float:
    """-sum over bonds s_i s_j, each bond counted once, periodic boundaries."""
    s = lattice.spins.astype(np.int64)
    return float(-np.sum(s * np.roll(s, 1, axis=0)) - np.sum(s * np.roll(s, 1, axis=1)))


def ising_magnetization(lattice: IsingLattice) -> float:
    """|sum s| / V."""
    return float(abs(lattice.spins.astype(np.int64).sum()) / lattice.spins.size)


@njit(cache=True)
def _sweeps(spins, beta, rnd, n_sweeps, e0, m0, e_out, m_out):
    l = spins.shape[0]
    v = l * l
    e = e0
    m = m0
    pos = 0
    for t in range(n_sweeps):
        for _ in range(v):
            site = int(rnd[pos] * v)
            u = rnd[pos + 1]
            pos += 2
            if site >= v:
                site = v - 1
            i = site // l
            j = site - i * l
            s = spins[i, j]
            nb = (spins[(i + 1) % l, j] + spins[(i - 1) % l, j]
                  + spins[i, (j + 1) % l] + spins[i, (j - 1) % l])
            de = 2.0 * s * nb
            if metropolis_accept(beta * de, u):
                spins[i, j] = -s
                e += de
                m -= 2 * s
        e_out[t] = e
        m_out[t] = m
    return e, m


@dataclass
class IsingResult:
    l: int
    beta: float
    energy: stats.ErrorEstimate  # per site
    specific_heat: stats.ErrorEstimate  # per site
    magnetization: stats.ErrorEstimate  # <|mu|>
    susceptibility: stats.ErrorEstimate
    tau_energy: float
    tau_magnetization: float
    acceptance: float | None = None


def ising_series(l: int, beta: float, plan: RunPlan, key: tuple[int, ...] = ()):
    """Energy and signed magnetization per measured sweep."""
    rng = make_rng(plan.seed, key)
    if plan.start is Start.HOT:
        spins = np.where(rng.random((l, l)) < 0.5, -1, 1).astype(np.int8)
    else:
        spins = np.ones((l, l), dtype=np.int8)
    lat = IsingLattice(spins, beta)
    e = ising_energy(lat)
    m = float(spins.astype(np.int64).sum())
    v = l * l
    chunk = 1000
    total = plan.therm_sweeps + plan.meas_sweeps
    e_all = np.empty(total)
    m_all = np.empty(total)
    done = 0
    while done < total:
        k = min(chunk, total - done)
        rnd = rng.random(2 * v * k)
        e, m = _sweeps(lat.spins, float(beta), rnd, k, e, m, e_all[done:done + k], m_all[done:done + k])
        done += k
    sel = slice(plan.therm_sweeps + plan.meas_interval - 1, total, plan.meas_interval)
    return e_all[sel], m_all[sel], lat


def ising_run(l: int, beta: float, plan: RunPlan, key: tuple[int, ...] = ()) -> IsingResult:
    e, m, _ = ising_series(l, beta, plan, key)
    v = l * l
    mu_abs = np.abs(m) / v
    k = stats.jackknife_block_length(e)

    def heat(x):
        return beta ** 2 * stats.variance_estimator(x) / v

    c_val, c_sig, nb = stats.jackknife(e, k, heat)
    km = stats.jackknife_block_length(mu_abs)

    def chi(x):
        return beta * v * stats.variance_estimator(x)

    chi_val, chi_sig, nbm = stats.jackknife(mu_abs, km, chi)
    return IsingResult(
        l=l,
        beta=beta,
        energy=stats.corrected_error(e / v),
        specific_heat=stats.ErrorEstimate(c_val, c_sig, 0.5, stats.Method.JACKKNIFE, nb * k, block_length=k),
        magnetization=stats.corrected_error(mu_abs),
        susceptibility=stats.ErrorEstimate(chi_val, chi_sig, 0.5, stats.Method.JACKKNIFE, nbm * km, block_length=km),
        tau_energy=stats.sokal_madras_tau(e).tau,
        tau_magnetization=stats.sokal_madras_tau(mu_abs).tau,
    )


def beta_scan(l: int, betas, plan: RunPlan) -> list[IsingResult]:
    return [ising_run(l, float(b), plan, key=(l, i)) for i, b in enumerate(betas)]


SCAN_COLUMNS = ("L", "beta", "e", "e_err", "C", "C_err", "m", "m_err", "chi", "chi_err", "tau_e", "tau_m")


def scan_rows(results: list[IsingResult]) -> list[list]:
    return [
        [r.l, r.beta, r.energy.mean, r.energy.sigma, r.specific_heat.mean, r.specific_heat.sigma,
         r.magnetization.mean, r.magnetization.sigma, r.susceptibility.mean, r.susceptibility.sigma,
         r.tau_energy, r.tau_magnetization]
        for r in results
    ]
