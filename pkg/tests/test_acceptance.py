"""Acceptance criteria. Each test records one PASS/FAIL line, printed at the end of the run."""

import math

import numpy as np
import pytest
from scipy import signal
from scipy import stats as sps

from ncspectral import moyal, stats
from ncspectral.action import ActionCache, eval_full, propose_delta, commit
from ncspectral.ising import ising_run
from ncspectral.model import Dim, ModelParams, from_matrices, random_config, zero_config
from ncspectral.runner import load_summary, preset_spec, run_sweep_spec, summary_table
from ncspectral.sampler import ActionKind, RunPlan, init_chain, make_rng, run_chain, run_sweep

from .conftest import random_unitary, record_acceptance


def check(name, passed, detail):
    record_acceptance(name, bool(passed), detail)
    assert passed, detail


def test_delta_action_oracle():
    rng = make_rng(2024)
    trials_per_combo = 100_000
    per_config = 100
    worst = 0.0
    worst_drift = 0.0
    total = 0
    for dim in Dim:
        for n in (1, 2, 3, 5, 10):
            done = 0
            while done < trials_per_combo:
                p = ModelParams(dim, n, rng.uniform(0, 1), rng.uniform(0, 3))
                cfg = random_config(p, rng.uniform(0.3, 2.0), rng)
                cache = ActionCache(p, cfg)
                s_old = eval_full(p, cfg).total
                for _ in range(per_config):
                    site = (int(rng.integers(p.dim.n_fields)), int(rng.integers(n)), int(rng.integers(n)))
                    delta = complex(*rng.uniform(-2, 2, 2))
                    ds = propose_delta(cache, site, delta)
                    cfg.fields[site] += delta
                    s_new = eval_full(p, cfg).total
                    worst = max(worst, abs(ds - (s_new - s_old)) / (1 + abs(s_old)))
                    if rng.random() < 0.5:
                        cfg.fields[site] -= delta
                        commit(cache, site, delta)
                        s_old = s_new
                    else:
                        cfg.fields[site] -= delta
                done += per_config
                worst_drift = max(worst_drift, cache.refresh())
            total += done
            # sweeps through the compiled path, drift measured before each refresh
            st = init_chain(ModelParams(dim, n, 0.5, 1.0), RunPlan(seed=n), key=(int(dim), n))
            for _ in range(20):
                run_sweep(st)
            worst_drift = max(worst_drift, st.max_drift)
    check(
        "delta-action oracle",
        worst <= 1e-8 and worst_drift <= 1e-6,
        f"{total} trials, max |dS_inc - dS_full|/(1+|S|) = {worst:.2e} (tol 1e-8); max drift {worst_drift:.2e} (tol 1e-6)",
    )


def test_minimum_and_positivity():
    zero_ok = all(
        eval_full(ModelParams(dim, n, 0.5, 1.0), zero_config(ModelParams(dim, n, 0.5, 1.0))).total == 0.0
        for dim in Dim
        for n in (1, 3, 5)
    )
    rng = make_rng(7)
    worst_neg = 0.0
    worst_imag = 0.0
    for i in range(10_000):
        dim = Dim.TWO if i % 2 else Dim.FOUR
        n = int(rng.integers(1, 8))
        p = ModelParams(dim, n, rng.uniform(0, 1), rng.uniform(0, 3))
        t = eval_full(p, random_config(p, rng.uniform(0.05, 3.0), rng))
        scale = 1 + abs(t.total)
        worst_neg = max(worst_neg, -min(t.as_array()) / scale)
        worst_imag = max(worst_imag, t.imag_residual / scale)
    check(
        "minimum and positivity",
        zero_ok and worst_neg <= 1e-10 and worst_imag <= 1e-9,
        f"S(0)=0: {zero_ok}; 10^4 configs, worst negative term {worst_neg:.1e} (tol 1e-10), "
        f"worst imag residual {worst_imag:.1e} (tol 1e-9), relative to 1+|S|",
    )


def test_omega_one_kills_f():
    p = ModelParams(Dim.TWO, 5, 1.0, 1.0)
    b = run_chain(p, RunPlan(200, 2000, seed=11))
    bound = 1e-12 * (1 + np.abs(b.series["s_total"]))
    worst = float(np.max(np.abs(b.series["s_f"]) / bound))
    check("omega=1 kills F", worst <= 1.0,
          f"{len(b)} measurements, max |s_f| / (1e-12 (1+|S|)) = {worst:.2e} (must be <= 1)")


def test_unitary_invariance():
    rng = make_rng(8)
    worst = 0.0
    for i in range(1000):
        dim = Dim.TWO if i % 2 else Dim.FOUR
        n = int(rng.integers(1, 8))
        p = ModelParams(dim, n, rng.uniform(0, 1), rng.uniform(0, 3))
        cfg = random_config(p, rng.uniform(0.2, 2.0), rng)
        u = random_unitary(rng, n)
        ud = u.conj().T
        rot = from_matrices(u @ cfg.psi @ ud, [u @ m @ ud for m in cfg.z])
        a, b = eval_full(p, cfg).total, eval_full(p, rot).total
        worst = max(worst, abs(a - b) / abs(a))
    check("unitary conjugation invariance", worst <= 1e-8,
          f"10^3 (config, U) pairs, max relative change {worst:.2e} (tol 1e-8)")


def test_sampler_goodness_of_fit():
    # N=1 toy action S = sum |x|^2 over 3 complex entries; each real component ~ N(0, 1/2).
    # tau is ~3 sweeps, so keeping every 16th sweep leaves nearly independent samples.
    p = ModelParams(Dim.TWO, 1, 0.5, 0.0)
    st = init_chain(p, RunPlan(seed=99), action_kind=ActionKind.GAUSSIAN)
    for _ in range(1000):
        run_sweep(st)
    n_configs = 1_000_000 // 6 + 1
    out = np.empty((n_configs, 3), dtype=complex)
    for i in range(n_configs):
        for _ in range(16):
            run_sweep(st)
        out[i] = st.config.fields.ravel()
    data = np.concatenate([out.real.ravel(), out.imag.ravel()])[:1_000_000]
    ks = sps.kstest(data, "norm", args=(0.0, math.sqrt(0.5)))
    check("sampler goodness of fit", ks.pvalue > 0.01,
          f"KS vs N(0, 1/2) on {data.size} thinned samples: D={ks.statistic:.2e}, p={ks.pvalue:.3f} (need > 0.01)")


def test_stats_stack():
    rng = make_rng(5)
    rho = 0.9
    e = rng.normal(size=1_000_000)
    e[0] /= math.sqrt(1 - rho ** 2)
    ar = signal.lfilter([1.0], [1.0, -rho], e)
    tau_ar = stats.sokal_madras_tau(ar).tau
    iid = rng.normal(size=100_000)
    tau_iid = stats.sokal_madras_tau(iid).tau
    jk_gap = 0.0
    for _ in range(50):
        t = int(rng.integers(100, 5000))
        x = rng.normal(size=t) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
        k = int(rng.integers(1, t // 2))
        jk = stats.jackknife(x, k)[1]
        jk_gap = max(jk_gap, abs(jk ** 2 - stats.binning_sigma(x, k) ** 2) / (1 + jk ** 2))
    x = ar[:50_000]
    eq_gap = 0.0
    for fn in (stats.naive_error, stats.corrected_error, stats.binning_error,
               lambda s: stats.jackknife_error(s, 100)):
        b, s2, sh = fn(x), fn(2.0 * x), fn(x + 3.0)
        eq_gap = max(
            eq_gap,
            abs(s2.mean - 2 * b.mean) / abs(2 * b.mean),
            abs(s2.sigma - 2 * b.sigma) / (2 * b.sigma),
            abs(s2.tau - b.tau) / b.tau,
            abs(sh.sigma - b.sigma) / b.sigma,
            abs(sh.tau - b.tau) / b.tau,
        )
    ok = abs(tau_ar - 9.5) <= 0.15 * 9.5 and 0.4 <= tau_iid <= 0.6 and jk_gap <= 1e-10 and eq_gap <= 1e-10
    check(
        "stats stack",
        ok,
        f"AR(1) tau={tau_ar:.3f} (9.5 +- 15%); iid tau={tau_iid:.3f} ([0.4, 0.6]); "
        f"jackknife-vs-binning variance gap {jk_gap:.1e} (1e-10); scale/shift gap {eq_gap:.1e} (1e-10)",
    )


def test_ising_calibration():
    plan = RunPlan(2000, 50_000, seed=16)
    betas = np.round(np.arange(0.30, 0.5501, 0.01), 12)
    heat = [ising_run(16, float(b), plan, key=(16, i)).specific_heat.mean for i, b in enumerate(betas)]
    peak = float(betas[int(np.argmax(heat))])
    m1 = ising_run(16, 1.0, plan, key=(16, 1000)).magnetization.mean
    e0 = ising_run(16, 0.0, plan, key=(16, 2000)).energy
    ok = 0.40 <= peak <= 0.48 and m1 > 0.99 and abs(e0.mean) <= 3 * e0.sigma
    check(
        "ising calibration",
        ok,
        f"L=16: C peak at beta={peak:.2f} ([0.40, 0.48]); m(1.0)={m1:.4f} (> 0.99); "
        f"e(0)={e0.mean:.2e} +- {e0.sigma:.1e} (|e| <= 3 sigma)",
    )


def test_moyal_identities():
    rows = moyal.residual_table(4, (0.5, 1.0, 2.0))
    worst = max(r[6] for r in rows)
    check("moyal-basis identities", worst <= 1e-5,
          f"{len(rows)} trace/orthogonality checks, indices <= 4, theta in {{0.5, 1, 2}}: max residual {worst:.1e} (tol 1e-5)")


@pytest.mark.slow
def test_qualitative_reproduction(tmp_path):
    omega = preset_spec("check-omega-peak", str(tmp_path / "omega"))
    mu = preset_spec("check-mu-peak", str(tmp_path / "mu"))
    code = run_sweep_spec(omega) | run_sweep_spec(mu)
    c_om = summary_table(load_summary(tmp_path / "omega" / "summary.csv"), "specific_heat", "omega")
    c_mu = summary_table(load_summary(tmp_path / "mu" / "summary.csv"), "specific_heat", "mu")
    at = {n: {round(x, 6): m for x, m, _ in rows} for n, rows in c_om.items()}
    rise = all(at[n][1.0] > at[n][0.5] for n in (5, 10))
    peak = {n: max(m for _, m, _ in rows) for n, rows in c_om.items()}
    grows = peak[10] > peak[5]
    mu_peak = max(c_mu[10], key=lambda r: r[1])[0]
    ok = code == 0 and rise and grows and 2.0 <= mu_peak <= 3.0
    check(
        "qualitative reproduction",
        ok,
        f"C(1.0)/C(0.5): N=5 {at[5][1.0]:.3g}/{at[5][0.5]:.3g}, N=10 {at[10][1.0]:.3g}/{at[10][0.5]:.3g}; "
        f"peak N=10 {peak[10]:.3g} vs N=5 {peak[5]:.3g}; mu-scan peak at mu={mu_peak:g} ([2, 3])",
    )


def test_autocorrelation_growth():
    taus = {}
    for n in (5, 10):
        p = ModelParams(Dim.TWO, n, 0.5, 1.0)
        vals = []
        for seed in (1, 2):
            b = run_chain(p, RunPlan(1000, 40_000, seed=seed), key=(n,))
            vals.append(stats.sokal_madras_tau(b.series["s_total"]).tau)
        taus[n] = float(np.mean(vals))
    check("autocorrelation growth", taus[10] > taus[5],
          f"2D, mu=1, omega=0.5: tau(S) in sweeps N=5 {taus[5]:.2f}, N=10 {taus[10]:.2f} (must increase)")
