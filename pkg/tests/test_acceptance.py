"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The Monte Carlo criteria (7-10) run at the stated desk scale and dominate
the runtime (about an hour on one core; set RISBO_WORKERS to parallelise
realizations). Results are collected and repeated in the terminal summary.
"""

import os
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest
from scipy.stats import binomtest

from conftest import random_instance
from risbo.experiments import (EXPERIMENT_BO, SCENARIOS, ExperimentConfig, emit_results,
                               results_to_csv, run_scenario)
from risbo.gp import KernelSpec, SampleWindow, posterior
from risbo.known_csi import (brute_force_sum_mse, build_mm_problem, lagrangian, mm_objective,
                             mm_phase, solve_known_csi, update_filter, update_precoder)
from risbo.parametrization import decode, domain_box, encode, spherical_to_weights
from risbo.system_model import (ChannelRealization, Design, LargeScaleModel, SystemConfig,
                                complex_normal, estimate_sum_mse, exact_sum_mse,
                                sample_channels, snr_to_noise_var)

WORKERS = int(os.environ.get("RISBO_WORKERS", "1"))
RESULTS = []


def report(n, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = (f"ACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail} "
            f"[{elapsed:.1f} s, budget {budget:.0f} s]")
    RESULTS.append(line)
    print(line)
    return ok



def _unit(rng, n):
    return np.exp(2j * np.pi * rng.uniform(size=n))


# -- 1 ----------------------------------------------------------------------

def test_01_gp_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        X = rng.uniform(size=(20, 13))
        y = rng.standard_normal(20)
        xq = rng.uniform(size=13)
        h = float(rng.choice([0.3, 0.7, 1.5, 3.0]))
        spec = KernelSpec(h=h, jitter=1e-6)
        p = posterior(SampleWindow.from_arrays(X, y), xq, spec)
        # dense solve on an explicitly assembled kernel matrix
        K = np.empty((20, 20))
        for i in range(20):
            for j in range(20):
                K[i, j] = np.exp(-np.sum((X[i] - X[j]) ** 2) / (2 * h * h))
        K += 1e-6 * np.eye(20)
        k = np.array([np.exp(-np.sum((X[i] - xq) ** 2) / (2 * h * h)) for i in range(20)])
        mu = k @ np.linalg.solve(K, y)
        var = max(1.0 - k @ np.linalg.solve(K, k), 0.0)
        worst = max(worst, abs(p.mu - mu), abs(p.sigma2 - var))
    assert report(1, worst < 1e-8, f"max |posterior - dense oracle| = {worst:.2e} (tol 1e-8)",
                  time.perf_counter() - t0, 10)


# -- 2 ----------------------------------------------------------------------

def test_02_parametrization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    psi = rng.uniform(0, np.pi, size=(10_000, 7))
    psi[:, -1] *= 2
    P = 1.0
    sq = np.array([np.sum(spherical_to_weights(p, P) ** 2) for p in psi])
    cons = float(np.max(np.abs(sq - P)))
    cfg = SystemConfig(M=2, N=2, K=2, P=P)
    box = domain_box(cfg, full_sphere=True)
    rt = 0.0
    for x in box.sample(rng, 1000):
        d = decode(x, cfg)
        back = decode(encode(d, cfg, full_sphere=True), cfg)
        rt = max(rt, np.abs(back.W - d.W).max(), np.abs(back.phi - d.phi).max(),
                 np.abs(back.c - d.c).max())
    ok = cons < 1e-12 and rt < 1e-8
    assert report(2, ok, f"power error {cons:.1e} (tol 1e-12), roundtrip error {rt:.1e} (tol 1e-8)",
                  time.perf_counter() - t0, 5)


# -- 3 ----------------------------------------------------------------------

def test_03_mm():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    rises = 0.0
    for _ in range(100):
        N = int(rng.integers(1, 9))
        d, ch = random_instance(rng, M=2, N=N, K=2)
        st = build_mm_problem(d.W, d.c, ch.H, ch.F, _unit(rng, N))
        h = mm_phase(st, tol=1e-12, max_iter=1000).history
        rises = max(rises, float(np.max(np.diff(h), initial=0.0)))
    axis = np.linspace(0, 2 * np.pi, 1000, endpoint=False)
    gaps = []
    for _ in range(10):
        d, ch = random_instance(rng, M=2, N=2, K=2)
        st = build_mm_problem(d.W, d.c, ch.H, ch.F)
        f_mm = mm_objective(st, mm_phase(st, tol=1e-12, max_iter=10_000).phi)
        p1, p2 = np.meshgrid(np.exp(1j * axis), np.exp(1j * axis), indexing="ij")
        Xi, b = st.Xi, st.b
        quad = (np.abs(p1) ** 2 * Xi[0, 0].real + np.abs(p2) ** 2 * Xi[1, 1].real
                + 2 * np.real(np.conj(p1) * Xi[0, 1] * p2))
        f_grid = quad - 2 * np.real(np.conj(p1) * b[0] + np.conj(p2) * b[1])
        gaps.append(f_mm - f_grid.min())
    gap = float(np.max(gaps))
    ok = rises <= 1e-9 and gap <= 1e-3
    assert report(3, ok, f"largest MM increase {rises:.1e} (tol 1e-9); N=2 gap to 1000x1000 "
                  f"grid {gap:.1e} (tol 1e-3)", time.perf_counter() - t0, 60)


# -- 4 ----------------------------------------------------------------------

def test_04_known_csi():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    rises = 0.0
    for _ in range(100):
        M, N, K = (int(v) for v in rng.integers(1, 4, size=3))
        H, F = complex_normal(rng, (N, M)), complex_normal(rng, (K, N))
        tr = solve_known_csi(H, F, 1.0, 10 ** rng.uniform(-2.5, 0)).trace
        rises = max(rises, float(np.max(np.diff(tr), initial=0.0)))
    nv = snr_to_noise_var(20.0)
    ratios = []
    for r in range(10):
        ch = sample_channels(SystemConfig(), np.random.default_rng([104, r]))
        f = solve_known_csi(ch.H, ch.F, 1.0, nv).trace[-1]
        bf = brute_force_sum_mse(ch.H, ch.F, 1.0, nv, n_grid=360, restarts=20)
        ratios.append(f / bf - 1)
    worst = float(np.max(ratios))
    ok = rises <= 1e-9 and worst <= 0.05
    assert report(4, ok, f"largest trace increase {rises:.1e} (tol 1e-9); worst excess over "
                  f"brute force {100 * worst:.2f}% over 10 channels (tol 5%)",
                  time.perf_counter() - t0, 300)


# -- 5 ----------------------------------------------------------------------

def test_05_stationarity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    worst = -np.inf
    for _ in range(50):
        M, N, K = 2, int(rng.integers(1, 5)), 2
        H, F = complex_normal(rng, (N, M)), complex_normal(rng, (K, N))
        c, phi, nv = complex_normal(rng, K), _unit(rng, N), 10 ** rng.uniform(-2, 0)
        Wb, alpha = update_precoder(c, phi, H, F, 1.0, nv)
        base = lagrangian(Wb, alpha, c, phi, H, F, 1.0, nv)
        cf = update_filter(alpha * Wb, phi, H, F, nv)
        ch = ChannelRealization(H, F)
        fbase = exact_sum_mse(Design(alpha * Wb, phi, cf), ch, nv)
        for _ in range(20):
            D = complex_normal(rng, Wb.shape)
            e = complex_normal(rng, K)
            for eps in (1e-2, 1e-4, 1e-6):
                worst = max(worst, base - lagrangian(Wb + eps * D, alpha, c, phi, H, F, 1.0, nv))
                worst = max(worst, fbase - exact_sum_mse(Design(alpha * Wb, phi, cf + eps * e),
                                                         ch, nv))
    assert report(5, worst <= 1e-8, f"largest improvement along a perturbation {worst:.1e} "
                  "(tol 1e-8)", time.perf_counter() - t0, 60)


# -- 6 ----------------------------------------------------------------------

def test_06_estimator():
    t0 = time.perf_counter()
    rng = np.random.default_rng(106)
    cfg = SystemConfig(noise_var=snr_to_noise_var(10.0))
    box = domain_box(cfg)
    errs = []
    for _ in range(10):
        ch = sample_channels(cfg, rng)
        d = decode(box.sample(rng), cfg)
        # the mean of 1e5 independent single-pilot estimates is one 1e5-pilot average
        est = estimate_sum_mse(d, ch, cfg.noise_var, 100_000, rng)
        errs.append(abs(est / exact_sum_mse(d, ch, cfg.noise_var) - 1))
    worst = float(np.max(errs))
    assert report(6, worst < 0.02, f"worst relative error {100 * worst:.2f}% (tol 2%)",
                  time.perf_counter() - t0, 30)


# -- 7, 9 -------------------------------------------------------------------

STATIC = ExperimentConfig(scenario="sum-mse-bo", snr_db=(20.0,), realizations=50, seed=7,
                          workers=WORKERS)


@lru_cache(maxsize=None)
def _raw(cfg):
    t0 = time.perf_counter()
    _, raw = run_scenario(cfg, return_raw=True)
    return raw, time.perf_counter() - t0


def _per_r(raw, key, x=20.0):
    return np.array([raw[(x, r)][key] for r in range(len(raw))])


@pytest.mark.slow
def test_07_bo_efficacy():
    bo, t_bo = _raw(STATIC)
    rs, t_rs = _raw(replace(STATIC, scenario="random-search-baseline"))
    # (a) and (c) follow the best-so-far design, (b) compares the reported designs
    final = _per_r(bo, "sum_mse")
    best_so_far = _per_r(bo, "best_observed_sum_mse")
    init = _per_r(bo, "init_sum_mse")
    base = _per_r(rs, "sum_mse")
    ratio = best_so_far.mean() / init.mean()
    wins = int(np.sum(final < base))
    p = binomtest(wins, final.size, alternative="greater").pvalue
    inc = np.mean([bo[(20.0, r)]["_trace"]["incumbent_sum_mse"] for r in range(final.size)], axis=0)
    assert inc.size == EXPERIMENT_BO.W + 13 + EXPERIMENT_BO.T
    plateau = (inc[-51] - inc[-1]) / inc[-51]
    ok = ratio <= 0.5 and p < 0.05 and plateau < 0.05
    assert report(7, ok, f"(a) best-so-far/initial {ratio:.3f} (<= 0.5); (b) BO {final.mean():.3f} vs "
                  f"random {base.mean():.3f}, wins {wins}/{final.size}, p = {p:.1e} (< 0.05); "
                  f"(c) last-50 improvement {100 * plateau:.2f}% (< 5%)", t_bo + t_rs, 1800)


@pytest.mark.slow
def test_09_slow_fading():
    static, t_s = _raw(STATIC)
    slow, t_d = _raw(replace(STATIC, scenario="slow-fading", drift_nu=0.001))
    zero, t_z = _raw(replace(STATIC, scenario="slow-fading", drift_nu=0.0, realizations=10))
    a, b = _per_r(static, "sum_mse"), _per_r(slow, "sum_mse")
    rel = abs(b.mean() - a.mean()) / a.mean()
    same = all(zero[(20.0, r)]["sum_mse"] == static[(20.0, r)]["sum_mse"] for r in range(10))
    ok = rel <= 0.2 and same
    assert report(9, ok, f"drift 1e-3: {b.mean():.4f} vs static {a.mean():.4f} "
                  f"({100 * rel:.1f}%, tol 20%); drift 0 identical: {same}",
                  t_s + t_d + t_z, 1800)


# -- 8 ----------------------------------------------------------------------

@pytest.mark.slow
def test_08_trends():
    t0 = time.perf_counter()
    snr = run_scenario(ExperimentConfig(scenario="sum-mse-bo", realizations=100, seed=8,
                                        snr_db=(0.0, 5.0, 10.0, 15.0, 20.0), workers=WORKERS))
    _, mse_snr = snr.series("sum_mse")
    elem = run_scenario(ExperimentConfig(scenario="element-sweep", realizations=100, seed=8,
                                         n_elements=(2, 6, 10), fixed_snr_db=20.0,
                                         workers=WORKERS))
    _, mse_n = elem.series("sum_mse")
    ok = bool(np.all(np.diff(mse_snr) <= 0) and np.all(np.diff(mse_n) <= 0))
    assert report(8, ok, f"sum MSE vs SNR {np.round(mse_snr, 4).tolist()}; vs N (2, 6, 10) "
                  f"{np.round(mse_n, 4).tolist()} (both non-increasing)",
                  time.perf_counter() - t0, 7200)


# -- 10 ---------------------------------------------------------------------

@pytest.mark.slow
def test_10_power_transfer():
    t0 = time.perf_counter()
    common = dict(large_scale=LargeScaleModel(), seed=10, workers=WORKERS,
                  tx_power_dbm=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0))
    total = run_scenario(ExperimentConfig(scenario="power-transfer-total", realizations=20,
                                          **common))
    minmax = run_scenario(ExperimentConfig(scenario="power-transfer-minmax", realizations=10,
                                           **common))
    single = run_scenario(ExperimentConfig(scenario="power-transfer-total", realizations=20,
                                           system=SystemConfig(K=1, N=2), **common))
    _, p_tot = total.series("received_power_dbm")
    _, p_min = minmax.series("min_user_power_dbm")
    _, p_one = single.series("received_power_dbm")
    _, p_orc = single.series("oracle_power_dbm")
    gap = float(np.max(p_orc - p_one))
    ok = bool(np.all(np.diff(p_tot) > 0) and np.all(np.diff(p_min) > 0) and gap <= 3.0)
    assert report(10, ok, f"total power (dBm) {np.round(p_tot, 2).tolist()}; max-min user power "
                  f"{np.round(p_min, 2).tolist()} (strictly increasing); K=1 worst gap to oracle "
                  f"{gap:.2f} dB (tol 3 dB)", time.perf_counter() - t0, 1800)


# -- 11 ---------------------------------------------------------------------

def test_11_determinism(tmp_path):
    t0 = time.perf_counter()
    bo = replace(EXPERIMENT_BO, T=8, W=5)
    same = {}
    for sc in SCENARIOS:
        cfg = ExperimentConfig(scenario=sc, bo=bo, realizations=2, seed=11,
                               snr_db=(10.0, 20.0), tx_power_dbm=(10.0, 20.0),
                               n_elements=(2, 3), pilot_counts=(1, 5),
                               large_scale=LargeScaleModel())
        emit_results(run_scenario(cfg), tmp_path / f"{sc}-a.csv")
        emit_results(run_scenario(replace(cfg, workers=2)), tmp_path / f"{sc}-b.csv")
        same[sc] = ((tmp_path / f"{sc}-a.csv").read_bytes()
                    == (tmp_path / f"{sc}-b.csv").read_bytes()
                    == results_to_csv(run_scenario(cfg)).encode())
    bad = [k for k, v in same.items() if not v]
    assert report(11, not bad, f"{len(same) - len(bad)}/{len(same)} scenarios byte-identical "
                  "on re-run (serial, 2 workers)" + (f"; differing: {bad}" if bad else ""),
                  time.perf_counter() - t0, 600)
