import dataclasses

import numpy as np
import pytest

import cfisac as cf
from cfisac.channel import (
    build_mmse_operators,
    dl_pilot_power_w,
    hhat_entry_variance,
    mse_matrix_ap_ue,
)


def _mini_cfg(**kw):
    base = dict(n_x=2, n_z=2, m_aps=2, k_dl=1, k_ul=1, k_t=1,
                min_ap_spacing_m=50.0, seed=3)
    base.update(kw)
    return cf.ScenarioConfig(**base)


@pytest.fixture(scope="module")
def mini():
    cfg = _mini_cfg()
    scn = cf.build_scenario(cfg)
    stats = cf.compute_stats(scn)
    return cfg, scn, stats


def _draw_many(stats, scn, n, seed=123):
    gs, ghats = [], []
    ops = build_mmse_operators(stats, scn)
    for r in range(n):
        real = cf.sample_realization(stats, scn, seed, r)
        gs.append(real.g)
        ghats.append(cf.estimate_ap_ue(real, ops))
    return np.array(gs), np.array(ghats), ops


def test_woodbury_residual_small(small_setup):
    cfg, scn, stats, _ = small_setup
    for m in range(cfg.m_aps):
        for k in range(cfg.k_dl + cfg.k_ul):
            assert cf.woodbury_check(stats, scn, m, k) < 1e-10


def test_woodbury_snr_sweep(small_setup):
    cfg, scn, stats, _ = small_setup
    for p_ul in np.logspace(-6, 2, 10):
        cfg2 = dataclasses.replace(cfg, p_ul_w=float(p_ul))
        scn2 = dataclasses.replace(scn, config=cfg2)
        assert cf.woodbury_check(stats, scn2, 0, 0) < 1e-9


def test_woodbury_rayleigh_reduces_to_scaled_identity():
    cfg = _mini_cfg(rician_delta=0.0)
    scn = cf.build_scenario(cfg)
    stats = cf.compute_stats(scn)
    # v = 0 makes R_yy a scaled identity; the closed-form inverse must agree.
    assert cf.woodbury_check(stats, scn, 0, 0) < 1e-12


def test_noiseless_rayleigh_estimator_is_identity_scaled():
    cfg = _mini_cfg(rician_delta=0.0, noise_density_dbm_hz=-350.0)
    scn = cf.build_scenario(cfg)
    stats = cf.compute_stats(scn)
    ops = build_mmse_operators(stats, scn)
    tau_p = cfg.resolved_tau_ul * cfg.p_ul_w
    target = np.eye(cfg.n_antennas) / np.sqrt(tau_p)
    assert np.allclose(ops.A[0, 0], target, rtol=1e-9)
    real = cf.sample_realization(stats, scn, 7, 0)
    ghat = cf.estimate_ap_ue(real, ops)
    assert np.allclose(ghat, real.g, rtol=1e-6)


def test_rician_limit_deterministic_los():
    cfg = _mini_cfg(rician_delta=1e12)
    scn = cf.build_scenario(cfg)
    stats = cf.compute_stats(scn)
    real = cf.sample_realization(stats, scn, 1, 0)
    expected = np.sqrt(stats.v)[..., None] * stats.los_ap_ue
    assert np.allclose(real.g, expected, rtol=1e-5)


def test_sample_mean_and_cov(mini):
    cfg, scn, stats = mini
    n = 4000
    gs, ghats, ops = _draw_many(stats, scn, n)
    mean = gs.mean(axis=0)
    target = np.sqrt(stats.v)[..., None] * stats.los_ap_ue
    se = np.sqrt(stats.u / (2 * n))[..., None]
    assert np.all(np.abs(mean - target) < 4.0 * se * np.sqrt(2))

    # H entries i.i.d. with variance gamma (statistical check)
    h_sq = []
    for r in range(800):
        real = cf.sample_realization(stats, scn, 9, r)
        h_sq.append(np.abs(real.H) ** 2)
    h_var = np.mean(h_sq, axis=(0, -1, -2))
    assert np.allclose(h_var, stats.gamma, rtol=0.1)


def test_estimator_second_moment_matches_zeta(mini):
    cfg, scn, stats = mini
    n = 4000
    _, ghats, ops = _draw_many(stats, scn, n)
    emp = np.einsum("rmkn,rmkn->mk", ghats, ghats.conj()).real / n
    assert np.allclose(emp, ops.zeta2_inv, rtol=0.05)


def test_mmse_orthogonality_and_mse_matrix(mini):
    cfg, scn, stats = mini
    n = 4000
    gs, ghats, ops = _draw_many(stats, scn, n)
    err = gs - ghats
    cross = np.einsum("rn,rq->nq", ghats[:, 0, 0], err[:, 0, 0].conj()) / n
    scale = float(ops.zeta2_inv[0, 0])
    assert np.linalg.norm(cross) < 0.05 * scale
    emp_mse = np.einsum("rn,rq->nq", err[:, 0, 0], err[:, 0, 0].conj()) / n
    closed = mse_matrix_ap_ue(stats, scn, 0, 0)
    assert np.linalg.norm(emp_mse - closed) < 0.08 * np.linalg.norm(closed)


def test_hhat_entry_variance_and_high_snr_limit(mini):
    cfg, scn, stats = mini
    ops = build_mmse_operators(stats, scn)
    n = 600
    acc = 0.0
    for r in range(n):
        real = cf.sample_realization(stats, scn, 21, r)
        hhat = cf.estimate_ap_ap(real, ops)
        acc += np.abs(hhat[0, 1]) ** 2
    emp_var = float(np.mean(acc / n))
    assert emp_var == pytest.approx(hhat_entry_variance(stats, scn, 0, 1), rel=0.05)

    cfg2 = _mini_cfg(noise_density_dbm_hz=-330.0)
    scn2 = cf.build_scenario(cfg2)
    stats2 = cf.compute_stats(scn2)
    ops2 = build_mmse_operators(stats2, scn2)
    real = cf.sample_realization(stats2, scn2, 3, 0)
    hhat = cf.estimate_ap_ap(real, ops2)
    assert np.allclose(hhat, real.H, rtol=1e-5)


def test_nmse_ap_ue_rayleigh_reduction_machine_precision():
    cfg = _mini_cfg(rician_delta=0.0)
    scn = cf.build_scenario(cfg)
    stats = cf.compute_stats(scn)
    tau_p = cfg.resolved_tau_ul * cfg.p_ul_w
    s2 = scn.sigma2_w
    for m in range(cfg.m_aps):
        val = cf.nmse_ap_ue(stats, scn, m, 0)
        ref = s2 / (tau_p * stats.beta[m, 0] + s2)
        assert val == pytest.approx(ref, rel=1e-12)


def test_nmse_ap_ue_no_pilot_limit_rayleigh():
    cfg = _mini_cfg(rician_delta=0.0, p_ul_w=1e-18)
    scn = cf.build_scenario(cfg)
    stats = cf.compute_stats(scn)
    assert cf.nmse_ap_ue(stats, scn, 0, 0) == pytest.approx(1.0, abs=1e-4)


def test_nmse_ap_ue_monotone_in_pilot_energy(mini):
    cfg, scn, stats = mini
    vals = []
    for p_ul in (0.01, 0.1, 1.0):
        scn2 = dataclasses.replace(scn, config=dataclasses.replace(cfg, p_ul_w=p_ul))
        vals.append(cf.nmse_ap_ue(stats, scn2, 0, 0))
    assert vals[0] > vals[1] > vals[2]


def test_nmse_ap_ap_limits(mini):
    cfg, scn, stats = mini
    # vanishing pilot power -> NMSE -> 1
    scn_lo = dataclasses.replace(
        scn, config=dataclasses.replace(cfg, p_ap_total_w=1e-18)
    )
    assert cf.nmse_ap_ap(stats, scn_lo, 0, 1) == pytest.approx(1.0, abs=1e-6)
    # balance point tau_dl * p * gamma = sigma^2 -> exactly one half
    gamma = stats.gamma[0, 1]
    p_bal = scn.sigma2_w / (cfg.resolved_tau_dl * gamma)
    scn_bal = dataclasses.replace(
        scn, config=dataclasses.replace(cfg, p_ap_total_w=p_bal)
    )
    assert cf.nmse_ap_ap(stats, scn_bal, 0, 1) == pytest.approx(0.5, rel=1e-12)


def test_nmse_ap_ap_empirical(mini):
    cfg, scn, stats = mini
    ops = build_mmse_operators(stats, scn)
    n = 1500
    acc = 0.0
    for r in range(n):
        real = cf.sample_realization(stats, scn, 33, r)
        hhat = cf.estimate_ap_ap(real, ops)
        acc += np.linalg.norm(real.H[0, 1] - hhat[0, 1]) ** 2
    emp = acc / n / (cfg.n_antennas**2 * stats.gamma[0, 1])
    assert emp == pytest.approx(cf.nmse_ap_ap(stats, scn, 0, 1), rel=0.05)


def test_mrt_beamformer_unit_norm(mini):
    cfg, scn, stats = mini
    ops = build_mmse_operators(stats, scn)
    real = cf.sample_realization(stats, scn, 2, 0)
    w = cf.mrt_beamformer(cf.estimate_ap_ue(real, ops))
    assert np.allclose(np.linalg.norm(w, axis=-1), 1.0)


def test_substream_reproducibility(mini):
    cfg, scn, stats = mini
    a = cf.sample_realization(stats, scn, 17, 5)
    b = cf.sample_realization(stats, scn, 17, 5)
    c = cf.sample_realization(stats, scn, 17, 6)
    assert np.array_equal(a.g, b.g)
    assert np.array_equal(a.H, b.H)
    assert not np.array_equal(a.g, c.g)


def test_trace_b_equals_norm2_identity(mini):
    # Tr(B) must equal the expected estimate energy exactly (algebraic identity).
    cfg, scn, stats = mini
    ops = build_mmse_operators(stats, scn)
    tr_b = np.einsum("mkaa->mk", ops.B).real
    assert np.allclose(tr_b, ops.zeta2_inv, rtol=1e-12)


def test_dl_pilot_power_is_budget(mini):
    cfg, scn, stats = mini
    assert dl_pilot_power_w(scn) == cfg.p_ap_total_w
