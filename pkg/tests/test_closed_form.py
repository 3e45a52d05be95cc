import csv
import dataclasses

import numpy as np
import pytest

import cfisac as cf
from cfisac.closed_form import closed_form_moments


def test_tau_bar_reference_value():
    cfg = cf.ScenarioConfig(n_x=2, n_z=2)
    assert cfg.tau_bar == pytest.approx(180.0 / 196.0, rel=1e-15)


def test_zero_powers_zero_desired_coefficients(small_setup):
    cfg, scn, stats, _ = small_setup
    cfg0 = dataclasses.replace(cfg, p_ul_w=0.0)
    scn0 = dataclasses.replace(
        scn,
        config=cfg0,
        p_dl_alloc=np.zeros_like(scn.p_dl_alloc),
        p_s_alloc=np.zeros_like(scn.p_s_alloc),
    )
    coef0 = cf.compute_coefficients(stats, scn0)
    assert np.all(coef0.c_dl1 == 0.0)
    assert np.all(coef0.c_ul1 == 0.0)
    assert np.all(coef0.c_s1 == 0.0)
    assert np.all(np.isfinite(coef0.c_dl2))
    assert np.all(np.isfinite(coef0.c_s3))


def test_coefficient_sign_invariants(small_setup):
    _, _, _, coef = small_setup
    for arr in (coef.c_dl1, coef.c_dl2, coef.c_dl3, coef.c_ul1, coef.c_ul2,
                coef.c_ul3, coef.c_s1, coef.c_s2, coef.c_s3):
        assert np.all(np.isfinite(arr))
        assert np.all(arr >= 0.0)


def test_bu_variance_nonnegative(small_setup):
    _, scn, stats, _ = small_setup
    mom = closed_form_moments(stats, scn)
    var = mom["second"] - mom["desired"] ** 2
    assert np.all(var >= -1e-12 * mom["second"])


def test_dl_rate_zero_without_dl_aps(small_setup):
    cfg, _, _, coef = small_setup
    mode = cf.ModeVector.from_dl_mask(np.zeros(cfg.m_aps))
    assert np.all(cf.dl_rates(coef, mode) == 0.0)
    assert np.all(cf.ul_rates(coef, mode) >= 0.0)


def test_ul_rate_zero_without_ul_aps(small_setup):
    cfg, _, _, coef = small_setup
    mode = cf.ModeVector.from_dl_mask(np.ones(cfg.m_aps))
    assert np.all(cf.ul_rates(coef, mode) == 0.0)


def test_dl_rate_monotone_flip_with_zeroed_interference(small_setup):
    cfg, _, _, coef = small_setup
    coef2 = dataclasses.replace(coef) if False else coef
    c = cf.PerfCoefficients(
        c_dl1=coef.c_dl1.copy(), c_dl2=coef.c_dl2.copy(), c_dl3=coef.c_dl3.copy(),
        c_ul1=coef.c_ul1.copy(), c_ul2=coef.c_ul2.copy(), c_ul3=coef.c_ul3.copy(),
        c_s1=coef.c_s1.copy(), c_s2=coef.c_s2.copy(), c_s3=coef.c_s3.copy(),
        tau_bar=coef.tau_bar, n_antennas=coef.n_antennas,
    )
    c.c_dl2[0, :] = 0.0
    a = np.zeros(cfg.m_aps)
    a[1] = 1.0
    base = cf.dl_rate(c, cf.ModeVector.from_dl_mask(a), 0)
    a2 = a.copy()
    a2[0] = 1.0
    flipped = cf.dl_rate(c, cf.ModeVector.from_dl_mask(a2), 0)
    assert flipped >= base


def test_ul_rate_structure_without_dl_aps(small_setup):
    cfg, _, _, coef = small_setup
    mode = cf.ModeVector.from_dl_mask(np.zeros(cfg.m_aps))
    b = mode.b
    for i in range(cfg.k_ul):
        num = float(coef.c_ul1[:, i] @ b) ** 2
        den = float(coef.c_ul2[:, i] @ b**2)  # cross-link term vanishes
        manual = coef.tau_bar * np.log2(1.0 + num / den)
        assert cf.ul_rate(coef, mode, i) == pytest.approx(manual, rel=1e-14)


def test_sensing_sinr_degenerate_modes(small_setup):
    cfg, _, _, coef = small_setup
    all_dl = cf.ModeVector.from_dl_mask(np.ones(cfg.m_aps))
    all_ul = cf.ModeVector.from_dl_mask(np.zeros(cfg.m_aps))
    for p in range(cfg.k_t):
        assert cf.sensing_sinr(coef, all_dl, p) == 0.0
        assert cf.sensing_sinr(coef, all_ul, p) == 0.0


def test_min_sensing_sinr_properties(small_setup):
    cfg, _, _, coef = small_setup
    mode = cf.ModeVector.from_dl_mask(np.array([1.0, 0.0, 1.0]))
    vals = cf.sensing_sinrs(coef, mode)
    assert cf.min_sensing_sinr(coef, mode) == pytest.approx(vals.min(), rel=0)
    # permuting targets leaves the min unchanged
    perm = np.array([1, 0])
    c_perm = cf.PerfCoefficients(
        c_dl1=coef.c_dl1, c_dl2=coef.c_dl2, c_dl3=coef.c_dl3,
        c_ul1=coef.c_ul1, c_ul2=coef.c_ul2, c_ul3=coef.c_ul3,
        c_s1=coef.c_s1[:, perm, :], c_s2=coef.c_s2[:, perm, :],
        c_s3=coef.c_s3[:, perm], tau_bar=coef.tau_bar, n_antennas=coef.n_antennas,
    )
    assert cf.min_sensing_sinr(c_perm, mode) == pytest.approx(
        cf.min_sensing_sinr(coef, mode), rel=0
    )


def test_single_target_reduction():
    cfg = cf.ScenarioConfig(n_x=4, n_z=2, m_aps=3, k_dl=2, k_ul=2, k_t=1, seed=8)
    scn = cf.build_scenario(cfg)
    coef = cf.compute_coefficients(cf.compute_stats(scn), scn)
    mode = cf.ModeVector.from_dl_mask(np.array([1.0, 0.0, 1.0]))
    assert cf.min_sensing_sinr(coef, mode) == cf.sensing_sinr(coef, mode, 0)


def test_ap_relabeling_invariance(small_setup):
    cfg, _, _, coef = small_setup
    perm = np.array([2, 0, 1])
    c_perm = cf.PerfCoefficients(
        c_dl1=coef.c_dl1[perm], c_dl2=coef.c_dl2[perm], c_dl3=coef.c_dl3,
        c_ul1=coef.c_ul1[perm], c_ul2=coef.c_ul2[perm],
        c_ul3=coef.c_ul3[perm][:, perm, :],
        c_s1=coef.c_s1[perm][:, :, perm], c_s2=coef.c_s2[perm][:, :, perm],
        c_s3=coef.c_s3[perm], tau_bar=coef.tau_bar, n_antennas=coef.n_antennas,
    )
    a = np.array([1.0, 0.0, 1.0])
    mode = cf.ModeVector.from_dl_mask(a)
    mode_p = cf.ModeVector.from_dl_mask(a[perm])
    assert np.allclose(cf.dl_rates(c_perm, mode_p), cf.dl_rates(coef, mode))
    assert np.allclose(cf.ul_rates(c_perm, mode_p), cf.ul_rates(coef, mode))
    assert np.allclose(
        cf.sensing_sinrs(c_perm, mode_p), cf.sensing_sinrs(coef, mode)
    )


def test_power_scaling_covariance(small_setup):
    cfg, scn, stats, coef = small_setup
    eps = 0.37
    scn2 = dataclasses.replace(
        scn, p_dl_alloc=eps * scn.p_dl_alloc, p_s_alloc=eps * scn.p_s_alloc
    )
    coef2 = cf.compute_coefficients(stats, scn2)
    assert np.allclose(coef2.c_s1, eps * coef.c_s1, rtol=1e-10)
    assert np.allclose(coef2.c_s2, eps * coef.c_s2, rtol=1e-10)
    assert np.allclose(coef2.c_s3, coef.c_s3, rtol=1e-12)
    # DL desired amplitude scales with sqrt(eps)
    assert np.allclose(coef2.c_dl1, np.sqrt(eps) * coef.c_dl1, rtol=1e-10)


def test_ue_residual_linear_in_data_power(small_setup):
    # c_s3's UE part equals p_ul * N * sum(u * NMSE); verified by dividing the
    # pilot-energy dependence (NMSE) back out.
    cfg, scn, stats, coef = small_setup
    n = cfg.n_antennas
    sl = slice(cfg.k_dl, cfg.k_dl + cfg.k_ul)
    for factor in (1.0, 3.0):
        cfg2 = dataclasses.replace(cfg, p_ul_w=cfg.p_ul_w * factor)
        scn2 = dataclasses.replace(scn, config=cfg2)
        coef2 = cf.compute_coefficients(stats, scn2)
        part1 = coef2.c_s3[:, 0] - n * scn.sigma2_w
        nmse = np.array(
            [
                sum(
                    stats.u[m, j] * cf.nmse_ap_ue(stats, scn2, m, j)
                    for j in range(sl.start, sl.stop)
                )
                for m in range(cfg.m_aps)
            ]
        )
        assert np.allclose(part1, cfg2.p_ul_w * n * nmse, rtol=1e-10)


def test_fractional_mode_accepted(small_setup):
    cfg, _, _, coef = small_setup
    mode = cf.ModeVector(a=np.full(cfg.m_aps, 0.5), b=np.full(cfg.m_aps, 0.5))
    assert cf.dl_rate(coef, mode, 0) > 0
    assert cf.ul_rate(coef, mode, 0) > 0
    assert cf.sensing_sinr(coef, mode, 0) > 0


def test_mode_vector_validation():
    with pytest.raises(ValueError):
        cf.ModeVector(a=np.array([1.0, 0.0]), b=np.array([1.0, 0.0]))
    mv = cf.ModeVector.from_dl_mask([1, 0])
    assert mv.is_binary


def test_coefficient_csv_export(tmp_path, small_setup):
    _, _, _, coef = small_setup
    path = tmp_path / "coef.csv"
    coef.export_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["block", "i0", "i1", "i2", "value"]
    dl1 = [r for r in rows if r[0] == "c_dl1"]
    assert len(dl1) == coef.c_dl1.size
    assert float(dl1[0][4]) == coef.c_dl1[0, 0]
