import dataclasses
import itertools

import numpy as np
import pytest

import cfisac as cf
from cfisac import mode_select as ms
from cfisac.mode_select import (
    SolverConfig,
    binarity_penalty,
    penalty_upper_bound,
    qos_satisfied,
)


@pytest.fixture(scope="module")
def relaxed_cfg():
    return SolverConfig(kappa_dl=0.5, kappa_ul=0.5)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(lambda_growth=0.5).validate()
    with pytest.raises(ValueError):
        SolverConfig(kappa_dl=-1.0).validate()
    SolverConfig().validate()


def test_mu_update_examples(small_setup):
    _, _, _, coef = small_setup
    m = coef.m_aps
    b = np.array([0.0, 1.0, 1.0])
    chi = np.outer(b, 1.0 - b)
    mu = cf.mu_update(coef, b, chi)
    assert np.all(mu > 0)
    # zero echo coefficients force mu = 0
    zero = dataclasses.replace(coef) if False else cf.PerfCoefficients(
        c_dl1=coef.c_dl1, c_dl2=coef.c_dl2, c_dl3=coef.c_dl3,
        c_ul1=coef.c_ul1, c_ul2=coef.c_ul2, c_ul3=coef.c_ul3,
        c_s1=np.zeros_like(coef.c_s1), c_s2=coef.c_s2, c_s3=coef.c_s3,
        tau_bar=coef.tau_bar, n_antennas=coef.n_antennas,
    )
    assert np.all(cf.mu_update(zero, b, chi) == 0.0)
    # scaling the echo block by 4 doubles mu
    four = cf.PerfCoefficients(
        c_dl1=coef.c_dl1, c_dl2=coef.c_dl2, c_dl3=coef.c_dl3,
        c_ul1=coef.c_ul1, c_ul2=coef.c_ul2, c_ul3=coef.c_ul3,
        c_s1=4.0 * coef.c_s1, c_s2=coef.c_s2, c_s3=coef.c_s3,
        tau_bar=coef.tau_bar, n_antennas=coef.n_antennas,
    )
    assert np.allclose(cf.mu_update(four, b, chi), 2.0 * mu, rtol=1e-12)


def test_mu_update_degenerate_warns(small_setup):
    _, _, _, coef = small_setup
    b = np.zeros(coef.m_aps)
    chi = np.zeros((coef.m_aps, coef.m_aps))
    with pytest.warns(UserWarning):
        mu = cf.mu_update(coef, b, chi)
    assert np.all(mu == 0.0)


def test_mu_is_maximizer_of_surrogate(small_setup):
    # t(mu) = 2 mu sqrt(num) - mu^2 den is maximized at mu* = sqrt(num)/den.
    _, _, _, coef = small_setup
    b = np.array([0.0, 1.0, 0.0])
    a = 1.0 - b
    chi = np.outer(b, a)
    mu_star = cf.mu_update(coef, b, chi)
    num = np.einsum("mpl,ml->p", coef.c_s1, chi)
    den = np.einsum("mpl,ml->p", coef.c_s2, chi) + coef.c_s3.T @ b
    for p in range(coef.k_t):
        def surrogate(mu):
            return 2.0 * mu * np.sqrt(num[p]) - mu**2 * den[p]
        grid = np.linspace(0.2 * mu_star[p], 5.0 * mu_star[p], 201)
        best = grid[np.argmax([surrogate(m_) for m_ in grid])]
        assert best == pytest.approx(mu_star[p], rel=0.02)
        assert surrogate(mu_star[p]) == pytest.approx(num[p] / den[p], rel=1e-12)


def test_mccormick_exact_at_binary_points():
    for m in range(1, 7):
        for bits in itertools.product((0.0, 1.0), repeat=m):
            a = np.array(bits)
            b = 1.0 - a
            lo = np.maximum(0.0, a[None, :] + b[:, None] - 1.0)
            hi = np.minimum(a[None, :], np.broadcast_to(b[:, None], (m, m)))
            assert np.allclose(lo, hi)
            assert np.allclose(lo, np.outer(b, a))


def test_penalty_identity_and_majorization():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = 4
        a = rng.uniform(0, 1, m)
        b = 1.0 - a
        chi = rng.uniform(0, 1, (m, m))
        phi = binarity_penalty(a, b, chi)
        assert phi >= -1e-12
        a_n = rng.uniform(0, 1, m)
        b_n = 1.0 - a_n
        chi_n = rng.uniform(0, 1, (m, m))
        phat = penalty_upper_bound(a, b, chi, a_n, b_n, chi_n)
        assert phat >= phi - 1e-10
    a_bin = np.array([1.0, 0.0, 1.0, 0.0])
    chi_bin = np.outer(1.0 - a_bin, a_bin)
    assert binarity_penalty(a_bin, 1.0 - a_bin, chi_bin) == 0.0
    assert penalty_upper_bound(
        a_bin, 1.0 - a_bin, chi_bin, a_bin, 1.0 - a_bin, chi_bin
    ) == pytest.approx(0.0, abs=1e-12)


def test_taylor_bound_tighter_than_true_constraint(small_setup):
    _, _, _, coef = small_setup
    rng = np.random.default_rng(1)
    eta = 2.0 ** (1.0 / coef.tau_bar) - 1.0
    c1 = coef.c_dl1[:, 0]
    c2 = coef.c_dl2[:, 0]
    c3 = coef.c_dl3[0]
    for _ in range(100):
        a_n = rng.uniform(0, 1, coef.m_aps)
        a = rng.uniform(0, 1, coef.m_aps)
        psi_n = c1 @ a_n
        g_true = eta * (c2 @ a + c3) - (c1 @ a) ** 2
        g_lin = eta * (c2 @ a + c3) - psi_n**2 - 2 * psi_n * (c1 @ (a - a_n))
        assert g_lin >= g_true - 1e-18
        # subproblem feasibility implies true feasibility
        if g_lin <= 0:
            assert g_true <= 1e-18


def test_two_ap_adjacency_matches_exhaustive():
    cfg = cf.ScenarioConfig(
        n_x=4, n_z=2, m_aps=2, k_dl=1, k_ul=1, k_t=1,
        min_ap_spacing_m=0.0, seed=0,
    )
    scn = cf.build_scenario(cfg)
    scn.ap_positions = np.array([[100.0, 150.0], [220.0, 150.0]])
    scn.target_positions = np.array([[110.0, 150.0]])
    scn.ue_ul_positions = np.array([[221.0, 150.0]])
    scn.ue_dl_positions = np.array([[150.0, 100.0]])
    stats = cf.compute_stats(scn)
    coef = cf.compute_coefficients(stats, scn)
    solver = SolverConfig(kappa_dl=0.1, kappa_ul=0.1)
    res = cf.solve_mode_selection(coef, solver)
    exh = cf.exhaustive(coef, solver)
    assert res.status == exh.status == "optimal"
    assert np.array_equal(res.mode.a, exh.mode.a)


def test_sca_trace_monotone_and_converges(small_setup, relaxed_cfg):
    _, _, _, coef = small_setup
    feasible, a, b, chi = cf.feasibility_init(coef, relaxed_cfg)
    assert feasible
    res = cf.sca_optimize(coef, relaxed_cfg, (a, b, chi))
    assert res.status == "optimal"
    assert res.trace, "trace must record the iterations"
    by_stage = {}
    for entry in res.trace:
        by_stage.setdefault(entry["stage"], []).append(entry["objective"])
    for objs in by_stage.values():
        diffs = np.diff(objs)
        assert np.all(diffs <= 1e-6)
    assert res.trace[-1]["phi"] < 1e-4
    # chi at the solution equals the outer product of the binary mode
    assert np.allclose(res.chi, np.outer(res.mode.b, res.mode.a))
    assert qos_satisfied(coef, res.mode, relaxed_cfg)


def test_feasibility_vacuous_and_unreachable(small_setup):
    _, _, _, coef = small_setup
    feas, *_ = cf.feasibility_init(coef, SolverConfig(kappa_dl=1e-9, kappa_ul=1e-9))
    assert feas
    feas_bad, *_ = cf.feasibility_init(coef, SolverConfig(kappa_dl=1e6, kappa_ul=1e6))
    assert not feas_bad


def test_feasibility_verdict_matches_exhaustive_m8():
    # Desk-scale default array (N=32), where the fractional relaxation and
    # the binary enumeration agree on feasibility at kappa = 2.
    cfg = cf.ScenarioConfig(n_x=8, n_z=4, m_aps=8, seed=4)
    scn = cf.build_scenario(cfg)
    coef = cf.compute_coefficients(cf.compute_stats(scn), scn)
    solver = SolverConfig(kappa_dl=2.0, kappa_ul=2.0)
    feas, *_ = cf.feasibility_init(coef, solver)
    exh = cf.exhaustive(coef, solver)
    assert feas == (exh.status == "optimal")


def test_greedy_flips_closest_ap_first():
    cfg = cf.ScenarioConfig(
        n_x=4, n_z=2, m_aps=2, k_dl=1, k_ul=1, k_t=1,
        min_ap_spacing_m=0.0, seed=0,
    )
    scn = cf.build_scenario(cfg)
    scn.ap_positions = np.array([[150.0, 160.0], [150.0, 250.0]])
    scn.target_positions = np.array([[150.0, 150.0]])
    stats = cf.compute_stats(scn)
    coef = cf.compute_coefficients(stats, scn)
    res = cf.greedy_select(coef, scn, SolverConfig(kappa_dl=1e-9, kappa_ul=1e-9))
    assert res.trace[0]["flip"] == 0  # AP 0 is 10 m from the target


def test_greedy_always_flips_at_least_once(small_setup, relaxed_cfg):
    _, scn, _, coef = small_setup
    res = cf.greedy_select(coef, scn, relaxed_cfg)
    assert len(res.trace) >= 1
    assert not res.mode.b.sum() == 0  # all-DL has zero sensing SINR


def test_greedy_never_beats_exhaustive(relaxed_cfg):
    for seed in (1, 2, 3):
        cfg = cf.ScenarioConfig(n_x=4, n_z=2, m_aps=6, seed=seed)
        scn = cf.build_scenario(cfg)
        coef = cf.compute_coefficients(cf.compute_stats(scn), scn)
        gre = cf.greedy_select(coef, scn, relaxed_cfg)
        exh = cf.exhaustive(coef, relaxed_cfg)
        if gre.status == "optimal" and exh.status == "optimal":
            assert gre.min_sinr_db <= exh.min_sinr_db + 1e-9


def test_exhaustive_against_local_bruteforce(small_setup, relaxed_cfg):
    cfg, _, _, coef = small_setup
    exh = cf.exhaustive(coef, relaxed_cfg)
    best_val, best_a = -1.0, None
    for bits in itertools.product((0.0, 1.0), repeat=cfg.m_aps):
        mode = cf.ModeVector.from_dl_mask(np.array(bits))
        if not qos_satisfied(coef, mode, relaxed_cfg):
            continue
        val = cf.min_sensing_sinr(coef, mode)
        if val > best_val:
            best_val, best_a = val, np.array(bits)
    assert np.array_equal(exh.mode.a, best_a)


def test_exhaustive_single_ap_lexicographic():
    cfg = cf.ScenarioConfig(
        n_x=2, n_z=2, m_aps=1, k_dl=1, k_ul=1, k_t=1, seed=1
    )
    scn = cf.build_scenario(cfg)
    coef = cf.compute_coefficients(cf.compute_stats(scn), scn)
    res = cf.exhaustive(coef, SolverConfig(kappa_dl=0.0, kappa_ul=0.0))
    # both modes give SINR 0; lexicographically smallest a-vector wins
    assert res.mode.a[0] == 0.0


def test_exhaustive_guard():
    coef_m = 21
    dummy = cf.PerfCoefficients(
        c_dl1=np.ones((coef_m, 1)), c_dl2=np.ones((coef_m, 1)), c_dl3=np.ones(1),
        c_ul1=np.ones((coef_m, 1)), c_ul2=np.ones((coef_m, 1)),
        c_ul3=np.ones((coef_m, coef_m, 1)),
        c_s1=np.ones((coef_m, 1, coef_m)), c_s2=np.ones((coef_m, 1, coef_m)),
        c_s3=np.ones((coef_m, 1)), tau_bar=0.9, n_antennas=4,
    )
    with pytest.raises(ValueError):
        cf.exhaustive(dummy, SolverConfig())


def test_upper_bound_dominates_constrained_exhaustive(small_setup, relaxed_cfg):
    _, _, _, coef = small_setup
    no_qos = cf.exhaustive(coef, relaxed_cfg, include_qos=False)
    with_qos = cf.exhaustive(coef, relaxed_cfg, include_qos=True)
    assert no_qos.min_sinr_db >= with_qos.min_sinr_db - 1e-9
    ub = cf.upper_bound(coef, relaxed_cfg)
    assert ub.min_sinr_db <= no_qos.min_sinr_db + 1e-9


def test_random_select_reproducible():
    a = ms.random_select(np.random.default_rng(9), 6)
    b = ms.random_select(np.random.default_rng(9), 6)
    assert np.array_equal(a.a, b.a)
    assert a.is_binary
    assert np.all(a.a + a.b == 1.0)


def test_solve_result_serializable(small_setup, relaxed_cfg):
    _, _, _, coef = small_setup
    res = cf.solve_mode_selection(coef, relaxed_cfg)
    d = res.to_dict()
    assert set(d) >= {"a", "b", "chi", "min_sinr_db", "rates_dl", "rates_ul",
                      "trace", "status"}
    import json

    json.dumps(d)
