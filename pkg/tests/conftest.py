import pytest

import cfisac as cf


@pytest.fixture(scope="session")
def small_setup():
    """Shared small scenario: M=3, N=8, K=2/2/2."""
    cfg = cf.ScenarioConfig(n_x=4, n_z=2, m_aps=3, k_dl=2, k_ul=2, k_t=2, seed=11)
    scn = cf.build_scenario(cfg)
    stats = cf.compute_stats(scn)
    coef = cf.compute_coefficients(stats, scn)
    return cfg, scn, stats, coef


@pytest.fixture(scope="session")
def tiny_oracle(small_setup):
    """Oracle run reused by several statistical tests."""
    cfg, scn, stats, coef = small_setup
    mc = cf.McConfig(n_realizations=4000, rng_seed=5, batch=128)
    terms = cf.run_oracle(stats, scn, mc)
    return terms
