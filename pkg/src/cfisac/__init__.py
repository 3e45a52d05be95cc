"""cfisac: cooperative bi-static ISAC network simulator and optimizer."""

__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig
from .scenario import (
    LargeScaleStats,
    NetworkScenario,
    ScenarioError,
    build_scenario,
    compute_stats,
    pathloss_comm_db,
    pathloss_radar_db,
)
from .channel import (
    ChannelRealization,
    MmseOperators,
    build_mmse_operators,
    estimate_ap_ap,
    estimate_ap_ue,
    mrt_beamformer,
    nmse_ap_ap,
    nmse_ap_ue,
    sample_realization,
    woodbury_check,
)
from .closed_form import (
    ModeVector,
    PerfCoefficients,
    compute_coefficients,
    dl_rate,
    dl_rates,
    min_sensing_sinr,
    sensing_sinr,
    sensing_sinrs,
    ul_rate,
    ul_rates,
)
from .monte_carlo import (
    EmpiricalTerms,
    McConfig,
    audit_terms,
    empirical_rates_sinr,
    lemma_checks,
    run_oracle,
)
from .qcqp import ConvexProgram, SolveStatus, solve, verify_kkt
from .mode_select import (
    SolveResult,
    SolverConfig,
    exhaustive,
    feasibility_init,
    greedy_select,
    mu_update,
    random_select,
    sca_optimize,
    solve_mode_selection,
    upper_bound,
)
from .experiments import ExperimentSpec, grid_for_antennas, run, validate_spec
