"""AP uplink/downlink mode selection.

Maximizes the minimum sensing SINR under per-UE rate constraints by a
penalized successive convex approximation: the fractional-programming
auxiliary turns each SINR constraint into a convex one, the bilinear a*b
products are lifted into McCormick variables chi, the binary set is enforced
by a growing (x - x^2) penalty, and each convex subproblem is handed to the
interior-point solver. Benchmarks: greedy distance-based selection, uniform
random selection, the QoS-free upper bound, and exhaustive enumeration.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from . import qcqp
from .closed_form import (
    ModeVector,
    PerfCoefficients,
    dl_rates,
    min_sensing_sinr,
    ul_rates,
)
from .scenario import NetworkScenario, ap_target_distances

_QOS_SLACK = 1e-9
_EXHAUSTIVE_LIMIT = 20


@dataclass(frozen=True)
class SolverConfig:
    kappa_dl: float = 2.0
    kappa_ul: float = 2.0
    lambda_penalty: float = 1.0
    lambda_growth: float = 10.0
    lambda_cap: float = 1e6
    binarity_tol: float = 1e-4
    sca_tol: float = 1e-4
    n_max: int = 50
    feas_max_iters: int = 30
    feas_lambda_scale: float = 1e-3   # slack must dominate the feasibility search
    feas_restarts: int = 3
    n_starts: int = 4                 # independent SCA restarts, best result kept
    init_seed: int = 0
    rounding_rule: str = "dl-wins-ties-then-1flip"

    def validate(self) -> "SolverConfig":
        if min(self.kappa_dl, self.kappa_ul) < 0:
            raise ValueError("QoS thresholds must be nonnegative")
        if self.lambda_growth <= 1.0:
            raise ValueError("lambda_growth must exceed 1")
        if min(self.lambda_penalty, self.binarity_tol, self.sca_tol) <= 0:
            raise ValueError("penalty and tolerances must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        return self


@dataclass(eq=False)
class SolveResult:
    mode: ModeVector
    chi: np.ndarray
    min_sinr_db: float
    rates_dl: np.ndarray
    rates_ul: np.ndarray
    trace: list
    status: str          # optimal | infeasible | degraded

    def to_dict(self) -> dict:
        return {
            "a": self.mode.a.tolist(),
            "b": self.mode.b.tolist(),
            "chi": self.chi.tolist(),
            "min_sinr_db": float(self.min_sinr_db),
            "rates_dl": self.rates_dl.tolist(),
            "rates_ul": self.rates_ul.tolist(),
            "trace": self.trace,
            "status": self.status,
        }


# ---------------------------------------------------------------------------
# Penalty helpers
# ---------------------------------------------------------------------------

def binarity_penalty(a, b, chi) -> float:
    """phi(a, b, chi): zero exactly at binary points."""
    return float(
        np.sum(a - a**2) + np.sum(b - b**2) + np.sum(chi - chi**2)
    )


def penalty_upper_bound(a, b, chi, a_n, b_n, chi_n) -> float:
    """Convex (linear) majorizer of the penalty at the expansion point."""
    val = np.sum(a - 2.0 * a_n * a + a_n**2)
    val += np.sum(b - 2.0 * b_n * b + b_n**2)
    val += np.sum(chi - 2.0 * chi_n * chi + chi_n**2)
    return float(val)


def mu_update(coef: PerfCoefficients, b, chi) -> np.ndarray:
    """Closed-form optimum of the fractional-programming auxiliaries."""
    num = np.einsum("mpl,ml->p", coef.c_s1, chi)
    den = np.einsum("mpl,ml->p", coef.c_s2, chi) + coef.c_s3.T @ b
    mu = np.zeros(coef.k_t)
    for p in range(coef.k_t):
        if den[p] <= 0.0:
            warnings.warn("degenerate all-DL point: zero sensing denominator")
            continue
        mu[p] = np.sqrt(max(num[p], 0.0)) / den[p]
    return mu


# ---------------------------------------------------------------------------
# Scaled coefficient blocks for well-conditioned subproblems
# ---------------------------------------------------------------------------

class _Blocks:
    """Per-output rescaled copies of the coefficients (SINRs unchanged)."""

    def __init__(self, coef: PerfCoefficients, cfg: SolverConfig):
        self.coef = coef
        self.m = coef.m_aps
        self.k_dl = coef.c_dl1.shape[1]
        self.k_ul = coef.c_ul1.shape[1]
        self.k_t = coef.k_t
        self.tau_bar = coef.tau_bar
        s_dl = coef.c_dl3
        self.dl1 = coef.c_dl1 / np.sqrt(s_dl)[None, :]
        self.dl2 = coef.c_dl2 / s_dl[None, :]
        s_ul = coef.c_ul2.mean(axis=0)
        self.ul1 = coef.c_ul1 / np.sqrt(s_ul)[None, :]
        self.ul2 = coef.c_ul2 / s_ul[None, :]
        self.ul3 = coef.c_ul3 / s_ul[None, None, :]
        s_s = float(coef.c_s3.mean())
        self.s1 = coef.c_s1 / s_s
        self.s2 = coef.c_s2 / s_s
        self.s3 = coef.c_s3 / s_s
        # Normalize the epigraph variable so a typical SINR maps to t ~ 1 and
        # the -t objective stays visible next to the binarity penalty.
        half_num = 0.25 * self.s1.sum(axis=(0, 2))
        half_den = 0.25 * self.s2.sum(axis=(0, 2)) + 0.5 * self.s3.sum(axis=0)
        t_scale = float((half_num / np.maximum(half_den, 1e-300)).max())
        self.t_scale = t_scale if t_scale > 0 else 1.0
        self.s1 = self.s1 / self.t_scale
        # Penalty measured in the same unit: phi at the half point maps to 1.
        self.pen_scale = 0.5 * self.m + 0.1875 * self.m**2
        # exponent capped so absurd QoS targets degrade to "infeasible"
        # instead of overflowing
        self.eta_dl = 2.0 ** min(cfg.kappa_dl / coef.tau_bar, 700.0) - 1.0
        self.eta_ul = 2.0 ** min(cfg.kappa_ul / coef.tau_bar, 700.0) - 1.0

    def sensing_num_den(self, b, chi):
        num = np.einsum("mpl,ml->p", self.s1, chi)
        den = np.einsum("mpl,ml->p", self.s2, chi) + self.s3.T @ b
        return num, den

    def t_of(self, b, chi) -> float:
        num, den = self.sensing_num_den(b, chi)
        vals = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        return float(vals.min())

    def mu_of(self, b, chi) -> np.ndarray:
        num, den = self.sensing_num_den(b, chi)
        mu = np.zeros(self.k_t)
        ok = den > 0
        mu[ok] = np.sqrt(np.maximum(num[ok], 0.0)) / den[ok]
        return mu


def _chi_index(m: int, row: int, col: int) -> int:
    return 2 * m + row * m + col


def _build_main_program(
    blocks: _Blocks,
    mu: np.ndarray,
    a_n: np.ndarray,
    b_n: np.ndarray,
    chi_n: np.ndarray,
    lam: float,
    include_qos: bool,
):
    """Convex subproblem at the expansion point; variables [a b chi t s]."""
    m, k_t = blocks.m, blocks.k_t
    n_chi = m * m
    it = 2 * m + n_chi
    n_vars = it + 1 + k_t

    c = np.zeros(n_vars)
    c[it] = -1.0
    c[:m] = lam * (1.0 - 2.0 * a_n)
    c[m : 2 * m] = lam * (1.0 - 2.0 * b_n)
    c[2 * m : it] = lam * (1.0 - 2.0 * chi_n.ravel())
    const = lam * float(np.sum(a_n**2) + np.sum(b_n**2) + np.sum(chi_n**2))
    scale = max(1.0, float(np.abs(c).max()))

    eqs = []
    for j in range(m):
        row = np.zeros(n_vars)
        row[j] = 1.0
        row[m + j] = 1.0
        eqs.append((row, 1.0))

    ineqs = []
    for mm in range(m):
        for ll in range(m):
            ci = _chi_index(m, mm, ll)
            r1 = np.zeros(n_vars)
            r1[ci] = 1.0
            r1[ll] = -1.0
            ineqs.append((r1, 0.0))           # chi <= a_l
            r2 = np.zeros(n_vars)
            r2[ci] = 1.0
            r2[m + mm] = -1.0
            ineqs.append((r2, 0.0))           # chi <= b_m
            r3 = np.zeros(n_vars)
            r3[ci] = -1.0
            r3[ll] = 1.0
            r3[m + mm] = 1.0
            ineqs.append((r3, 1.0))           # chi >= a_l + b_m - 1

    for p in range(k_t):
        row = np.zeros(n_vars)
        row[2 * m : it] += mu[p] ** 2 * blocks.s2[:, p, :].ravel()
        row[m : 2 * m] += mu[p] ** 2 * blocks.s3[:, p]
        row[it] = 1.0
        row[it + 1 + p] = -2.0 * mu[p]
        ineqs.append((row, 0.0))              # quadratic-transform epigraph

    if include_qos:
        for k in range(blocks.k_dl):
            psi_n = float(blocks.dl1[:, k] @ a_n)
            row = np.zeros(n_vars)
            row[:m] = blocks.eta_dl * blocks.dl2[:, k] - 2.0 * psi_n * blocks.dl1[:, k]
            ineqs.append((row, -blocks.eta_dl - psi_n**2))
        for i in range(blocks.k_ul):
            xi_n = float(blocks.ul1[:, i] @ b_n)
            row = np.zeros(n_vars)
            row[m : 2 * m] = blocks.eta_ul * blocks.ul2[:, i] - 2.0 * xi_n * blocks.ul1[:, i]
            row[2 * m : it] = blocks.eta_ul * blocks.ul3[:, :, i].ravel()
            ineqs.append((row, -(xi_n**2)))

    quads = []
    for p in range(k_t):
        q = np.zeros((n_vars, n_vars))
        q[it + 1 + p, it + 1 + p] = 1.0
        pv = np.zeros(n_vars)
        pv[2 * m : it] = -blocks.s1[:, p, :].ravel()
        quads.append((q, pv, 0.0))            # s_p^2 <= sum c_s1 chi

    lb = np.zeros(n_vars)
    ub = np.ones(n_vars)
    lb[it] = -1.0
    ub[it] = np.inf
    s_ub = np.sqrt(np.maximum(blocks.s1.sum(axis=(0, 2)), 0.0)) + 1.0
    for p in range(k_t):
        lb[it + 1 + p] = 0.0
        ub[it + 1 + p] = s_ub[p]

    prog = qcqp.ConvexProgram(
        n_vars=n_vars,
        objective=c / scale,
        eq_constraints=eqs,
        ineq_constraints=ineqs,
        quad_constraints=quads,
        lb=lb,
        ub=ub,
    )
    return prog, const, scale


def _build_feasibility_program(
    blocks: _Blocks,
    cfg: SolverConfig,
    a_n: np.ndarray,
    b_n: np.ndarray,
    chi_n: np.ndarray,
    lam: float,
):
    """Slack-relaxed QoS program with the concave-log lower bound."""
    m = blocks.m
    n_chi = m * m
    ie = 2 * m + n_chi                       # epsilon index
    n_vars = ie + 1
    ln2 = np.log(2.0)
    tb = blocks.tau_bar

    c = np.zeros(n_vars)
    c[ie] = 1.0
    c[:m] = lam * (1.0 - 2.0 * a_n)
    c[m : 2 * m] = lam * (1.0 - 2.0 * b_n)
    c[2 * m : ie] = lam * (1.0 - 2.0 * chi_n.ravel())
    const = lam * float(np.sum(a_n**2) + np.sum(b_n**2) + np.sum(chi_n**2))
    scale = max(1.0, float(np.abs(c).max()))

    eqs = []
    for j in range(m):
        row = np.zeros(n_vars)
        row[j] = 1.0
        row[m + j] = 1.0
        eqs.append((row, 1.0))

    ineqs = []
    for mm in range(m):
        for ll in range(m):
            ci = _chi_index(m, mm, ll)
            r1 = np.zeros(n_vars)
            r1[ci] = 1.0
            r1[ll] = -1.0
            ineqs.append((r1, 0.0))
            r2 = np.zeros(n_vars)
            r2[ci] = 1.0
            r2[m + mm] = -1.0
            ineqs.append((r2, 0.0))
            r3 = np.zeros(n_vars)
            r3[ci] = -1.0
            r3[ll] = 1.0
            r3[m + mm] = 1.0
            ineqs.append((r3, 1.0))

    quads = []

    def add_rate_bound(c1_vars, c1_idx, omega_rows, omega_const, psi_n, omega_n, kappa):
        """kappa - eps - Rtilde <= 0 with Rtilde the concave-log lower bound."""
        ratio = psi_n**2 / omega_n
        const_part = (tb / ln2) * (np.log1p(ratio) - ratio)
        lin_coef = (tb / ln2) * (2.0 * psi_n / omega_n)
        curv = (tb / ln2) * psi_n**2 / (omega_n * (psi_n**2 + omega_n))
        q = np.zeros((n_vars, n_vars))
        v1 = np.zeros(n_vars)
        v1[c1_idx] = c1_vars
        q += curv * np.outer(v1, v1)
        pv = np.zeros(n_vars)
        pv += curv * omega_rows
        pv[c1_idx] -= lin_coef * c1_vars
        pv[ie] = -1.0
        r = kappa - const_part + curv * omega_const
        quads.append((q, pv, r))

    a_idx = np.arange(m)
    b_idx = np.arange(m, 2 * m)
    for k in range(blocks.k_dl):
        psi_n = float(blocks.dl1[:, k] @ a_n)
        omega_n = float(blocks.dl2[:, k] @ a_n) + 1.0
        omega_rows = np.zeros(n_vars)
        omega_rows[a_idx] = blocks.dl2[:, k]
        add_rate_bound(blocks.dl1[:, k], a_idx, omega_rows, 1.0, psi_n, omega_n, cfg.kappa_dl)
    for i in range(blocks.k_ul):
        xi_n = float(blocks.ul1[:, i] @ b_n)
        pi_n = float(blocks.ul2[:, i] @ b_n) + float(
            np.sum(blocks.ul3[:, :, i] * chi_n)
        )
        omega_rows = np.zeros(n_vars)
        omega_rows[b_idx] = blocks.ul2[:, i]
        omega_rows[2 * m : ie] = blocks.ul3[:, :, i].ravel()
        add_rate_bound(blocks.ul1[:, i], b_idx, omega_rows, 0.0, xi_n, max(pi_n, 1e-12), cfg.kappa_ul)

    lb = np.zeros(n_vars)
    ub = np.ones(n_vars)
    big = max(cfg.kappa_dl, cfg.kappa_ul) + 100.0
    lb[ie] = -big
    ub[ie] = big

    prog = qcqp.ConvexProgram(
        n_vars=n_vars,
        objective=c / scale,
        eq_constraints=eqs,
        ineq_constraints=ineqs,
        quad_constraints=quads,
        lb=lb,
        ub=ub,
    )
    return prog, const, scale


# ---------------------------------------------------------------------------
# QoS bookkeeping
# ---------------------------------------------------------------------------

def qos_satisfied(coef: PerfCoefficients, mode: ModeVector, cfg: SolverConfig) -> bool:
    return bool(
        dl_rates(coef, mode).min() >= cfg.kappa_dl - _QOS_SLACK
        and ul_rates(coef, mode).min() >= cfg.kappa_ul - _QOS_SLACK
    )


def _round_mode(a: np.ndarray) -> ModeVector:
    # DL wins ties for determinism.
    return ModeVector.from_dl_mask(a >= 0.5)


def _binary_refine(
    coef: PerfCoefficients,
    cfg: SolverConfig,
    mode: ModeVector,
    include_qos: bool,
) -> ModeVector:
    """Deterministic best-improvement 1-flip climb from the rounded point.

    Only QoS-feasible flips are accepted; if the rounded point itself
    violates QoS, the climb first repairs it through the best feasible flip
    when one exists.
    """
    a = mode.a.copy()

    def ok(mv):
        return (not include_qos) or qos_satisfied(coef, mv, cfg)

    # Candidate anchors: the rounded point, its QoS-repairing single flips,
    # and the role-swapped complement (a 2-flip move at M=2 that the 1-flip
    # climb below cannot reach).
    candidates = []
    cur_mode = ModeVector.from_dl_mask(a)
    if ok(cur_mode):
        candidates.append(a.copy())
    else:
        for j in range(len(a)):
            a2 = a.copy()
            a2[j] = 1.0 - a2[j]
            if ok(ModeVector.from_dl_mask(a2)):
                candidates.append(a2)
    comp = 1.0 - a
    if ok(ModeVector.from_dl_mask(comp)):
        candidates.append(comp)
    if not candidates:
        return cur_mode
    a = max(
        candidates,
        key=lambda v: min_sensing_sinr(coef, ModeVector.from_dl_mask(v)),
    )
    cur = min_sensing_sinr(coef, ModeVector.from_dl_mask(a))
    improved = True
    while improved:
        improved = False
        best = None
        for j in range(len(a)):
            a2 = a.copy()
            a2[j] = 1.0 - a2[j]
            mv = ModeVector.from_dl_mask(a2)
            if not ok(mv):
                continue
            val = min_sensing_sinr(coef, mv)
            if val > cur + 1e-15 and (best is None or val > best[0]):
                best = (val, a2)
        if best is not None:
            cur, a = best
            improved = True
    return ModeVector.from_dl_mask(a)


def _result_for_mode(coef, mode, trace, status) -> SolveResult:
    sinr = min_sensing_sinr(coef, mode)
    with np.errstate(divide="ignore"):
        sinr_db = float(10.0 * np.log10(sinr)) if sinr > 0 else float("-inf")
    chi = np.outer(mode.b, mode.a)
    return SolveResult(
        mode=mode,
        chi=chi,
        min_sinr_db=sinr_db,
        rates_dl=dl_rates(coef, mode),
        rates_ul=ul_rates(coef, mode),
        trace=trace,
        status=status,
    )


# ---------------------------------------------------------------------------
# Feasibility phase
# ---------------------------------------------------------------------------

def feasibility_init(coef: PerfCoefficients, cfg: SolverConfig):
    """Search for a fractional point meeting both QoS families.

    Runs the slack-relaxed SCA from a few random starts; declares feasible as
    soon as the optimal slack goes negative. Infeasible is a valid outcome,
    not an error; the point returned is still the best iterate found.
    """
    cfg.validate()
    blocks = _Blocks(coef, cfg)
    m = blocks.m
    lam = cfg.lambda_penalty * cfg.feas_lambda_scale / blocks.pen_scale
    rng = np.random.default_rng(cfg.init_seed)
    best = None  # (eps, a, b, chi)
    for _ in range(max(1, cfg.feas_restarts)):
        a = rng.uniform(0.25, 0.75, m)
        b = 1.0 - a
        chi = np.outer(b, a)
        prev = None
        eps = np.inf
        for _ in range(cfg.feas_max_iters):
            prog, const, scale = _build_feasibility_program(blocks, cfg, a, b, chi, lam)
            st = qcqp.solve(prog, tol=1e-8, max_iter=200)
            if st.status == "infeasible":
                break
            x = st.x
            a = x[:m]
            b = x[m : 2 * m]
            chi = x[2 * m : 2 * m + m * m].reshape(m, m)
            eps = float(x[-1])
            obj = st.objective_value * scale + const
            if eps < -1e-6:
                break
            if prev is not None and abs(obj - prev) < cfg.sca_tol:
                break
            prev = obj
        if best is None or eps < best[0]:
            best = (eps, a, b, chi)
        if eps < 0.0:
            break
    eps, a, b, chi = best
    return eps < 0.0, a, b, chi


# ---------------------------------------------------------------------------
# Main SCA loop
# ---------------------------------------------------------------------------

def sca_optimize(
    coef: PerfCoefficients,
    cfg: SolverConfig,
    init,
    include_qos: bool = True,
) -> SolveResult:
    """Penalized SCA with McCormick lifting and lambda continuation.

    init is the (a, b, chi) triple from feasibility_init. The converged
    fractional point is rounded (DL wins ties), QoS re-verified, and on
    violation the best QoS-feasible rounded iterate seen is returned with
    status "degraded".
    """
    cfg.validate()
    blocks = _Blocks(coef, cfg)
    m, k_t = blocks.m, blocks.k_t
    a, b, chi = (np.asarray(v, dtype=float).copy() for v in init)
    chi = chi.reshape(m, m)

    trace: list = []
    best_feasible: tuple[float, ModeVector] | None = None
    lam = cfg.lambda_penalty
    degraded = False

    def consider_rounded(a_vec):
        nonlocal best_feasible
        mode = _round_mode(a_vec)
        if include_qos and not qos_satisfied(coef, mode, cfg):
            return
        val = min_sensing_sinr(coef, mode)
        if best_feasible is None or val > best_feasible[0]:
            best_feasible = (val, mode)

    consider_rounded(a)
    stage_counter = [0]

    def inner_stage(a, b, chi, lam):
        """One fixed-lambda SCA pass; returns the new iterate and a flag
        signalling a mid-stage infeasible subproblem."""
        stage_counter[0] += 1
        lam_eff = lam / blocks.pen_scale
        objs = [-blocks.t_of(b, chi) + lam_eff * binarity_penalty(a, b, chi)]
        for _ in range(cfg.n_max):
            mu = blocks.mu_of(b, chi)
            prog, const, scale = _build_main_program(
                blocks, mu, a, b, chi, lam_eff, include_qos
            )
            hint = _main_hint(blocks, mu, a, b, chi)
            st = qcqp.solve(prog, tol=1e-7, max_iter=200, x0=hint)
            if st.status == "infeasible":
                return a, b, chi, True
            x = st.x
            a = np.clip(x[:m], 0.0, 1.0)
            b = np.clip(x[m : 2 * m], 0.0, 1.0)
            chi = np.clip(x[2 * m : 2 * m + m * m].reshape(m, m), 0.0, 1.0)
            obj = st.objective_value * scale + const
            trace.append(
                {
                    "stage": stage_counter[0],
                    "lambda": lam,
                    "objective": obj,
                    "phi": binarity_penalty(a, b, chi),
                    "mu": mu_update(coef, b, chi).tolist(),
                    "t": float(x[2 * m + m * m]) * blocks.t_scale,
                    "min_sinr_db": _sinr_db(blocks.t_of(b, chi) * blocks.t_scale),
                }
            )
            consider_rounded(a)
            objs.append(obj)
            if abs(obj - objs[-2]) < cfg.sca_tol:
                break
            # Period-2 cycling between two near-binary iterates.
            if len(objs) >= 3 and abs(obj - objs[-3]) < cfg.sca_tol:
                break
        return a, b, chi, False

    prev_stage = None
    while True:
        a, b, chi, bad = inner_stage(a, b, chi, lam)
        if bad:
            degraded = True
            break
        phi_val = binarity_penalty(a, b, chi)
        if phi_val < cfg.binarity_tol:
            break
        lam *= cfg.lambda_growth
        if lam > cfg.lambda_cap:
            break
        state = np.concatenate([a, b, chi.ravel()])
        if prev_stage is not None and np.abs(state - prev_stage).max() < 1e-6:
            break  # pinned fractional point; growing lambda cannot move it
        prev_stage = state
        # The penalty majorizer is flat at the half point, so entries sitting
        # at 0.5 feel no push at any lambda; break the symmetry toward the
        # rounded side (DL on ties) before re-expanding.
        drift = np.where(a >= 0.5, 1.0, -1.0)
        a = np.clip(a + 0.02 * drift, 0.0, 1.0)
        b = 1.0 - a
        chi = np.outer(b, a)

    mode = _binary_refine(coef, cfg, _round_mode(a), include_qos)
    qos_ok = (not include_qos) or qos_satisfied(coef, mode, cfg)
    if qos_ok and not degraded and binarity_penalty(a, b, chi) >= cfg.binarity_tol:
        # A QoS-pinned fractional point cannot binarize through the penalty
        # alone; re-anchor the continuation at the refined binary mode so the
        # run terminates at an exactly binary iterate.
        a, b = mode.a.copy(), mode.b.copy()
        chi = np.outer(b, a)
        a, b, chi, bad = inner_stage(a, b, chi, min(lam, cfg.lambda_cap))
        degraded = degraded or bad
        mode = _binary_refine(coef, cfg, _round_mode(a), include_qos)
        qos_ok = (not include_qos) or qos_satisfied(coef, mode, cfg)

    if qos_ok:
        if best_feasible is not None and best_feasible[0] > min_sensing_sinr(coef, mode):
            mode = best_feasible[1]
        return _result_for_mode(coef, mode, trace, "degraded" if degraded else "optimal")
    if best_feasible is not None:
        return _result_for_mode(coef, best_feasible[1], trace, "degraded")
    return _result_for_mode(coef, mode, trace, "degraded")


def _sinr_db(linear: float) -> float:
    return float(10.0 * np.log10(linear)) if linear > 0 else float("-inf")


def _main_hint(blocks: _Blocks, mu, a, b, chi):
    """Strictly feasible starting point near the expansion point, if possible."""
    m, k_t = blocks.m, blocks.k_t
    pull = 0.02
    a_h = (1.0 - pull) * a + pull * 0.5
    b_h = 1.0 - a_h
    chi_h = (1.0 - pull) * chi + pull * 0.25
    num = np.einsum("mpl,ml->p", blocks.s1, chi_h)
    s_h = 0.95 * np.sqrt(np.maximum(num, 1e-300))
    den = np.einsum("mpl,ml->p", blocks.s2, chi_h) + blocks.s3.T @ b_h
    t_cap = 2.0 * mu * s_h - mu**2 * den
    t_h = max(float(t_cap.min()) - 1e-6, -0.999) if k_t else 0.0
    t_h = min(t_h, 1e6)
    return np.concatenate([a_h, b_h, chi_h.ravel(), [t_h], s_h])


def solve_mode_selection(coef: PerfCoefficients, cfg: SolverConfig) -> SolveResult:
    """Feasibility check followed by the SCA optimizer, best of n_starts."""
    cfg.validate()
    best = None
    first = None
    for s in range(max(1, cfg.n_starts)):
        cfg_s = dataclasses.replace(cfg, init_seed=cfg.init_seed + 7919 * s)
        feasible, a, b, chi = feasibility_init(coef, cfg_s)
        if not feasible:
            res = _result_for_mode(coef, _round_mode(a), [], "infeasible")
        else:
            res = sca_optimize(coef, cfg_s, (a, b, chi))
        if first is None:
            first = res
        if res.status != "infeasible" and qos_satisfied(coef, res.mode, cfg):
            if best is None or res.min_sinr_db > best.min_sinr_db:
                best = res
    return best if best is not None else first


def upper_bound(coef: PerfCoefficients, cfg: SolverConfig) -> SolveResult:
    """SCA without the communication QoS constraints, best of n_starts."""
    cfg.validate()
    best = None
    for s in range(max(1, cfg.n_starts)):
        cfg_s = dataclasses.replace(cfg, init_seed=cfg.init_seed + 7919 * s)
        rng = np.random.default_rng(cfg_s.init_seed)
        a = rng.uniform(0.25, 0.75, coef.m_aps)
        b = 1.0 - a
        chi = np.outer(b, a)
        res = sca_optimize(coef, cfg_s, (a, b, chi), include_qos=False)
        if best is None or res.min_sinr_db > best.min_sinr_db:
            best = res
    return best


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

def random_select(rng: np.random.Generator, m: int) -> ModeVector:
    return ModeVector.from_dl_mask(rng.integers(0, 2, m).astype(float))


def greedy_select(
    coef: PerfCoefficients, scn: NetworkScenario, cfg: SolverConfig
) -> SolveResult:
    """Distance-driven greedy: flip the AP closest to its farthest target to
    UL until QoS holds and the minimum sensing SINR starts to decrease."""
    cfg.validate()
    m = coef.m_aps
    d_ref = ap_target_distances(scn).max(axis=1)
    order = np.argsort(d_ref, kind="stable")
    a = np.ones(m)
    trace = []
    prev_ok_state = None  # (min_sinr, mode) at the last QoS-feasible step
    for step, idx in enumerate(order[: m - 1] if m > 1 else []):
        a[idx] = 0.0
        mode = ModeVector.from_dl_mask(a.copy())
        ok = qos_satisfied(coef, mode, cfg)
        val = min_sensing_sinr(coef, mode)
        trace.append({"flip": int(idx), "qos": ok, "min_sinr": val})
        if ok:
            if prev_ok_state is not None and val < prev_ok_state[0]:
                return _result_for_mode(coef, prev_ok_state[1], trace, "optimal")
            prev_ok_state = (val, mode)
    if prev_ok_state is not None:
        return _result_for_mode(coef, prev_ok_state[1], trace, "optimal")
    return _result_for_mode(coef, ModeVector.from_dl_mask(a), trace, "infeasible")


def exhaustive(
    coef: PerfCoefficients, cfg: SolverConfig, include_qos: bool = True
) -> SolveResult:
    """Enumerate all 2^M modes; argmax of min sensing SINR, lexicographic
    tie-break on the a-vector (smallest first)."""
    cfg.validate()
    m = coef.m_aps
    if m > _EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive enumeration limited to M <= {_EXHAUSTIVE_LIMIT}")
    best = None
    for code in range(2**m):
        bits = [(code >> (m - 1 - j)) & 1 for j in range(m)]
        mode = ModeVector.from_dl_mask(np.array(bits, dtype=float))
        if include_qos and not qos_satisfied(coef, mode, cfg):
            continue
        val = min_sensing_sinr(coef, mode)
        if best is None or val > best[0]:
            best = (val, mode)
    if best is None:
        return _result_for_mode(
            coef, ModeVector.from_dl_mask(np.ones(m)), [], "infeasible"
        )
    return _result_for_mode(coef, best[1], [], "optimal")
