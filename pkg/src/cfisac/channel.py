"""Small-scale fading draws and the linear MMSE channel estimators.

Pilot matrices are never materialized: orthogonal pilots make the projected
observation y = sqrt(tau*p)*channel + noise a sufficient statistic, so the
sampler draws it directly. Complex Gaussian CN(0, 1) means total variance 1
(0.5 per real/imaginary part).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import LargeScaleStats, NetworkScenario

_STREAM_STRIDE = 1 << 64  # Philox counter blocks reserved per realization


@dataclass(eq=False)
class MmseOperators:
    """Per-link estimator matrices plus the long-term quantities they imply."""

    A: np.ndarray            # (M, K, N, N) AP-UE estimator matrices
    B: np.ndarray            # (M, K, N, N) B = E{ghat ghat^H}
    zeta2_inv: np.ndarray    # (M, K) E{||ghat||^2}
    zeta2: np.ndarray        # (M, K) 1 / E{||ghat||^2} (0 where degenerate)
    H_gain: np.ndarray       # (M, M) scalar MMSE gain for the AP-AP channel
    R: np.ndarray            # (M, N, N) sensing covariance sum_t p_s f f^H
    sigma2: float
    tau_p_ul: float          # tau_ul * p_ul pilot energy
    tau_p_dl: float          # tau_dl * p_dl pilot energy
    n_antennas: int


@dataclass(eq=False)
class ChannelRealization:
    """One small-scale draw. Pilot noise is stored as unit-variance CN(0,1)."""

    g: np.ndarray                # (M, K, N)
    h: np.ndarray                # (K_dl, K_ul)
    H: np.ndarray                # (M, M, N, N)
    pilot_noise_ul: np.ndarray   # (M, K, N)
    pilot_noise_dl: np.ndarray   # (M, M, N, N)

    def to_dict(self) -> dict:
        def cx(a):
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        return {
            "g": cx(self.g),
            "h": cx(self.h),
            "H": cx(self.H),
            "pilot_noise_ul": cx(self.pilot_noise_ul),
            "pilot_noise_dl": cx(self.pilot_noise_dl),
        }


def dl_pilot_power_w(scn: NetworkScenario) -> float:
    """APs send DL pilots at their full power budget."""
    return scn.config.p_ap_total_w


def build_mmse_operators(stats: LargeScaleStats, scn: NetworkScenario) -> MmseOperators:
    cfg = scn.config
    n = stats.n_antennas
    sigma2 = scn.sigma2_w
    tau_p_ul = cfg.resolved_tau_ul * cfg.p_ul_w
    tau_p_dl = cfg.resolved_tau_dl * dl_pilot_power_w(scn)

    gbar = stats.los_ap_ue                      # (M, K, N)
    v, u = stats.v, stats.u
    den1 = tau_p_ul * u + sigma2                # (M, K)
    den2 = den1 + n * tau_p_ul * v

    outer = gbar[..., :, None] * gbar[..., None, :].conj()   # (M, K, N, N)
    eye = np.eye(n)
    coef_los = np.sqrt(tau_p_ul) * sigma2 * v / (den1 * den2)
    coef_iso = np.sqrt(tau_p_ul) * u / den1
    A = coef_los[..., None, None] * outer + coef_iso[..., None, None] * eye

    # B = A (tau_p*v gbar gbar^H + (tau_p*u + sigma2) I) A^H, expanded on the
    # rank-1 + identity structure.
    ag = np.einsum("mkab,mkb->mka", A, gbar)
    B = tau_p_ul * v[..., None, None] * (ag[..., :, None] * ag[..., None, :].conj())
    B += den1[..., None, None] * np.einsum("mkab,mkcb->mkac", A, A.conj())

    ag_norm2 = np.einsum("mka,mka->mk", ag, ag.conj()).real
    a_fro2 = np.einsum("mkab,mkab->mk", A, A.conj()).real
    zeta2_inv = tau_p_ul * (v * ag_norm2 + u * a_fro2) + sigma2 * a_fro2
    with np.errstate(divide="ignore"):
        zeta2 = np.where(zeta2_inv > 0.0, 1.0 / np.where(zeta2_inv > 0, zeta2_inv, 1.0), 0.0)

    H_gain = np.sqrt(tau_p_dl) * stats.gamma / (tau_p_dl * stats.gamma + sigma2)

    f = stats.sens_beams                        # (M, K_t, N)
    R = np.einsum("mt,mta,mtb->mab", scn.p_s_alloc, f, f.conj())

    return MmseOperators(
        A=A,
        B=B,
        zeta2_inv=zeta2_inv,
        zeta2=zeta2,
        H_gain=H_gain,
        R=R,
        sigma2=sigma2,
        tau_p_ul=tau_p_ul,
        tau_p_dl=tau_p_dl,
        n_antennas=n,
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def realization_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based substream: realization `index` owns a disjoint block."""
    return np.random.Generator(np.random.Philox(key=seed).advance(index * _STREAM_STRIDE))


def draw_complex(rng: np.random.Generator, count: int) -> np.ndarray:
    """CN(0, 1) draws as a flat complex vector."""
    z = rng.standard_normal(2 * count)
    return z.view(np.complex128) * np.sqrt(0.5)


def realization_sizes(m: int, k: int, k_dl: int, k_ul: int, n: int) -> list[int]:
    """Complex-sample counts per field, in the fixed draw order."""
    return [m * k * n, m * k * n, k_dl * k_ul, m * m * n * n, m * m * n * n]


def sample_realization(
    stats: LargeScaleStats,
    scn: NetworkScenario,
    seed: int,
    index: int = 0,
) -> ChannelRealization:
    """Draw one i.i.d. small-scale realization from substream `index`."""
    cfg = scn.config
    m, k_dl, k_ul, n = cfg.m_aps, cfg.k_dl, cfg.k_ul, cfg.n_antennas
    k = k_dl + k_ul
    rng = realization_rng(seed, index)
    sizes = realization_sizes(m, k, k_dl, k_ul, n)
    flat = draw_complex(rng, sum(sizes))
    parts = np.split(flat, np.cumsum(sizes)[:-1])

    g_tilde = parts[0].reshape(m, k, n)
    noise_ul = parts[1].reshape(m, k, n)
    h_tilde = parts[2].reshape(k_dl, k_ul)
    h_big = parts[3].reshape(m, m, n, n)
    noise_dl = parts[4].reshape(m, m, n, n)

    g = (
        np.sqrt(stats.v)[..., None] * stats.los_ap_ue
        + np.sqrt(stats.u)[..., None] * g_tilde
    )
    h = np.sqrt(stats.alpha) * h_tilde
    H = np.sqrt(stats.gamma)[..., None, None] * h_big
    return ChannelRealization(
        g=g, h=h, H=H, pilot_noise_ul=noise_ul, pilot_noise_dl=noise_dl
    )


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def estimate_ap_ue(real: ChannelRealization, ops: MmseOperators) -> np.ndarray:
    """MMSE estimates ghat for every AP-UE pair, shape (M, K, N)."""
    y = np.sqrt(ops.tau_p_ul) * real.g + np.sqrt(ops.sigma2) * real.pilot_noise_ul
    return np.einsum("mkab,mkb->mka", ops.A, y)


def estimate_ap_ap(real: ChannelRealization, ops: MmseOperators) -> np.ndarray:
    """MMSE estimates Hhat for every AP-AP pair, shape (M, M, N, N)."""
    y = np.sqrt(ops.tau_p_dl) * real.H + np.sqrt(ops.sigma2) * real.pilot_noise_dl
    return ops.H_gain[..., None, None] * y


def mrt_beamformer(ghat: np.ndarray) -> np.ndarray:
    """Unit-norm MRT beams ghat / ||ghat|| along the last axis."""
    norms = np.linalg.norm(ghat, axis=-1, keepdims=True)
    return ghat / norms


def nmse_ap_ue(stats: LargeScaleStats, scn: NetworkScenario, m: int, k: int) -> float:
    """Closed-form NMSE of the AP-UE channel estimate."""
    cfg = scn.config
    tp = cfg.resolved_tau_ul * cfg.p_ul_w
    s2 = scn.sigma2_w
    n = stats.n_antennas
    v = stats.v[m, k]
    u = stats.u[m, k]
    num = tp * s2 * u**2 + s2**2 * v + s2**2 * u + n * tp * s2 * v * u
    den = u * (tp * u + s2) * (tp * u + s2 + n * tp * v)
    return float(num / den)


def nmse_ap_ap(stats: LargeScaleStats, scn: NetworkScenario, m: int, l: int) -> float:
    """Closed-form NMSE of the AP-AP channel estimate."""
    tp = scn.config.resolved_tau_dl * dl_pilot_power_w(scn)
    s2 = scn.sigma2_w
    return float(s2 / (tp * stats.gamma[m, l] + s2))


def hhat_entry_variance(stats: LargeScaleStats, scn: NetworkScenario, m: int, l: int) -> float:
    """Per-entry variance of Hhat."""
    tp = scn.config.resolved_tau_dl * dl_pilot_power_w(scn)
    s2 = scn.sigma2_w
    g = stats.gamma[m, l]
    return float(tp * g**2 / (tp * g + s2))


def mse_matrix_ap_ue(stats: LargeScaleStats, scn: NetworkScenario, m: int, k: int) -> np.ndarray:
    """Closed-form MSE matrix of the AP-UE estimate."""
    cfg = scn.config
    tp = cfg.resolved_tau_ul * cfg.p_ul_w
    s2 = scn.sigma2_w
    n = stats.n_antennas
    v = stats.v[m, k]
    u = stats.u[m, k]
    gbar = stats.los_ap_ue[m, k]
    den1 = tp * u + s2
    den2 = den1 + n * tp * v
    return (s2**2 * v / (den1 * den2)) * np.outer(gbar, gbar.conj()) + (
        s2 * u / den1
    ) * np.eye(n)


def woodbury_check(stats: LargeScaleStats, scn: NetworkScenario, m: int, k: int) -> float:
    """|| R_yy @ R_yy^-1(closed form) - I ||_F for the pilot covariance."""
    cfg = scn.config
    tp = cfg.resolved_tau_ul * cfg.p_ul_w
    s2 = scn.sigma2_w
    n = stats.n_antennas
    v = stats.v[m, k]
    u = stats.u[m, k]
    gbar = stats.los_ap_ue[m, k]
    outer = np.outer(gbar, gbar.conj())
    r_yy = tp * v * outer + (tp * u + s2) * np.eye(n)
    c0 = 1.0 / (tp * u + s2)
    corr = tp * v * c0**2 / (1.0 + n * tp * v * c0)
    r_inv = c0 * np.eye(n) - corr * outer
    return float(np.linalg.norm(r_yy @ r_inv - np.eye(n)))
