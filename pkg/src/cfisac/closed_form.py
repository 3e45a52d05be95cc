"""Closed-form ergodic rates and sensing SINR from long-term statistics.

Every coefficient is a pure function of LargeScaleStats; no small-scale draw
enters anywhere. Index layout:
  c_dl1/c_dl2: (M, K_dl), c_dl3: (K_dl,)
  c_ul1/c_ul2: (M, K_ul), c_ul3: (M, M, K_ul) indexed [rx m, tx l, ue i]
  c_s1/c_s2:   (M, K_t, M) indexed [rx m, target p, tx l], c_s3: (M, K_t)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import MmseOperators, build_mmse_operators
from .scenario import LargeScaleStats, NetworkScenario


@dataclass(eq=False)
class ModeVector:
    """AP mode indicators; a = DL, b = UL. Fractional entries are allowed
    inside the relaxation, binary ones describe an operating point."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.shape != self.b.shape:
            raise ValueError("a and b must have the same length")
        if not np.allclose(self.a + self.b, 1.0, atol=1e-9):
            raise ValueError("mode vector must satisfy a + b = 1 per AP")

    @classmethod
    def from_dl_mask(cls, mask) -> "ModeVector":
        a = np.asarray(mask, dtype=float)
        return cls(a=a, b=1.0 - a)

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.a == 0.0) | (self.a == 1.0)))


@dataclass(eq=False)
class PerfCoefficients:
    c_dl1: np.ndarray
    c_dl2: np.ndarray
    c_dl3: np.ndarray
    c_ul1: np.ndarray
    c_ul2: np.ndarray
    c_ul3: np.ndarray
    c_s1: np.ndarray
    c_s2: np.ndarray
    c_s3: np.ndarray
    tau_bar: float
    n_antennas: int

    @property
    def m_aps(self) -> int:
        return self.c_dl1.shape[0]

    @property
    def k_t(self) -> int:
        return self.c_s1.shape[1]

    def export_csv(self, path) -> None:
        """One row per index tuple, for regression snapshots."""
        blocks = [
            ("c_dl1", self.c_dl1),
            ("c_dl2", self.c_dl2),
            ("c_dl3", self.c_dl3),
            ("c_ul1", self.c_ul1),
            ("c_ul2", self.c_ul2),
            ("c_ul3", self.c_ul3),
            ("c_s1", self.c_s1),
            ("c_s2", self.c_s2),
            ("c_s3", self.c_s3),
        ]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["block", "i0", "i1", "i2", "value"])
            for name, arr in blocks:
                arr = np.atleast_1d(arr)
                for idx in np.ndindex(arr.shape):
                    padded = list(idx) + [""] * (3 - len(idx))
                    writer.writerow([name, *padded, repr(float(arr[idx]))])


# ---------------------------------------------------------------------------
# Shared building blocks
# ---------------------------------------------------------------------------

def _building_blocks(stats: LargeScaleStats, scn: NetworkScenario, ops: MmseOperators | None = None):
    cfg = scn.config
    if ops is None:
        ops = build_mmse_operators(stats, scn)
    n = stats.n_antennas
    sigma2 = ops.sigma2
    tau_p = ops.tau_p_ul
    gbar = stats.los_ap_ue
    v, u = stats.v, stats.u

    ag = np.einsum("mkab,mkb->mka", ops.A, gbar)                  # A gbar
    q_aa = np.einsum("mka,mka->mk", gbar.conj(), ag).real          # gbar^H A gbar
    ag2 = np.einsum("mka,mka->mk", ag, ag.conj()).real             # ||A gbar||^2
    tr_a = np.einsum("mkaa->mk", ops.A).real
    a_fro2 = np.einsum("mkab,mkab->mk", ops.A, ops.A.conj()).real  # Tr(A A^H) = Tr(A^2)

    e1 = v * q_aa + u * tr_a                                       # E{g^H ghat}/sqrt(tau_p)
    desired = np.sqrt(tau_p) * e1
    second = tau_p * (
        v**2 * q_aa**2
        + 2.0 * u * v * ag2
        + 2.0 * u * v * q_aa * tr_a
        + u**2 * (a_fro2 + tr_a**2)
    ) + sigma2 * (v * ag2 + u * a_fro2)                            # E{|g^H ghat|^2}

    tr_b = np.einsum("mkaa->mk", ops.B).real
    q_b = np.einsum("mxa,myab,mxb->mxy", gbar.conj(), ops.B, gbar).real  # gbar_x^H B_y gbar_x
    q_r = np.einsum("mka,mab,mkb->mk", gbar.conj(), ops.R, gbar).real
    tr_r = np.einsum("maa->m", ops.R).real

    e_var = sigma2 * stats.gamma / (ops.tau_p_dl * stats.gamma + sigma2)  # var of e^AP entries

    # Common sandwich S_l = sum_k zeta^2 p_dl B_{l,k} + R_l and its projections
    # onto the true target directions.
    k_dl = cfg.k_dl
    zeta2_dl = ops.zeta2[:, :k_dl]
    s_mat = np.einsum(
        "lk,lkab->lab", zeta2_dl * scn.p_dl_alloc, ops.B[:, :k_dl]
    ) + ops.R
    a_t = stats.steer_ap_target                                    # (M, K_t, N)
    q_s = np.einsum("lta,lab,ltb->lt", a_t.conj(), s_mat, a_t).real
    tr_term = (
        np.einsum("lk,lk->l", zeta2_dl * scn.p_dl_alloc, tr_b[:, :k_dl]) + tr_r
    )

    rx_gain = np.abs(np.einsum("mpa,mta->mpt", stats.recv_filters.conj(), a_t)) ** 2

    # NMSE of the AP-UE estimates, vectorized over (m, k).
    den1 = tau_p * u + sigma2
    den2 = den1 + n * tau_p * v
    nmse = (tau_p * sigma2 * u**2 + sigma2**2 * v + sigma2**2 * u + n * tau_p * sigma2 * v * u) / (
        u * den1 * den2
    )

    return {
        "ops": ops,
        "cfg": cfg,
        "sigma2": sigma2,
        "tau_p": tau_p,
        "n": n,
        "ag": ag,
        "desired": desired,
        "second": second,
        "e1": e1,
        "tr_b": tr_b,
        "q_b": q_b,
        "q_r": q_r,
        "tr_r": tr_r,
        "e_var": e_var,
        "q_s": q_s,
        "tr_term": tr_term,
        "rx_gain": rx_gain,
        "nmse": nmse,
    }


def compute_coefficients(stats: LargeScaleStats, scn: NetworkScenario) -> PerfCoefficients:
    """Evaluate every large-scale performance constant."""
    bb = _building_blocks(stats, scn)
    cfg, ops = bb["cfg"], bb["ops"]
    m_aps, k_dl, k_ul, k_t = cfg.m_aps, cfg.k_dl, cfg.k_ul, cfg.k_t
    n = bb["n"]
    sigma2, tau_p = bb["sigma2"], bb["tau_p"]
    v, u = stats.v, stats.u
    p_dl = scn.p_dl_alloc
    p_ul = cfg.p_ul_w
    zeta2 = ops.zeta2
    zeta = np.sqrt(zeta2)

    desired, second = bb["desired"], bb["second"]
    var_term = second - desired**2                       # beamforming-gain uncertainty

    # Downlink blocks (UE axis: DL UEs are columns 0..k_dl-1).
    c_dl1 = zeta[:, :k_dl] * np.sqrt(p_dl) * desired[:, :k_dl]
    mui_dl = np.zeros((m_aps, k_dl))
    for k in range(k_dl):
        for i in range(k_dl):
            if i == k:
                continue
            mui_dl[:, k] += (
                zeta2[:, i]
                * p_dl[:, i]
                * (v[:, k] * bb["q_b"][:, k, i] + u[:, k] * bb["tr_b"][:, i])
            )
    sens_leak = v * bb["q_r"] + u * bb["tr_r"][:, None]
    c_dl2 = zeta2[:, :k_dl] * p_dl * var_term[:, :k_dl] + mui_dl + sens_leak[:, :k_dl]
    c_dl3 = p_ul * stats.alpha.sum(axis=1) + sigma2

    # Uplink blocks (UL UE i maps to channel column k_dl + i).
    ul = slice(k_dl, k_dl + k_ul)
    c_ul1 = np.sqrt(p_ul) * desired[:, ul]
    mui_ul = np.zeros((m_aps, k_ul))
    for i in range(k_ul):
        ii = k_dl + i
        for j in range(k_ul):
            if j == i:
                continue
            jj = k_dl + j
            mui_ul[:, i] += p_ul * (
                v[:, jj] * bb["q_b"][:, jj, ii] + u[:, jj] * bb["tr_b"][:, ii]
            )
    c_ul2 = sigma2 * ops.zeta2_inv[:, ul] + p_ul * var_term[:, ul] + mui_ul

    # Echo projections reused by c_ul3: |a_{m,t}^H (A gbar)_{m,i}|^2 and
    # ||A_{m,i} a_{m,t}||^2.
    a_t = stats.steer_ap_target
    proj_y = np.abs(np.einsum("mta,mia->mti", a_t.conj(), bb["ag"][:, ul])) ** 2
    a_at = np.einsum("miab,mtb->mtia", ops.A[:, ul], a_t)
    w2 = np.einsum("mtia,mtia->mti", a_at, a_at.conj()).real

    c_ul3 = np.zeros((m_aps, m_aps, k_ul))
    for i in range(k_ul):
        ii = k_dl + i
        echo = np.einsum(
            "mtl,lt,mt->ml",
            stats.rho,
            bb["q_s"],
            tau_p * v[:, ii, None] * proj_y[:, :, i]
            + (tau_p * u[:, ii, None] + sigma2) * w2[:, :, i],
        )
        resid = bb["e_var"] * ops.zeta2_inv[:, ii, None] * bb["tr_term"][None, :]
        c_ul3[:, :, i] = resid + echo

    # Sensing blocks.
    c_s1 = np.einsum("mpl,mp,lp->mpl", stats.rho, np.einsum("mpp->mp", bb["rx_gain"]), bb["q_s"])
    cross = np.einsum("mtl,mpt,lt->mpl", stats.rho, bb["rx_gain"], bb["q_s"])
    c_s2 = cross - c_s1 + n * bb["e_var"][:, None, :] * bb["tr_term"][None, None, :]
    ue_resid = p_ul * n * (u[:, ul] * bb["nmse"][:, ul]).sum(axis=1) + n * sigma2
    c_s3 = np.broadcast_to(ue_resid[:, None], (m_aps, k_t)).copy()

    return PerfCoefficients(
        c_dl1=c_dl1,
        c_dl2=c_dl2,
        c_dl3=c_dl3,
        c_ul1=c_ul1,
        c_ul2=c_ul2,
        c_ul3=c_ul3,
        c_s1=c_s1,
        c_s2=c_s2,
        c_s3=c_s3,
        tau_bar=cfg.tau_bar,
        n_antennas=n,
    )


def closed_form_moments(stats: LargeScaleStats, scn: NetworkScenario) -> dict:
    """Closed-form values of the individual expectation terms, for auditing."""
    bb = _building_blocks(stats, scn)
    cfg, ops = bb["cfg"], bb["ops"]
    k_dl, k_ul = cfg.k_dl, cfg.k_ul
    ul = slice(k_dl, k_dl + k_ul)
    n = bb["n"]
    p_ul = cfg.p_ul_w

    cross = stats.v[:, :, None] * bb["q_b"] + stats.u[:, :, None] * bb["tr_b"][:, None, :]
    resid_comm = (
        bb["e_var"][:, :, None, None]
        * ops.zeta2_inv[:, None, ul.start : ul.stop, None]
        * bb["tr_b"][None, :, None, :k_dl]
    )
    resid_sens = (
        bb["e_var"][:, :, None] * ops.zeta2_inv[:, None, ul] * bb["tr_r"][None, :, None]
    )
    return {
        "norm2": ops.zeta2_inv,                       # B1: E{||ghat||^2}
        "desired": bb["desired"],                     # B2: E{g^H ghat}
        "second": bb["second"],                       # BU: E{|g^H ghat|^2}
        "cross": cross,                               # B3: E{|g_x^H ghat_y|^2}
        "sens_leak": stats.v * bb["q_r"] + stats.u * bb["tr_r"][:, None],   # B4
        "b_mat": ops.B,                               # U1: E{ghat ghat^H}
        "resid_comm": resid_comm,                     # U2 per (m, l, i, k)
        "resid_sens": resid_sens,                     # U3 residual part per (m, l, i)
        "resid_ue_sens": p_ul * n * (stats.u[:, ul] * bb["nmse"][:, ul]).sum(axis=1),  # D1 per m
        "resid_ap_sens": n * bb["e_var"] * bb["tr_term"][None, :],          # D2 per (m, l)
        "nmse": bb["nmse"],
    }


# ---------------------------------------------------------------------------
# Rate / SINR assembly
# ---------------------------------------------------------------------------

def dl_rate(coef: PerfCoefficients, mode: ModeVector, k: int) -> float:
    a = mode.a
    num = float(coef.c_dl1[:, k] @ a) ** 2
    den = float(coef.c_dl2[:, k] @ a**2) + float(coef.c_dl3[k])
    return coef.tau_bar * np.log2(1.0 + num / den)


def ul_rate(coef: PerfCoefficients, mode: ModeVector, i: int) -> float:
    a, b = mode.a, mode.b
    num = float(coef.c_ul1[:, i] @ b) ** 2
    den = float(coef.c_ul2[:, i] @ b**2) + float(b**2 @ coef.c_ul3[:, :, i] @ a**2)
    if den == 0.0:
        return 0.0  # no UL AP listens
    return coef.tau_bar * np.log2(1.0 + num / den)


def dl_rates(coef: PerfCoefficients, mode: ModeVector) -> np.ndarray:
    return np.array([dl_rate(coef, mode, k) for k in range(coef.c_dl1.shape[1])])


def ul_rates(coef: PerfCoefficients, mode: ModeVector) -> np.ndarray:
    return np.array([ul_rate(coef, mode, i) for i in range(coef.c_ul1.shape[1])])


def sensing_sinr(coef: PerfCoefficients, mode: ModeVector, p: int) -> float:
    a2 = mode.a**2
    b2 = mode.b**2
    num = float(b2 @ coef.c_s1[:, p, :] @ a2)
    if num == 0.0:
        return 0.0
    den = float(b2 @ coef.c_s2[:, p, :] @ a2) + float(coef.c_s3[:, p] @ b2)
    return num / den


def sensing_sinrs(coef: PerfCoefficients, mode: ModeVector) -> np.ndarray:
    return np.array([sensing_sinr(coef, mode, p) for p in range(coef.k_t)])


def min_sensing_sinr(coef: PerfCoefficients, mode: ModeVector) -> float:
    return float(sensing_sinrs(coef, mode).min())
