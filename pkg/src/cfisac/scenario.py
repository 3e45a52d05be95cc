"""Scenario construction: geometry, pathloss and long-term channel statistics.

All distances use the wrap-around (torus) metric on the deployment square so
that a node near an edge sees the same environment as one in the middle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig

MIN_DISTANCE_M = 1.0  # clamp to avoid singular pathloss for co-located nodes
_AP_PLACEMENT_TRIES = 10_000


class ScenarioError(RuntimeError):
    """Raised when a scenario cannot be constructed (e.g. AP packing fails)."""


# ---------------------------------------------------------------------------
# Pathloss
# ---------------------------------------------------------------------------

def pathloss_comm_db(d_m, freq_ghz: float):
    """Communication pathloss in dB at distance d_m (meters), f in GHz."""
    d = np.maximum(np.asarray(d_m, dtype=float), MIN_DISTANCE_M)
    return 32.4 + 20.0 * np.log10(freq_ghz) + 20.0 * np.log10(d)


def pathloss_radar_db(d1_m, d2_m, rcs_m2: float, freq_ghz: float):
    """Bi-static radar pathloss in dB for the two legs d1, d2 (meters)."""
    d1 = np.maximum(np.asarray(d1_m, dtype=float), MIN_DISTANCE_M)
    d2 = np.maximum(np.asarray(d2_m, dtype=float), MIN_DISTANCE_M)
    return (
        103.4
        + 20.0 * np.log10(freq_ghz)
        + 20.0 * np.log10(d1 * d2)
        - 10.0 * np.log10(rcs_m2)
    )


def db_to_linear(db):
    return 10.0 ** (-np.asarray(db, dtype=float) / 10.0)


# ---------------------------------------------------------------------------
# Torus geometry
# ---------------------------------------------------------------------------

def wrap_deltas(p: np.ndarray, q: np.ndarray, side: float):
    """Minimum-image (x, y) displacement from each row of p to each row of q.

    Returns (dx, dy) of shape (len(p), len(q)). Equivalent to minimizing over
    the nine shifted copies of the square.
    """
    dx = q[None, :, 0] - p[:, None, 0]
    dy = q[None, :, 1] - p[:, None, 1]
    dx = (dx + side / 2.0) % side - side / 2.0
    dy = (dy + side / 2.0) % side - side / 2.0
    return dx, dy


def wrap_distance(p: np.ndarray, q: np.ndarray, side: float):
    dx, dy = wrap_deltas(p, q, side)
    return np.hypot(dx, dy)


def _geometry(p: np.ndarray, hp: float, q: np.ndarray, hq: float, side: float):
    """3-D wrapped distance plus azimuth/elevation seen from p toward q."""
    dx, dy = wrap_deltas(p, q, side)
    horiz = np.hypot(dx, dy)
    dz = hq - hp
    dist = np.sqrt(horiz**2 + dz**2)
    azimuth = np.arctan2(dy, dx)
    elevation = np.arctan2(dz, horiz)
    return dist, azimuth, elevation


# ---------------------------------------------------------------------------
# Uniform planar array steering
# ---------------------------------------------------------------------------

def steering_vector(theta, phi, n_x: int, n_z: int, spacing_over_lambda: float):
    """UPA steering vector a(theta, phi); theta azimuth, phi elevation.

    Antennas sit on an x-z grid; entry (ix, iz) carries phase
    2*pi*(d/lambda)*(ix*cos(theta)*cos(phi) + iz*sin(phi)). Output shape is
    broadcast(theta, phi).shape + (n_x*n_z,).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    base = np.broadcast(theta, phi).shape
    ix = np.arange(n_x)
    iz = np.arange(n_z)
    px = ix[:, None] * (np.cos(theta) * np.cos(phi))[..., None, None]
    pz = iz[None, :] * np.sin(phi)[..., None, None]
    phase = 2.0 * np.pi * spacing_over_lambda * (px + pz)
    return np.exp(1j * phase).reshape(base + (n_x * n_z,))


# ---------------------------------------------------------------------------
# Scenario and statistics containers
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class NetworkScenario:
    """Immutable snapshot of one network drop."""

    config: ScenarioConfig
    ap_positions: np.ndarray        # (M, 2)
    ue_dl_positions: np.ndarray     # (K_dl, 2)
    ue_ul_positions: np.ndarray     # (K_ul, 2)
    target_positions: np.ndarray    # (K_t, 2)
    sigma2_w: float
    p_dl_alloc: np.ndarray          # (M, K_dl)
    p_s_alloc: np.ndarray           # (M, K_t)
    beam_offsets_rad: tuple[float, float] = (0.0, 0.0)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        for arr in (
            self.ap_positions,
            self.ue_dl_positions,
            self.ue_ul_positions,
            self.target_positions,
            self.p_dl_alloc,
            self.p_s_alloc,
        ):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        h.update(np.array(self.beam_offsets_rad, dtype=float).tobytes())
        h.update(np.float64(self.sigma2_w).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "ap_positions": self.ap_positions.tolist(),
            "ue_dl_positions": self.ue_dl_positions.tolist(),
            "ue_ul_positions": self.ue_ul_positions.tolist(),
            "target_positions": self.target_positions.tolist(),
            "sigma2_w": float(self.sigma2_w),
            "p_dl_alloc": self.p_dl_alloc.tolist(),
            "p_s_alloc": self.p_s_alloc.tolist(),
            "beam_offsets_rad": list(self.beam_offsets_rad),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkScenario":
        return cls(
            config=ScenarioConfig.from_dict(data["config"]),
            ap_positions=np.asarray(data["ap_positions"], dtype=float),
            ue_dl_positions=np.asarray(data["ue_dl_positions"], dtype=float),
            ue_ul_positions=np.asarray(data["ue_ul_positions"], dtype=float),
            target_positions=np.asarray(data["target_positions"], dtype=float),
            sigma2_w=float(data["sigma2_w"]),
            p_dl_alloc=np.asarray(data["p_dl_alloc"], dtype=float),
            p_s_alloc=np.asarray(data["p_s_alloc"], dtype=float),
            beam_offsets_rad=tuple(data.get("beam_offsets_rad", (0.0, 0.0))),
        )


@dataclass(eq=False)
class LargeScaleStats:
    """Long-term coefficients shared by the closed forms and the oracle.

    UE index convention everywhere: the K = k_dl + k_ul AP-UE axes list the
    DL UEs first (0..k_dl-1) then the UL UEs (k_dl..K-1).
    """

    beta: np.ndarray            # (M, K) linear large-scale gain
    delta: np.ndarray           # (M, K) Rician factor
    v: np.ndarray               # (M, K) LoS power beta*delta/(delta+1)
    u: np.ndarray               # (M, K) NLoS power beta/(delta+1)
    alpha: np.ndarray           # (K_dl, K_ul) DL-UE <-> UL-UE gains
    gamma: np.ndarray           # (M, M) AP <-> AP gains
    rho: np.ndarray             # (M, K_t, M) radar gain, [rx m, target t, tx l]
    los_ap_ue: np.ndarray       # (M, K, N) LoS steering vectors
    sens_angles: tuple[np.ndarray, np.ndarray]   # true (theta, phi), each (M, K_t)
    steer_ap_target: np.ndarray  # (M, K_t, N) true-angle steering
    sens_beams: np.ndarray       # (M, K_t, N) transmit beams at perturbed angles
    recv_filters: np.ndarray     # (M, K_t, N) receive filters at perturbed angles
    n_antennas: int

    def target_response(self, m: int, t: int, l: int) -> np.ndarray:
        """Rank-1 target response matrix between DL AP l and UL AP m via target t."""
        a_rx = self.steer_ap_target[m, t]
        a_tx = self.steer_ap_target[l, t]
        return np.sqrt(self.rho[m, t, l]) * np.outer(a_rx, a_tx.conj())


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def noise_power_w(cfg: ScenarioConfig) -> float:
    dbm = cfg.noise_density_dbm_hz + 10.0 * np.log10(cfg.bandwidth_hz)
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def build_scenario(cfg: ScenarioConfig) -> NetworkScenario:
    """Draw a reproducible network drop for the given configuration."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    side = cfg.area_side_m

    ap = None
    for _ in range(_AP_PLACEMENT_TRIES):
        candidate = rng.uniform(0.0, side, size=(cfg.m_aps, 2))
        d = wrap_distance(candidate, candidate, side)
        np.fill_diagonal(d, np.inf)
        if cfg.m_aps == 1 or d.min() >= cfg.min_ap_spacing_m:
            ap = candidate
            break
    if ap is None:
        raise ScenarioError(
            f"could not place {cfg.m_aps} APs with spacing >= "
            f"{cfg.min_ap_spacing_m} m in a {side} m square "
            f"after {_AP_PLACEMENT_TRIES} attempts"
        )

    ue_dl = rng.uniform(0.0, side, size=(cfg.k_dl, 2))
    ue_ul = rng.uniform(0.0, side, size=(cfg.k_ul, 2))
    targets = rng.uniform(0.0, side, size=(cfg.k_t, 2))
    if cfg.beam_misalign_rad > 0.0:
        d_theta = float(rng.uniform(-cfg.beam_misalign_rad, cfg.beam_misalign_rad))
        d_phi = float(rng.uniform(-cfg.beam_misalign_rad, cfg.beam_misalign_rad))
    else:
        d_theta = d_phi = 0.0

    per_stream = cfg.p_ap_total_w / (cfg.k_dl + cfg.k_t)
    return NetworkScenario(
        config=cfg,
        ap_positions=ap,
        ue_dl_positions=ue_dl,
        ue_ul_positions=ue_ul,
        target_positions=targets,
        sigma2_w=noise_power_w(cfg),
        p_dl_alloc=np.full((cfg.m_aps, cfg.k_dl), per_stream),
        p_s_alloc=np.full((cfg.m_aps, cfg.k_t), per_stream),
        beam_offsets_rad=(d_theta, d_phi),
    )


def compute_stats(scn: NetworkScenario) -> LargeScaleStats:
    """Derive every long-term coefficient from the scenario geometry."""
    cfg = scn.config
    side = cfg.area_side_m
    h_ap, h_ue, h_t = cfg.heights_m
    f = cfg.freq_ghz

    ue_pos = np.vstack([scn.ue_dl_positions, scn.ue_ul_positions])

    d_ue, th_ue, ph_ue = _geometry(scn.ap_positions, h_ap, ue_pos, h_ue, side)
    beta = db_to_linear(pathloss_comm_db(d_ue, f))

    d_uu = wrap_distance(scn.ue_dl_positions, scn.ue_ul_positions, side)
    alpha = db_to_linear(pathloss_comm_db(d_uu, f))

    d_aa = wrap_distance(scn.ap_positions, scn.ap_positions, side)
    gamma = db_to_linear(pathloss_comm_db(d_aa, f))

    d_at, th_t, ph_t = _geometry(scn.ap_positions, h_ap, scn.target_positions, h_t, side)
    # rho[m, t, l]: DL leg is AP l -> target t, UL leg is target t -> AP m.
    rho = db_to_linear(
        pathloss_radar_db(d_at.T[None, :, :], d_at[:, :, None], cfg.rcs_m2, f)
    )

    delta = np.full_like(beta, cfg.rician_delta)
    u = beta / (delta + 1.0)
    v = beta - u  # keeps u + v == beta exact in floating point

    sp = cfg.antenna_spacing_over_lambda
    los = steering_vector(th_ue, ph_ue, cfg.n_x, cfg.n_z, sp)
    steer_t = steering_vector(th_t, ph_t, cfg.n_x, cfg.n_z, sp)
    d_theta, d_phi = scn.beam_offsets_rad
    perturbed = steering_vector(th_t + d_theta, ph_t + d_phi, cfg.n_x, cfg.n_z, sp)

    # Transmit sensing beams are unit-norm so each stream radiates exactly
    # p_s and the per-AP power budget holds; receive filters keep the raw
    # steering vector (||u||^2 = N).
    return LargeScaleStats(
        beta=beta,
        delta=delta,
        v=v,
        u=u,
        alpha=alpha,
        gamma=gamma,
        rho=rho,
        los_ap_ue=los,
        sens_angles=(th_t, ph_t),
        steer_ap_target=steer_t,
        sens_beams=perturbed / np.sqrt(cfg.n_antennas),
        recv_filters=perturbed,
        n_antennas=cfg.n_antennas,
    )


def ap_target_distances(scn: NetworkScenario) -> np.ndarray:
    """3-D wrapped AP-to-target distances, shape (M, K_t)."""
    h_ap, _, h_t = scn.config.heights_m
    d, _, _ = _geometry(
        scn.ap_positions, h_ap, scn.target_positions, h_t, scn.config.area_side_m
    )
    return d
