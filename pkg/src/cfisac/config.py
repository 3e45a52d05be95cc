"""Scenario configuration and the strict JSON config loader."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


class ConfigError(ValueError):
    """Raised when a configuration value or file is invalid."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Network geometry and radio parameters.

    Defaults reproduce the reference setup: 8 APs and 4/4/4 DL-UE/UL-UE/targets
    uniformly dropped on a wrapped 300 m square, 10x10 planar arrays, 4.8 GHz,
    50 MHz bandwidth, -174 dBm/Hz noise density, 10 W per-AP budget split
    equally over DL UEs and targets, and a Rician factor of 2.
    """

    area_side_m: float = 300.0
    m_aps: int = 8
    n_x: int = 10
    n_z: int = 10
    k_dl: int = 4
    k_ul: int = 4
    k_t: int = 4
    freq_ghz: float = 4.8
    bandwidth_hz: float = 50e6
    noise_density_dbm_hz: float = -174.0
    tau_c: int = 196
    tau_ul: int | None = None          # defaults to k_dl + k_ul
    tau_dl: int | None = None          # defaults to m_aps
    p_ul_w: float = 0.1
    p_ap_total_w: float = 10.0
    rician_delta: float = 2.0
    rcs_m2: float = 1.0
    min_ap_spacing_m: float = 50.0
    antenna_spacing_over_lambda: float = 0.5
    beam_misalign_rad: float = 0.0
    seed: int = 1
    heights_m: tuple[float, float, float] = (10.0, 1.5, 1.0)

    @property
    def n_antennas(self) -> int:
        return self.n_x * self.n_z

    @property
    def resolved_tau_ul(self) -> int:
        return self.tau_ul if self.tau_ul is not None else self.k_dl + self.k_ul

    @property
    def resolved_tau_dl(self) -> int:
        return self.tau_dl if self.tau_dl is not None else self.m_aps

    @property
    def tau_bar(self) -> float:
        return (self.tau_c - self.resolved_tau_ul - self.resolved_tau_dl) / self.tau_c

    def validate(self) -> "ScenarioConfig":
        """Check all invariants; returns self so calls can be chained."""
        errors = []
        positive = [
            ("area_side_m", self.area_side_m),
            ("m_aps", self.m_aps),
            ("n_x", self.n_x),
            ("n_z", self.n_z),
            ("k_dl", self.k_dl),
            ("k_ul", self.k_ul),
            ("k_t", self.k_t),
            ("freq_ghz", self.freq_ghz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tau_c", self.tau_c),
            ("p_ul_w", self.p_ul_w),
            ("p_ap_total_w", self.p_ap_total_w),
            ("rcs_m2", self.rcs_m2),
        ]
        for name, value in positive:
            if not value > 0:
                errors.append(f"{name} must be strictly positive, got {value!r}")
        if self.rician_delta < 0:
            errors.append(f"rician_delta must be >= 0, got {self.rician_delta!r}")
        if self.min_ap_spacing_m < 0:
            errors.append("min_ap_spacing_m must be >= 0")
        if self.antenna_spacing_over_lambda <= 0:
            errors.append("antenna_spacing_over_lambda must be > 0")
        if self.beam_misalign_rad < 0:
            errors.append("beam_misalign_rad must be >= 0")
        if len(self.heights_m) != 3 or any(h < 0 for h in self.heights_m):
            errors.append("heights_m must be three nonnegative values (AP, UE, target)")
        if self.resolved_tau_ul < self.k_dl + self.k_ul:
            errors.append(
                f"tau_ul={self.resolved_tau_ul} violates pilot orthogonality: "
                f"needs tau_ul >= k_dl + k_ul = {self.k_dl + self.k_ul}"
            )
        if self.resolved_tau_dl < self.m_aps:
            errors.append(
                f"tau_dl={self.resolved_tau_dl} violates pilot orthogonality: "
                f"needs tau_dl >= m_aps = {self.m_aps}"
            )
        if not self.tau_c > self.resolved_tau_ul + self.resolved_tau_dl:
            errors.append(
                f"tau_c={self.tau_c} must exceed tau_ul + tau_dl = "
                f"{self.resolved_tau_ul + self.resolved_tau_dl}"
            )
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["heights_m"] = list(self.heights_m)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        if "heights_m" in kwargs:
            h = kwargs["heights_m"]
            if not isinstance(h, (list, tuple)):
                raise ConfigError("heights_m must be a list of three numbers")
            kwargs["heights_m"] = tuple(float(x) for x in h)
        return cls(**kwargs).validate()


def load_json(text: str) -> dict:
    """Parse a JSON config body; empty text maps to an empty object."""
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return data
