"""Configuration-driven experiment runner producing plot-ready CSV files.

Every run writes a manifest (full resolved spec + seed + versions) next to
its CSVs; re-running any experiment from its manifest reproduces the CSVs
byte for byte. CSV columns are
    x, strategy, metric, value, stderr, scenario_seed, status
with floats formatted by repr() for exact round-trips.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .channel import woodbury_check
from .closed_form import (
    ModeVector,
    compute_coefficients,
    dl_rates,
    min_sensing_sinr,
    sensing_sinrs,
    ul_rates,
)
from .config import ConfigError, ScenarioConfig, load_json
from .mode_select import (
    SolverConfig,
    greedy_select,
    random_select,
    solve_mode_selection,
    upper_bound,
)
from .monte_carlo import (
    McConfig,
    audit_terms,
    empirical_rates_sinr,
    lemma_checks,
    run_oracle,
    write_audit_csv,
)
from .scenario import build_scenario, compute_stats

KINDS = (
    "validate-closed-form",
    "convergence",
    "sweep-antennas",
    "sweep-aps",
    "cdf",
    "sweep-qos",
    "single-solve",
    "lemmas",
)

_DEFAULT_SWEEPS = {
    "validate-closed-form": ("n_antennas", [8, 16, 32]),
    "sweep-antennas": ("n_antennas", [8, 16, 32]),
    "sweep-aps": ("m_aps", [4, 6, 8]),
    "sweep-qos": ("kappa", [0.5, 1.0, 2.0, 3.0, 4.0]),
}

_DEFAULT_N_SCENARIOS = {
    "validate-closed-form": 3,
    "cdf": 20,
    "sweep-antennas": 3,
    "sweep-aps": 3,
}

ENV_OUT_DIR = "CFISAC_OUT"


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    scenario: ScenarioConfig
    solver: SolverConfig
    mc: McConfig
    sweep: tuple[str, tuple] | None
    n_scenarios: int
    output_dir: str | None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "scenario": self.scenario.to_dict(),
            "solver": dataclasses.asdict(self.solver),
            "mc": dataclasses.asdict(self.mc),
            "sweep": None if self.sweep is None else {"name": self.sweep[0], "values": list(self.sweep[1])},
            "n_scenarios": self.n_scenarios,
            "output_dir": self.output_dir,
        }


def grid_for_antennas(n: int) -> tuple[int, int]:
    """Near-square (n_x, n_z) factorization of a requested antenna count."""
    if n < 1:
        raise ConfigError("n_antennas must be positive")
    n_z = int(np.sqrt(n))
    while n_z > 1 and n % n_z:
        n_z -= 1
    return n // n_z, n_z


def _from_dict_strict(cls, data: dict, label: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {label} key(s): {', '.join(sorted(unknown))}")
    return cls(**data)


def validate_spec(raw, kind: str | None = None) -> ExperimentSpec:
    """Parse and validate a config (JSON text or dict); fill documented defaults.

    The default scenario is the desk-scale reference setup (M=8, 8x4 arrays,
    K_dl=K_ul=K_t=4, kappa=2); rejects unknown keys at every level. A manifest
    ({"experiment": {...}, ...}) is accepted transparently for exact replay.
    """
    if isinstance(raw, str):
        data = load_json(raw)
    elif raw is None:
        data = {}
    else:
        data = dict(raw)
    if "experiment" in data:
        data = dict(data["experiment"])

    allowed = {"kind", "scenario", "solver", "mc", "sweep", "n_scenarios", "output_dir"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")

    file_kind = data.get("kind")
    if file_kind is not None and file_kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {file_kind!r}; expected one of {KINDS}")
    if kind is not None and file_kind is not None and kind != file_kind:
        raise ConfigError(f"config kind {file_kind!r} does not match requested {kind!r}")
    resolved_kind = kind or file_kind or "single-solve"

    scen_data = dict(data.get("scenario", {}))
    scen_data.setdefault("n_x", 8)
    scen_data.setdefault("n_z", 4)
    scenario = ScenarioConfig.from_dict(scen_data)

    solver = _from_dict_strict(SolverConfig, data.get("solver", {}), "solver").validate()
    mc = _from_dict_strict(McConfig, data.get("mc", {}), "mc").validate()

    sweep = None
    if "sweep" in data and data["sweep"] is not None:
        sw = data["sweep"]
        extra = set(sw) - {"name", "values"}
        if extra:
            raise ConfigError(f"unknown sweep key(s): {', '.join(sorted(extra))}")
        values = tuple(sw["values"])
        if any(values[i] >= values[i + 1] for i in range(len(values) - 1)):
            raise ConfigError("sweep values must be strictly increasing")
        sweep = (sw["name"], values)
    elif resolved_kind in _DEFAULT_SWEEPS:
        name, values = _DEFAULT_SWEEPS[resolved_kind]
        sweep = (name, tuple(values))

    n_scenarios = int(data.get("n_scenarios", _DEFAULT_N_SCENARIOS.get(resolved_kind, 1)))
    if n_scenarios < 1:
        raise ConfigError("n_scenarios must be positive")

    return ExperimentSpec(
        kind=resolved_kind,
        scenario=scenario,
        solver=solver,
        mc=mc,
        sweep=sweep,
        n_scenarios=n_scenarios,
        output_dir=data.get("output_dir"),
    )


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows_csv(path: Path, rows: list[dict]) -> None:
    header = ["x", "strategy", "metric", "value", "stderr", "scenario_seed", "status"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_fmt(r.get(h, "")) for h in header])


def _write_manifest(spec: ExperimentSpec, out: Path) -> None:
    manifest = {
        "experiment": spec.to_dict(),
        "versions": {
            "cfisac": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _scenario_cfg(spec: ExperimentSpec, index: int, **overrides) -> ScenarioConfig:
    base = spec.scenario.to_dict()
    base["seed"] = spec.scenario.seed + index
    base.update(overrides)
    return ScenarioConfig.from_dict(base)


def _half_dl_mode(m: int, seed: int) -> ModeVector:
    rng = np.random.default_rng(seed + 1000)
    a = np.zeros(m)
    a[rng.permutation(m)[: (m + 1) // 2]] = 1.0
    return ModeVector.from_dl_mask(a)


# ---------------------------------------------------------------------------
# Experiment bodies
# ---------------------------------------------------------------------------

def _run_validate(spec: ExperimentSpec, out: Path, threads: int) -> dict:
    name, values = spec.sweep

    def one(job):
        s_idx, n_ant = job
        nx, nz = grid_for_antennas(int(n_ant))
        cfg = _scenario_cfg(spec, s_idx, n_x=nx, n_z=nz)
        scn = build_scenario(cfg)
        stats = compute_stats(scn)
        coef = compute_coefficients(stats, scn)
        terms = run_oracle(stats, scn, spec.mc)
        mode = _half_dl_mode(cfg.m_aps, cfg.seed)
        emp = empirical_rates_sinr(terms, mode)
        audit = audit_terms(terms, stats, scn)
        rows = []
        closed = {
            "dl_rate": dl_rates(coef, mode),
            "ul_rate": ul_rates(coef, mode),
            "sensing_sinr": sensing_sinrs(coef, mode),
        }
        empv = {
            "dl_rate": (emp.dl_rates, emp.dl_se),
            "ul_rate": (emp.ul_rates, emp.ul_se),
            "sensing_sinr": (emp.sensing_sinrs, emp.sinr_se),
        }
        for metric, arr in closed.items():
            for j, val in enumerate(arr):
                rows.append(
                    dict(x=n_ant, strategy="closed-form", metric=f"{metric}_{j}",
                         value=val, stderr="", scenario_seed=cfg.seed, status="ok")
                )
                e_val, e_se = empv[metric]
                rows.append(
                    dict(x=n_ant, strategy="monte-carlo", metric=f"{metric}_{j}",
                         value=e_val[j], stderr=e_se[j], scenario_seed=cfg.seed, status="ok")
                )
        return s_idx, n_ant, rows, audit

    jobs = [(s, n) for s in range(spec.n_scenarios) for n in values]
    results = _map_jobs(one, jobs, threads)
    all_rows = []
    n_fail = 0
    for s_idx, n_ant, rows, audit in results:
        all_rows.extend(rows)
        write_audit_csv(audit, out / f"audit_s{s_idx}_n{n_ant}.csv")
        n_fail += sum(not r["ok"] for r in audit)
    write_rows_csv(out / "validate_closed_form.csv", all_rows)
    return {"status": "ok", "audit_failures": n_fail}


def _strategy_rows(coef, scn, spec, x_val, seed) -> list[dict]:
    rows = []
    res_opt = solve_mode_selection(coef, spec.solver)
    rows.append(dict(x=x_val, strategy="optimized", metric="min_sinr_db",
                     value=res_opt.min_sinr_db, stderr="", scenario_seed=seed,
                     status=res_opt.status))
    res_gr = greedy_select(coef, scn, spec.solver)
    rows.append(dict(x=x_val, strategy="greedy", metric="min_sinr_db",
                     value=res_gr.min_sinr_db, stderr="", scenario_seed=seed,
                     status=res_gr.status))
    mode_rand = random_select(np.random.default_rng(seed + 2000), coef.m_aps)
    sinr_rand = min_sensing_sinr(coef, mode_rand)
    with np.errstate(divide="ignore"):
        rand_db = 10.0 * np.log10(sinr_rand) if sinr_rand > 0 else float("-inf")
    rows.append(dict(x=x_val, strategy="random", metric="min_sinr_db",
                     value=rand_db, stderr="", scenario_seed=seed, status="optimal"))
    res_ub = upper_bound(coef, spec.solver)
    rows.append(dict(x=x_val, strategy="upper-bound", metric="min_sinr_db",
                     value=res_ub.min_sinr_db, stderr="", scenario_seed=seed,
                     status=res_ub.status))
    return rows


def _run_sweep(spec: ExperimentSpec, out: Path, threads: int, param: str) -> dict:
    name, values = spec.sweep

    def one(job):
        s_idx, val = job
        if param == "n_antennas":
            nx, nz = grid_for_antennas(int(val))
            cfg = _scenario_cfg(spec, s_idx, n_x=nx, n_z=nz)
        else:
            cfg = _scenario_cfg(spec, s_idx, m_aps=int(val))
        scn = build_scenario(cfg)
        coef = compute_coefficients(compute_stats(scn), scn)
        return _strategy_rows(coef, scn, spec, val, cfg.seed)

    jobs = [(s, v) for s in range(spec.n_scenarios) for v in values]
    rows = [r for chunk in _map_jobs(one, jobs, threads) for r in chunk]
    write_rows_csv(out / f"sweep_{param}.csv", rows)
    return {"status": "ok"}


def _run_cdf(spec: ExperimentSpec, out: Path, threads: int) -> dict:
    def one(s_idx):
        cfg = _scenario_cfg(spec, s_idx)
        scn = build_scenario(cfg)
        coef = compute_coefficients(compute_stats(scn), scn)
        return _strategy_rows(coef, scn, spec, s_idx, cfg.seed)

    rows = [r for chunk in _map_jobs(one, list(range(spec.n_scenarios)), threads) for r in chunk]
    write_rows_csv(out / "cdf_min_sinr.csv", rows)
    return {"status": "ok"}


def _run_sweep_qos(spec: ExperimentSpec, out: Path, threads: int) -> dict:
    cfg = _scenario_cfg(spec, 0)
    scn = build_scenario(cfg)
    coef = compute_coefficients(compute_stats(scn), scn)
    rows = []
    for kappa in spec.sweep[1]:
        solver = dataclasses.replace(spec.solver, kappa_dl=float(kappa), kappa_ul=float(kappa))
        res = solve_mode_selection(coef, solver)
        rows.append(dict(x=kappa, strategy="optimized", metric="min_sinr_db",
                         value=res.min_sinr_db, stderr="", scenario_seed=cfg.seed,
                         status=res.status))
    write_rows_csv(out / "sweep_qos.csv", rows)
    return {"status": "ok"}


def _run_convergence(spec: ExperimentSpec, out: Path, threads: int) -> dict:
    cfg = _scenario_cfg(spec, 0)
    scn = build_scenario(cfg)
    coef = compute_coefficients(compute_stats(scn), scn)
    res = solve_mode_selection(coef, spec.solver)
    rows = []
    for it, entry in enumerate(res.trace):
        for metric in ("objective", "phi", "t", "min_sinr_db"):
            rows.append(dict(x=it, strategy="optimized", metric=metric,
                             value=entry[metric], stderr="", scenario_seed=cfg.seed,
                             status=res.status))
    write_rows_csv(out / "convergence.csv", rows)
    (out / "result.json").write_text(json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n")
    return {"status": "ok" if res.status != "infeasible" else "infeasible"}


def _run_single(spec: ExperimentSpec, out: Path, threads: int) -> dict:
    cfg = _scenario_cfg(spec, 0)
    scn = build_scenario(cfg)
    stats = compute_stats(scn)
    coef = compute_coefficients(stats, scn)
    res = solve_mode_selection(coef, spec.solver)
    (out / "result.json").write_text(json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n")
    rows = []
    for it, entry in enumerate(res.trace):
        for metric in ("objective", "phi", "t", "min_sinr_db"):
            rows.append(dict(x=it, strategy="optimized", metric=metric,
                             value=entry[metric], stderr="", scenario_seed=cfg.seed,
                             status=res.status))
    write_rows_csv(out / "trace.csv", rows)
    worst = max(
        woodbury_check(stats, scn, m, k)
        for m in range(cfg.m_aps)
        for k in range(cfg.k_dl + cfg.k_ul)
    )
    summary = dict(x=0, strategy="optimized", metric="min_sinr_db",
                   value=res.min_sinr_db, stderr="", scenario_seed=cfg.seed,
                   status=res.status)
    write_rows_csv(out / "single_solve.csv", [summary])
    return {"status": "ok" if res.status != "infeasible" else "infeasible",
            "woodbury_residual": worst}


def _run_lemmas(spec: ExperimentSpec, out: Path, threads: int) -> dict:
    report = lemma_checks(100_000, dim=8, seed=spec.scenario.seed)
    rows = []
    for name, entry in report.items():
        for key, val in entry.items():
            rows.append(dict(x=name, strategy="lemma-check", metric=key,
                             value=val if isinstance(val, bool) else float(val),
                             stderr="", scenario_seed=spec.scenario.seed, status="ok"))
    write_rows_csv(out / "lemmas.csv", rows)
    ok = all(entry["ok"] for entry in report.values())
    return {"status": "ok" if ok else "failed"}


def _map_jobs(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


_RUNNERS = {
    "validate-closed-form": _run_validate,
    "convergence": _run_convergence,
    "sweep-antennas": lambda s, o, t: _run_sweep(s, o, t, "n_antennas"),
    "sweep-aps": lambda s, o, t: _run_sweep(s, o, t, "m_aps"),
    "cdf": _run_cdf,
    "sweep-qos": _run_sweep_qos,
    "single-solve": _run_single,
    "lemmas": _run_lemmas,
}


def run(spec: ExperimentSpec, out_dir=None, threads: int = 1) -> dict:
    """Execute one experiment; writes CSVs plus a replayable manifest."""
    out = Path(
        out_dir
        or spec.output_dir
        or os.environ.get(ENV_OUT_DIR)
        or "cfisac_out"
    )
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(spec, out)
    summary = _RUNNERS[spec.kind](spec, out, threads)
    summary["output_dir"] = str(out)
    return summary
