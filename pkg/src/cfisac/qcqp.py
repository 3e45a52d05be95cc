"""Deterministic barrier solver for linear + convex-quadratic programs.

Solves
    minimize    c^T x
    subject to  A_eq x = b_eq
                A_in x <= b_in
                x^T Q_j x + p_j^T x + r_j <= 0   (Q_j PSD)
                lb <= x <= ub
with a phase-I elastic slack to find a strictly feasible start and a standard
log-barrier Newton path following afterwards. Everything is dense numpy and
fully deterministic: identical programs produce bit-identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_PSD_CLAMP = 1e-9
_PSD_REJECT = 1e-6
_BARRIER_MU = 20.0
_ARMIJO_ALPHA = 0.1
_ARMIJO_BETA = 0.5
_NEWTON_TOL = 1e-10
_STRICT_MARGIN = 1e-9


class SolverNumericalError(RuntimeError):
    """Raised when the KKT systems become numerically unsolvable."""


@dataclass(eq=False)
class ConvexProgram:
    n_vars: int
    objective: np.ndarray
    eq_constraints: list = field(default_factory=list)      # [(row, rhs)]
    ineq_constraints: list = field(default_factory=list)    # [(row, rhs)] row@x <= rhs
    quad_constraints: list = field(default_factory=list)    # [(Q, p, r)] x'Qx+p'x+r <= 0
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length must equal n_vars")
        if self.lb is None:
            self.lb = np.full(self.n_vars, -np.inf)
        if self.ub is None:
            self.ub = np.full(self.n_vars, np.inf)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.quad_constraints = [self._clamp_psd(q, p, r) for (q, p, r) in self.quad_constraints]

    def _clamp_psd(self, q, p, r):
        q = 0.5 * (np.asarray(q, dtype=float) + np.asarray(q, dtype=float).T)
        evals, evecs = np.linalg.eigh(q)
        scale = max(1.0, float(np.abs(evals).max()) if evals.size else 1.0)
        if evals.size and evals.min() < -_PSD_REJECT * scale:
            raise ValueError(
                f"quadratic constraint matrix is not PSD (min eig {evals.min():.3e})"
            )
        if evals.size and evals.min() < 0.0:
            evals = np.maximum(evals, 0.0)
            q = (evecs * evals) @ evecs.T
        return (q, np.asarray(p, dtype=float), float(r))

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "objective": self.objective.tolist(),
            "eq_constraints": [[np.asarray(a).tolist(), float(b)] for a, b in self.eq_constraints],
            "ineq_constraints": [[np.asarray(a).tolist(), float(b)] for a, b in self.ineq_constraints],
            "quad_constraints": [
                [np.asarray(q).tolist(), np.asarray(p).tolist(), float(r)]
                for q, p, r in self.quad_constraints
            ],
            "lb": self.lb.tolist(),
            "ub": self.ub.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConvexProgram":
        return cls(
            n_vars=d["n_vars"],
            objective=np.asarray(d["objective"], dtype=float),
            eq_constraints=[(np.asarray(a, dtype=float), float(b)) for a, b in d["eq_constraints"]],
            ineq_constraints=[
                (np.asarray(a, dtype=float), float(b)) for a, b in d["ineq_constraints"]
            ],
            quad_constraints=[
                (np.asarray(q, dtype=float), np.asarray(p, dtype=float), float(r))
                for q, p, r in d["quad_constraints"]
            ],
            lb=np.asarray(d["lb"], dtype=float),
            ub=np.asarray(d["ub"], dtype=float),
        )


@dataclass(eq=False)
class SolveStatus:
    x: np.ndarray
    objective_value: float
    kkt_residuals: tuple[float, float, float]   # (stationarity, primal, complementarity)
    status: str                                 # optimal | infeasible | iteration-limit
    newton_iters: int = 0
    merit_history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------

class _Canon:
    """Normalized inequality system: rows a@x <= b and quads f(x) <= 0."""

    def __init__(self, prog: ConvexProgram):
        rows, rhs = [], []
        for a, b in prog.ineq_constraints:
            rows.append(np.asarray(a, dtype=float))
            rhs.append(float(b))
        for j in range(prog.n_vars):
            if np.isfinite(prog.ub[j]):
                e = np.zeros(prog.n_vars)
                e[j] = 1.0
                rows.append(e)
                rhs.append(float(prog.ub[j]))
            if np.isfinite(prog.lb[j]):
                e = np.zeros(prog.n_vars)
                e[j] = -1.0
                rows.append(e)
                rhs.append(float(-prog.lb[j]))
        if rows:
            A = np.vstack(rows)
            b = np.asarray(rhs)
            scale = np.maximum(np.abs(A).max(axis=1), np.abs(b))
            scale = np.where(scale > 0, scale, 1.0)
            self.lin_A = A / scale[:, None]
            self.lin_b = b / scale
        else:
            self.lin_A = np.zeros((0, prog.n_vars))
            self.lin_b = np.zeros(0)

        quads = []
        for q, p, r in prog.quad_constraints:
            s = max(np.abs(q).max() if q.size else 0.0, np.abs(p).max(), abs(r), 1e-300)
            quads.append((q / s, p / s, r / s))
        n_q = len(quads)
        self.q_mats = np.array([q for q, _, _ in quads]).reshape(n_q, prog.n_vars, prog.n_vars)
        self.q_vecs = np.array([p for _, p, _ in quads]).reshape(n_q, prog.n_vars)
        self.q_rs = np.array([r for _, _, r in quads])

        if prog.eq_constraints:
            self.A_eq = np.vstack([np.asarray(a, dtype=float) for a, _ in prog.eq_constraints])
            self.b_eq = np.asarray([float(b) for _, b in prog.eq_constraints])
            es = np.maximum(np.abs(self.A_eq).max(axis=1), np.abs(self.b_eq))
            es = np.where(es > 0, es, 1.0)
            self.A_eq = self.A_eq / es[:, None]
            self.b_eq = self.b_eq / es
        else:
            self.A_eq = np.zeros((0, prog.n_vars))
            self.b_eq = np.zeros(0)

        self.n = prog.n_vars
        self.m_ineq = self.lin_A.shape[0] + self.q_mats.shape[0]

    def f_values(self, x):
        f_lin = self.lin_A @ x - self.lin_b
        if self.q_mats.shape[0]:
            qx = self.q_mats @ x                     # (q, n)
            f_qs = qx @ x + self.q_vecs @ x + self.q_rs
        else:
            f_qs = np.zeros(0)
        return f_lin, f_qs

    def quad_grads(self, x):
        """Gradient rows 2 Q x + p, shape (q, n)."""
        if not self.q_mats.shape[0]:
            return np.zeros((0, self.n))
        return 2.0 * (self.q_mats @ x) + self.q_vecs

    def max_violation(self, x) -> float:
        f_lin, f_qs = self.f_values(x)
        worst = -np.inf
        if f_lin.size:
            worst = max(worst, float(f_lin.max()))
        if f_qs.size:
            worst = max(worst, float(f_qs.max()))
        return worst

    def extend_phase1(self) -> "_Canon":
        """Append an elastic slack variable s bounding every inequality."""
        ext = _Canon.__new__(_Canon)
        n = self.n + 1
        n_q = self.q_mats.shape[0]
        ext.lin_A = np.hstack([self.lin_A, -np.ones((self.lin_A.shape[0], 1))])
        ext.lin_b = self.lin_b.copy()
        ext.q_mats = np.zeros((n_q, n, n))
        ext.q_mats[:, : self.n, : self.n] = self.q_mats
        ext.q_vecs = np.hstack([self.q_vecs, -np.ones((n_q, 1))])
        ext.q_rs = self.q_rs.copy()
        ext.A_eq = np.hstack([self.A_eq, np.zeros((self.A_eq.shape[0], 1))])
        ext.b_eq = self.b_eq.copy()
        ext.n = n
        ext.m_ineq = ext.lin_A.shape[0] + n_q
        return ext


# ---------------------------------------------------------------------------
# Barrier machinery
# ---------------------------------------------------------------------------

def _kkt_solve(h, a_eq, grad):
    n = h.shape[0]
    p = a_eq.shape[0]
    if p == 0:
        try:
            return np.linalg.solve(h, -grad), np.zeros(0)
        except np.linalg.LinAlgError:
            reg = 1e-12 * max(1.0, np.trace(h) / n)
            return np.linalg.solve(h + reg * np.eye(n), -grad), np.zeros(0)
    kkt = np.zeros((n + p, n + p))
    kkt[:n, :n] = h
    kkt[:n, n:] = a_eq.T
    kkt[n:, :n] = a_eq
    rhs = np.concatenate([-grad, np.zeros(p)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        reg = 1e-12 * max(1.0, np.trace(h) / n)
        kkt[:n, :n] = h + reg * np.eye(n)
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverNumericalError("KKT system is singular") from exc
    return sol[:n], sol[n:]


def _max_step(canon: _Canon, x, dx, f_lin, f_qs, g_q) -> float:
    s_max = 1.0
    if f_lin.size:
        df = canon.lin_A @ dx
        pos = df > 0
        if pos.any():
            s_max = min(s_max, float((-f_lin[pos] / df[pos]).min()))
    if f_qs.size:
        a2 = (canon.q_mats @ dx) @ dx              # (q,)
        b1 = g_q @ dx
        for j in range(f_qs.size):
            if a2[j] <= 1e-300:
                if b1[j] > 0:
                    s_max = min(s_max, -f_qs[j] / b1[j])
                continue
            disc = b1[j] * b1[j] - 4.0 * a2[j] * f_qs[j]
            root = (-b1[j] + np.sqrt(max(disc, 0.0))) / (2.0 * a2[j])
            if root > 0:
                s_max = min(s_max, root)
    return float(s_max)


def _center(canon: _Canon, c, x, t, budget, merit_log):
    """Newton centering for min t*c@x - sum log(-f). Returns (x, used, converged)."""
    used = 0
    merits = []
    # Float64 noise on the merit grows with t; the decrement test must too.
    tol = _NEWTON_TOL * max(1.0, t * max(1.0, float(np.abs(c).max())) * 1e-4)
    cap = min(budget, 50)
    while used < cap:
        f_lin, f_qs = canon.f_values(x)
        if (f_lin.size and f_lin.max() >= 0) or (f_qs.size and f_qs.max() >= 0):
            raise SolverNumericalError("iterate left the strictly feasible region")
        grad = t * c.copy()
        hess = np.zeros((canon.n, canon.n))
        if f_lin.size:
            inv_l = 1.0 / (-f_lin)
            grad += canon.lin_A.T @ inv_l
            hess += (canon.lin_A * (inv_l**2)[:, None]).T @ canon.lin_A
        g_q = canon.quad_grads(x)
        if f_qs.size:
            inv_q = 1.0 / (-f_qs)
            grad += g_q.T @ inv_q
            hess += (g_q * (inv_q**2)[:, None]).T @ g_q
            hess += np.einsum("q,qij->ij", 2.0 * inv_q, canon.q_mats)
        dx, _ = _kkt_solve(hess, canon.A_eq, grad)
        used += 1
        decrement = float(-grad @ dx)
        if decrement / 2.0 <= tol:
            merit_log.append((t, merits))
            return x, used, True

        psi0 = t * float(c @ x) - (np.log(-f_lin).sum() if f_lin.size else 0.0)
        psi0 -= np.log(-f_qs).sum() if f_qs.size else 0.0
        step = 0.99 * _max_step(canon, x, dx, f_lin, f_qs, g_q)
        step = min(step, 1.0)
        gdx = float(grad @ dx)
        accepted = False
        while step > 1e-13:
            x_new = x + step * dx
            fl, fq = canon.f_values(x_new)
            if (fl.size and fl.max() >= 0) or (fq.size and fq.max() >= 0):
                step *= _ARMIJO_BETA
                continue
            psi = t * float(c @ x_new) - (np.log(-fl).sum() if fl.size else 0.0)
            psi -= np.log(-fq).sum() if fq.size else 0.0
            if psi <= psi0 + _ARMIJO_ALPHA * step * gdx:
                x = x_new
                merits.append(psi)
                accepted = True
                break
            step *= _ARMIJO_BETA
        if not accepted:
            merit_log.append((t, merits))
            return x, used, True  # stalled at numerical precision
    merit_log.append((t, merits))
    return x, used, used < budget


def _barrier_path(canon: _Canon, c, x, tol, budget, merit_log, early_exit=None):
    """Follow the central path; returns (x, newton_used, converged)."""
    t = 1.0
    used = 0
    while True:
        x, it, converged = _center(canon, c, x, t, budget - used, merit_log)
        used += it
        if early_exit is not None and early_exit(x):
            return x, used, True
        if canon.m_ineq / t <= tol and converged:
            return x, used, True
        if used >= budget:
            return x, used, False
        t *= _BARRIER_MU


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def solve(
    prog: ConvexProgram,
    tol: float = 1e-8,
    max_iter: int = 200,
    x0: np.ndarray | None = None,
) -> SolveStatus:
    """Solve the program; deterministic for identical inputs.

    x0 is an optional strictly feasible hint; when absent or not strictly
    feasible, a phase-I elastic program locates an interior point first.
    """
    canon = _Canon(prog)
    if canon.m_ineq == 0:
        raise ValueError("program must contain at least one inequality or box bound")
    merit_log: list = []
    used = 0

    x = None
    if x0 is not None:
        cand = np.asarray(x0, dtype=float)
        eq_ok = (
            canon.A_eq.shape[0] == 0
            or np.abs(canon.A_eq @ cand - canon.b_eq).max() < 1e-9
        )
        if eq_ok and canon.max_violation(cand) < -_STRICT_MARGIN:
            x = cand

    if x is None:
        # Phase I: minimize the elastic slack.
        if canon.A_eq.shape[0]:
            base, *_ = np.linalg.lstsq(canon.A_eq, canon.b_eq, rcond=None)
        else:
            base = np.zeros(canon.n)
        finite_lb = np.where(np.isfinite(prog.lb), prog.lb, -1.0)
        finite_ub = np.where(np.isfinite(prog.ub), prog.ub, 1.0)
        if canon.A_eq.shape[0] == 0:
            base = 0.5 * (finite_lb + finite_ub)
        ext = canon.extend_phase1()
        worst = canon.max_violation(base)
        s0 = worst + 1.0 + 0.1 * abs(worst)
        x_ext = np.append(base, s0)
        # Keep the slack bounded below so phase I cannot drift.
        floor_row = np.zeros(ext.n)
        floor_row[-1] = -1.0
        ext.lin_A = np.vstack([ext.lin_A, floor_row])
        ext.lin_b = np.append(ext.lin_b, 10.0 + abs(s0))
        ext.m_ineq += 1
        c_ext = np.zeros(ext.n)
        c_ext[-1] = 1.0

        def found_interior(x_ext_now):
            return canon.max_violation(x_ext_now[:-1]) < -1e-6

        x_ext, it, _ = _barrier_path(
            ext, c_ext, x_ext, tol=1e-9, budget=max_iter, merit_log=merit_log,
            early_exit=found_interior,
        )
        used += it
        x_cand = x_ext[:-1]
        if canon.max_violation(x_cand) >= -1e-10:
            res = verify_kkt(prog, x_cand)
            return SolveStatus(
                x=x_cand,
                objective_value=float(prog.objective @ x_cand),
                kkt_residuals=res,
                status="infeasible",
                newton_iters=used,
                merit_history=merit_log,
            )
        x = x_cand

    x, it, converged = _barrier_path(
        canon, prog.objective, x, tol=tol, budget=max_iter - used, merit_log=merit_log
    )
    used += it
    status = "optimal" if converged else "iteration-limit"
    return SolveStatus(
        x=x,
        objective_value=float(prog.objective @ x),
        kkt_residuals=verify_kkt(prog, x),
        status=status,
        newton_iters=used,
        merit_history=merit_log,
    )


def verify_kkt(prog: ConvexProgram, x: np.ndarray) -> tuple[float, float, float]:
    """(stationarity, primal, complementarity) residuals at x.

    Multipliers are recovered by nonnegative least squares on the active set.
    Stationarity is normalized by max(1, ||c||_inf); primal and
    complementarity are reported in the program's own units.
    """
    x = np.asarray(x, dtype=float)
    c = prog.objective
    grads, fvals, scales = [], [], []
    for a, b in prog.ineq_constraints:
        a = np.asarray(a, dtype=float)
        grads.append(a)
        fvals.append(float(a @ x - b))
        scales.append(max(np.abs(a).max(), abs(b), 1e-300))
    for j in range(prog.n_vars):
        if np.isfinite(prog.ub[j]):
            e = np.zeros(prog.n_vars)
            e[j] = 1.0
            grads.append(e)
            fvals.append(float(x[j] - prog.ub[j]))
            scales.append(max(1.0, abs(prog.ub[j])))
        if np.isfinite(prog.lb[j]):
            e = np.zeros(prog.n_vars)
            e[j] = -1.0
            grads.append(e)
            fvals.append(float(prog.lb[j] - x[j]))
            scales.append(max(1.0, abs(prog.lb[j])))
    for q, p, r in prog.quad_constraints:
        grads.append(2.0 * q @ x + p)
        fvals.append(float(x @ q @ x + p @ x + r))
        scales.append(max(np.abs(q).max() if q.size else 0.0, np.abs(p).max(), abs(r), 1e-300))

    fvals = np.asarray(fvals)
    scales = np.asarray(scales)
    primal = float(max(0.0, (fvals).max())) if fvals.size else 0.0
    if prog.eq_constraints:
        a_eq = np.vstack([np.asarray(a, dtype=float) for a, _ in prog.eq_constraints])
        b_eq = np.asarray([float(b) for _, b in prog.eq_constraints])
        primal = max(primal, float(np.abs(a_eq @ x - b_eq).max()))
    else:
        a_eq = np.zeros((0, prog.n_vars))

    active = np.where(fvals / scales >= -1e-6)[0] if fvals.size else np.array([], dtype=int)
    cols = [grads[i] for i in active] + [a_eq[j] for j in range(a_eq.shape[0])]
    lam = np.zeros(len(fvals))
    if cols:
        g_mat = np.vstack(cols).T
        sol, *_ = np.linalg.lstsq(g_mat, -c, rcond=None)
        lam_active = np.maximum(sol[: len(active)], 0.0)
        lam[active] = lam_active
        nu = sol[len(active):]
        resid_vec = c + g_mat[:, : len(active)] @ lam_active
        if a_eq.shape[0]:
            resid_vec = resid_vec + a_eq.T @ nu
    else:
        resid_vec = c.copy()
    stationarity = float(np.abs(resid_vec).max() / max(1.0, np.abs(c).max()))
    comp = float(np.abs(lam * fvals).max()) if fvals.size else 0.0
    return (stationarity, primal, comp)
