"""Brute-force Monte-Carlo oracle for every closed-form expectation.

The oracle redraws small-scale channels, runs both MMSE estimators, applies
the exact unit-norm MRT beams, raw MRC detection and the sensing receive
filters, and accumulates each desired/interference power term separately so a
closed-form bug is localized to a single expectation. Symbols are unit-power
and mutually independent, so cross-symbol terms vanish analytically and are
never sampled; expectation accumulation acts on channel quantities directly.

Determinism: realization r draws from its own counter-based substream and is
folded into its standard-error group with a strictly sequential reduction, so
results are bit-identical for any batch size.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import build_mmse_operators, draw_complex, realization_rng
from .closed_form import ModeVector, closed_form_moments
from .scenario import LargeScaleStats, NetworkScenario


@dataclass(frozen=True)
class McConfig:
    n_realizations: int = 10_000
    rng_seed: int = 7
    batch: int = 256
    n_groups: int = 10
    collect_bmat: bool = True

    def validate(self) -> "McConfig":
        if self.n_realizations < 100:
            raise ValueError("n_realizations must be at least 100")
        if self.batch < 1 or self.n_groups < 2:
            raise ValueError("batch must be >= 1 and n_groups >= 2")
        return self


def _term_shapes(m: int, k: int, k_dl: int, k_ul: int, k_t: int) -> dict[str, tuple]:
    return {
        "norm2": (m, k),
        "desired_re": (m, k),
        "second": (m, k),
        "cross": (m, k, k),
        "sens_leak": (m, k),
        "h2": (k_dl, k_ul),
        "nmse_ue_num": (m, k),
        "w_desired_re": (m, k_dl),
        "w_second": (m, k_dl),
        "w_mui": (m, k_dl),
        "ul_mui": (m, k_ul),
        "resid_comm_raw": (m, m, k_ul, k_dl),
        "resid_w_comm": (m, m, k_ul),
        "resid_sens_raw": (m, m, k_ul),
        "echo_ul": (m, m, k_ul),
        "sens_echo": (m, k_t, m),
        "sens_mui": (m, k_t, m),
        "sens_resid_ap": (m, k_t, m),
        "sens_resid_ue": (m, k_t),
        "nmse_ap_num": (m, m),
        "hhat_norm2": (m, m),
    }


@dataclass(eq=False)
class EmpiricalTerms:
    """Per-term group sums plus the context needed to assemble rates."""

    shapes: dict[str, tuple]
    group_sums: np.ndarray          # (G, T) flattened term sums per group
    group_counts: np.ndarray        # (G,)
    offsets: dict[str, tuple[int, int]]
    bmat_sums: np.ndarray | None    # (G, M, K, N, N) complex or None
    p_dl_alloc: np.ndarray
    p_s_alloc: np.ndarray
    p_ul: float
    sigma2: float
    tau_bar: float
    n_antennas: int
    k_dl: int
    k_ul: int
    k_t: int
    n_realizations: int
    scenario_fingerprint: str

    @property
    def n(self) -> int:
        return self.n_realizations

    def total(self, name: str) -> np.ndarray:
        lo, hi = self.offsets[name]
        return self.group_sums[:, lo:hi].sum(axis=0).reshape(self.shapes[name])

    def mean(self, name: str) -> np.ndarray:
        return self.total(name) / self.n

    def group_means(self, name: str) -> np.ndarray:
        lo, hi = self.offsets[name]
        sums = self.group_sums[:, lo:hi].reshape((-1,) + self.shapes[name])
        return sums / self.group_counts.reshape((-1,) + (1,) * len(self.shapes[name]))

    def se(self, name: str) -> np.ndarray:
        gm = self.group_means(name)
        return gm.std(axis=0, ddof=1) / np.sqrt(gm.shape[0])

    def bmat_mean(self) -> np.ndarray:
        if self.bmat_sums is None:
            raise ValueError("oracle ran with collect_bmat=False")
        return self.bmat_sums.sum(axis=0) / self.n


# ---------------------------------------------------------------------------
# Oracle core
# ---------------------------------------------------------------------------

def _mag2(x: np.ndarray) -> np.ndarray:
    """|x|^2 without the hypot of np.abs."""
    return x.real**2 + x.imag**2


def run_oracle(
    stats: LargeScaleStats,
    scn: NetworkScenario,
    mc: McConfig,
    perfect_csi: bool = False,
) -> EmpiricalTerms:
    """Accumulate every desired/interference expectation by simulation.

    perfect_csi forces the estimates equal to the true channels, which must
    drive all residual-interference terms to exactly zero (cancellation
    correctness check).
    """
    mc.validate()
    cfg = scn.config
    m_aps, k_dl, k_ul, k_t = cfg.m_aps, cfg.k_dl, cfg.k_ul, cfg.k_t
    k_all = k_dl + k_ul
    n = cfg.n_antennas
    n_real = mc.n_realizations
    n_groups = mc.n_groups

    ops = build_mmse_operators(stats, scn)
    sq_tau_p = np.sqrt(ops.tau_p_ul)
    sq_s = np.sqrt(ops.sigma2)
    sqrt_v = np.sqrt(stats.v)[..., None]
    sqrt_u = np.sqrt(stats.u)[..., None]
    gbar = stats.los_ap_ue
    f_beam = stats.sens_beams                       # (M, K_t, N)
    u_filt_conj = stats.recv_filters.conj()
    a_t = stats.steer_ap_target
    a_t_conj = a_t.conj()
    p_dl = scn.p_dl_alloc
    p_s = scn.p_s_alloc
    p_ul = cfg.p_ul_w
    ul = slice(k_dl, k_all)

    # Fused per-pair scalings: hhat = hc_h*Htilde + hc_n*noise and
    # e = ec_h*Htilde + ec_n*noise.
    sqrt_gamma = np.sqrt(stats.gamma)
    hc_h = ops.H_gain * np.sqrt(ops.tau_p_dl) * sqrt_gamma
    hc_n = ops.H_gain * sq_s
    if perfect_csi:
        hc_h, hc_n = sqrt_gamma, np.zeros_like(hc_n)
    ec_h = sqrt_gamma - hc_h
    ec_n = -hc_n

    # Deterministic parts of the transmit covariance projections:
    # const_f[l, t] = sum_t' p_s[l, t'] |a_{l,t}^H f_{l,t'}|^2.
    proj_ff = _mag2(np.einsum("ltn,lsn->lts", a_t_conj, f_beam))
    const_f = np.einsum("lts,ls->lt", proj_ff, p_s)
    # srx2[m, p, t] = |u_{m,p}^H a_{m,t}|^2 (receive-filter gains).
    srx2 = _mag2(np.einsum("mpn,mtn->mpt", u_filt_conj, a_t))

    shapes = _term_shapes(m_aps, k_all, k_dl, k_ul, k_t)
    offsets = {}
    pos = 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        offsets[name] = (pos, pos + size)
        pos += size
    total_len = pos
    group_sums = np.zeros((n_groups, total_len))
    group_counts = np.zeros(n_groups)
    bmat_sums = (
        np.zeros((n_groups, m_aps, k_all, n, n), dtype=complex)
        if mc.collect_bmat
        else None
    )

    n_small = 2 * m_aps * k_all * n + k_dl * k_ul

    for start in range(0, n_real, mc.batch):
        stop = min(start + mc.batch, n_real)
        bsz = stop - start
        gens = [realization_rng(mc.rng_seed, r) for r in range(start, stop)]

        small = np.empty((bsz, n_small), dtype=complex)
        for i, gen in enumerate(gens):
            small[i] = draw_complex(gen, n_small)
        g_tilde = small[:, : m_aps * k_all * n].reshape(bsz, m_aps, k_all, n)
        noise_ul = small[:, m_aps * k_all * n : 2 * m_aps * k_all * n].reshape(
            bsz, m_aps, k_all, n
        )
        h_tilde = small[:, 2 * m_aps * k_all * n :].reshape(bsz, k_dl, k_ul)

        g = sqrt_v * gbar + sqrt_u * g_tilde
        if perfect_csi:
            ghat = g
        else:
            y = sq_tau_p * g + sq_s * noise_ul
            ghat = np.matmul(ops.A[None], y[..., None])[..., 0]
        g_conj = g.conj()
        ghat_ul_conj = ghat[:, :, ul].conj()
        err = g - ghat

        norms2 = np.einsum("rmkn,rmkn->rmk", ghat.real, ghat.real)
        norms2 += np.einsum("rmkn,rmkn->rmk", ghat.imag, ghat.imag)
        w = ghat[:, :, :k_dl] / np.sqrt(norms2[:, :, :k_dl, None])

        vals = {}
        d_mat = np.matmul(g_conj, ghat.swapaxes(-1, -2))
        diag = d_mat[:, :, np.arange(k_all), np.arange(k_all)]
        vals["norm2"] = norms2
        vals["desired_re"] = diag.real
        vals["second"] = _mag2(diag)
        vals["cross"] = _mag2(d_mat)
        nmse_num = np.einsum("rmkn,rmkn->rmk", err.real, err.real)
        nmse_num += np.einsum("rmkn,rmkn->rmk", err.imag, err.imag)
        vals["nmse_ue_num"] = nmse_num

        f_proj = _mag2(np.matmul(g_conj, f_beam.swapaxes(-1, -2)[None]))
        vals["sens_leak"] = np.einsum("rmkt,mt->rmk", f_proj, p_s)
        vals["h2"] = stats.alpha * _mag2(h_tilde)

        wd = diag[:, :, :k_dl] / np.sqrt(norms2[:, :, :k_dl])
        vals["w_desired_re"] = wd.real
        vals["w_second"] = _mag2(wd)
        cross_w = vals["cross"][:, :, :k_dl, :k_dl] / norms2[:, :, None, :k_dl]
        mask_dl = 1.0 - np.eye(k_dl)
        vals["w_mui"] = np.einsum("rmki,mi,ki->rmk", cross_w, p_dl, mask_dl)

        cross_ul = vals["cross"][:, :, ul, ul]  # |g_j^H ghat_i|^2 over UL pairs
        mask_ul = 1.0 - np.eye(k_ul)
        vals["ul_mui"] = np.einsum("rmji,ji->rmi", cross_ul, mask_ul)

        # Echo projections shared by UL data and sensing paths.
        eg2 = _mag2(np.matmul(ghat_ul_conj, a_t.swapaxes(-1, -2)[None]))
        proj_w2 = _mag2(np.matmul(a_t_conj[None], w.swapaxes(-1, -2)))
        p_x = np.einsum("rltk,lk->rlt", proj_w2, p_dl) + const_f
        vals["echo_ul"] = np.einsum("mtl,rmit,rlt->rmli", stats.rho, eg2, p_x)
        rho_rx = np.einsum("mtl,mpt->mptl", stats.rho, srx2)
        full_sens = np.einsum("mptl,rlt->rmpl", rho_rx, p_x)
        diag_sens = np.einsum(
            "mpl,mp,rlp->rmpl", stats.rho, np.einsum("mpp->mp", srx2), p_x
        )
        vals["sens_echo"] = diag_sens
        vals["sens_mui"] = full_sens - diag_sens

        resid_ue = _mag2(np.matmul(u_filt_conj[None], err[:, :, ul].swapaxes(-1, -2)))
        vals["sens_resid_ue"] = p_ul * resid_ue.sum(axis=3)

        # AP-AP channels, one receiver row at a time (fixed draw order per
        # realization: after the small block, rows m = 0..M-1).
        resid_comm_raw = np.empty((bsz, m_aps, m_aps, k_ul, k_dl))
        resid_w_comm = np.empty((bsz, m_aps, m_aps, k_ul))
        resid_sens_raw = np.empty((bsz, m_aps, m_aps, k_ul))
        sens_resid_ap = np.empty((bsz, m_aps, k_t, m_aps))
        nmse_ap_num = np.empty((bsz, m_aps, m_aps))
        hhat_norm2 = np.empty((bsz, m_aps, m_aps))
        row_len = 2 * m_aps * n * n
        row_buf = np.empty((bsz, row_len), dtype=complex)
        ghat_dl = ghat[:, :, :k_dl]
        for m in range(m_aps):
            for i, gen in enumerate(gens):
                row_buf[i] = draw_complex(gen, row_len)
            h_t = row_buf[:, : m_aps * n * n].reshape(bsz, m_aps, n, n)
            n_t = row_buf[:, m_aps * n * n :].reshape(bsz, m_aps, n, n)
            e_ap = ec_h[m][:, None, None] * h_t + ec_n[m][:, None, None] * n_t

            # Frobenius statistics via the quadratic identity, avoiding a
            # second full-matrix materialization for hhat.
            s_hh = np.einsum("rlab,rlab->rl", h_t.real, h_t.real)
            s_hh += np.einsum("rlab,rlab->rl", h_t.imag, h_t.imag)
            s_nn = np.einsum("rlab,rlab->rl", n_t.real, n_t.real)
            s_nn += np.einsum("rlab,rlab->rl", n_t.imag, n_t.imag)
            s_hn = np.einsum("rlab,rlab->rl", h_t.real, n_t.real)
            s_hn += np.einsum("rlab,rlab->rl", h_t.imag, n_t.imag)
            nmse_ap_num[:, m] = (
                ec_h[m] ** 2 * s_hh + ec_n[m] ** 2 * s_nn + 2 * ec_h[m] * ec_n[m] * s_hn
            )
            hhat_norm2[:, m] = (
                hc_h[m] ** 2 * s_hh + hc_n[m] ** 2 * s_nn + 2 * hc_h[m] * hc_n[m] * s_hn
            )

            v_ul = np.matmul(ghat_ul_conj[:, m][:, None], e_ap)
            resid_comm_raw[:, m] = _mag2(
                np.matmul(v_ul, ghat_dl.swapaxes(-1, -2))
            )
            pw = _mag2(np.matmul(v_ul, w.swapaxes(-1, -2)))
            resid_w_comm[:, m] = np.einsum("rlik,lk->rli", pw, p_dl)
            pf = _mag2(np.matmul(v_ul, f_beam.swapaxes(-1, -2)[None]))
            resid_sens_raw[:, m] = np.einsum("rlit,lt->rli", pf, p_s)

            u_e = np.matmul(u_filt_conj[m][None, None], e_ap)
            uw = _mag2(np.matmul(u_e, w.swapaxes(-1, -2)))
            uf = _mag2(np.matmul(u_e, f_beam.swapaxes(-1, -2)[None]))
            sens_resid_ap[:, m] = np.einsum("rlpk,lk->rlp", uw, p_dl).transpose(
                0, 2, 1
            ) + np.einsum("rlpt,lt->rlp", uf, p_s).transpose(0, 2, 1)

        vals["resid_comm_raw"] = resid_comm_raw
        vals["resid_w_comm"] = resid_w_comm
        vals["resid_sens_raw"] = resid_sens_raw
        vals["sens_resid_ap"] = sens_resid_ap
        vals["nmse_ap_num"] = nmse_ap_num
        vals["hhat_norm2"] = hhat_norm2

        flat = np.concatenate(
            [vals[name].reshape(bsz, -1) for name in shapes], axis=1
        )
        for i in range(bsz):
            gi = (start + i) * n_groups // n_real
            group_sums[gi] += flat[i]
            group_counts[gi] += 1.0
            if bmat_sums is not None:
                bmat_sums[gi] += np.einsum("mka,mkb->mkab", ghat[i], ghat[i].conj())

    return EmpiricalTerms(
        shapes=shapes,
        group_sums=group_sums,
        group_counts=group_counts,
        offsets=offsets,
        bmat_sums=bmat_sums,
        p_dl_alloc=p_dl.copy(),
        p_s_alloc=p_s.copy(),
        p_ul=p_ul,
        sigma2=scn.sigma2_w,
        tau_bar=cfg.tau_bar,
        n_antennas=n,
        k_dl=k_dl,
        k_ul=k_ul,
        k_t=k_t,
        n_realizations=n_real,
        scenario_fingerprint=scn.fingerprint(),
    )


# ---------------------------------------------------------------------------
# Assembly of use-and-forget rates from accumulated terms
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EmpiricalPerformance:
    dl_rates: np.ndarray
    ul_rates: np.ndarray
    sensing_sinrs: np.ndarray
    dl_se: np.ndarray
    ul_se: np.ndarray
    sinr_se: np.ndarray


def _assemble(terms: EmpiricalTerms, mode: ModeVector, get) -> tuple:
    """Squared-mean desired over summed variance/interference, per output."""
    a, b = mode.a, mode.b
    a2, b2 = a**2, b**2
    k_dl, k_ul, k_t = terms.k_dl, terms.k_ul, terms.k_t
    p_dl, p_s, p_ul, s2 = terms.p_dl_alloc, terms.p_s_alloc, terms.p_ul, terms.sigma2
    ul = slice(k_dl, k_dl + k_ul)

    wd = get("w_desired_re")
    bu_dl = p_dl * (get("w_second") - wd**2)
    den_common = bu_dl + get("w_mui") + get("sens_leak")[:, :k_dl]
    h2 = get("h2")
    dl = np.empty(k_dl)
    for k in range(k_dl):
        num = float(a @ (np.sqrt(p_dl[:, k]) * wd[:, k])) ** 2
        den = float(a2 @ den_common[:, k]) + p_ul * float(h2[k].sum()) + s2
        dl[k] = terms.tau_bar * np.log2(1.0 + num / den)

    ud = get("desired_re")[:, ul]
    bu_ul = p_ul * (get("second")[:, ul] - ud**2)
    noise_ul = s2 * get("norm2")[:, ul]
    mui_ul = p_ul * get("ul_mui")
    resid = get("resid_w_comm") + get("resid_sens_raw") + get("echo_ul")
    ulr = np.empty(k_ul)
    for i in range(k_ul):
        num = p_ul * float(b @ ud[:, i]) ** 2
        den = float(b2 @ (bu_ul[:, i] + mui_ul[:, i] + noise_ul[:, i]))
        den += float(b2 @ resid[:, :, i] @ a2)
        ulr[i] = terms.tau_bar * np.log2(1.0 + num / den)

    echo = get("sens_echo")
    s_int = get("sens_mui") + get("sens_resid_ap")
    s_ue = get("sens_resid_ue") + terms.n_antennas * s2
    sinr = np.empty(k_t)
    for p in range(k_t):
        num = float(b2 @ echo[:, p, :] @ a2)
        if num == 0.0:
            sinr[p] = 0.0
            continue
        den = float(b2 @ s_int[:, p, :] @ a2) + float(b2 @ s_ue[:, p])
        sinr[p] = num / den
    return dl, ulr, sinr


def empirical_rates_sinr(
    terms: EmpiricalTerms,
    mode: ModeVector,
    scenario: NetworkScenario | None = None,
) -> EmpiricalPerformance:
    """Assemble DL/UL rates and sensing SINRs exactly as the closed forms do.

    Standard errors come from batch means over the accumulation groups.
    """
    if scenario is not None and scenario.fingerprint() != terms.scenario_fingerprint:
        raise ValueError("EmpiricalTerms were computed on a different scenario")
    dl, ulr, sinr = _assemble(terms, mode, terms.mean)
    n_groups = terms.group_sums.shape[0]
    per_group = []
    for gi in range(n_groups):
        def get(name, gi=gi):
            return terms.group_means(name)[gi]

        per_group.append(_assemble(terms, mode, get))
    dl_g = np.array([p[0] for p in per_group])
    ul_g = np.array([p[1] for p in per_group])
    si_g = np.array([p[2] for p in per_group])
    root = np.sqrt(n_groups)
    return EmpiricalPerformance(
        dl_rates=dl,
        ul_rates=ulr,
        sensing_sinrs=sinr,
        dl_se=dl_g.std(axis=0, ddof=1) / root,
        ul_se=ul_g.std(axis=0, ddof=1) / root,
        sinr_se=si_g.std(axis=0, ddof=1) / root,
    )


# ---------------------------------------------------------------------------
# Term-by-term audit against the closed forms
# ---------------------------------------------------------------------------

def _tolerance_ok(closed: float, emp: float, se: float, rel: float = 0.02) -> bool:
    return abs(closed - emp) <= rel * abs(closed) + 3.0 * se


def audit_terms(
    terms: EmpiricalTerms,
    stats: LargeScaleStats,
    scn: NetworkScenario,
    rel_tol: float = 0.02,
) -> list[dict]:
    """Compare every closed-form expectation with its empirical counterpart.

    Returns one row per index tuple: term id, closed-form value, empirical
    value, standard error and a pass flag under |closed - emp| <=
    rel_tol*|closed| + 3*se.
    """
    closed = closed_form_moments(stats, scn)
    k_dl, k_ul = terms.k_dl, terms.k_ul
    rows = []

    def add_block(term_id, closed_arr, emp_name, emp_scale=1.0):
        emp = terms.mean(emp_name) * emp_scale
        se = terms.se(emp_name) * abs(emp_scale)
        closed_arr = np.asarray(closed_arr)
        for idx in np.ndindex(closed_arr.shape):
            c, e, s = float(closed_arr[idx]), float(emp[idx]), float(se[idx])
            rows.append(
                {
                    "term": f"{term_id}[{','.join(map(str, idx))}]",
                    "closed": c,
                    "empirical": e,
                    "stderr": s,
                    "ok": _tolerance_ok(c, e, s, rel_tol),
                }
            )

    add_block("est_energy", closed["norm2"], "norm2")
    add_block("est_desired", closed["desired"], "desired_re")
    add_block("est_second_moment", closed["second"], "second")
    cross_c = closed["cross"].copy()
    emp_cross = terms.mean("cross")
    se_cross = terms.se("cross")
    m_aps, k_all = cross_c.shape[0], cross_c.shape[1]
    for m in range(m_aps):
        for x in range(k_all):
            for y_ in range(k_all):
                if x == y_:
                    continue
                c, e, s = cross_c[m, x, y_], emp_cross[m, x, y_], se_cross[m, x, y_]
                rows.append(
                    {
                        "term": f"est_cross[{m},{x},{y_}]",
                        "closed": float(c),
                        "empirical": float(e),
                        "stderr": float(s),
                        "ok": _tolerance_ok(c, e, s, rel_tol),
                    }
                )
    add_block("sens_leakage", closed["sens_leak"], "sens_leak")
    add_block("resid_ap_comm", closed["resid_comm"], "resid_comm_raw")
    add_block("resid_ap_sens_beams", closed["resid_sens"], "resid_sens_raw")
    d1 = np.broadcast_to(closed["resid_ue_sens"][:, None], terms.shapes["sens_resid_ue"])
    add_block("resid_ue_sens", d1, "sens_resid_ue")
    d2 = np.broadcast_to(
        closed["resid_ap_sens"][:, None, :], terms.shapes["sens_resid_ap"]
    )
    add_block("resid_ap_at_filter", d2, "sens_resid_ap")

    if terms.bmat_sums is not None:
        b_emp = terms.bmat_mean()
        b_closed = closed["b_mat"]
        for m in range(b_closed.shape[0]):
            for kk in range(b_closed.shape[1]):
                cn = np.linalg.norm(b_closed[m, kk])
                gap = np.linalg.norm(b_closed[m, kk] - b_emp[m, kk])
                rows.append(
                    {
                        "term": f"est_covariance[{m},{kk}]",
                        "closed": float(cn),
                        "empirical": float(np.linalg.norm(b_emp[m, kk])),
                        "stderr": float(cn / np.sqrt(terms.n)),
                        "ok": bool(gap <= rel_tol * cn + 3.0 * cn / np.sqrt(terms.n)),
                    }
                )
    return rows


def write_audit_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["term", "closed", "empirical", "stderr", "pass"])
        for r in rows:
            writer.writerow(
                [r["term"], repr(r["closed"]), repr(r["empirical"]), repr(r["stderr"]), r["ok"]]
            )


# ---------------------------------------------------------------------------
# Lemma sanity checks
# ---------------------------------------------------------------------------

def lemma_checks(n_samples: int, dim: int, seed: int = 0) -> dict:
    """Statistical verification of the two moment identities used throughout.

    Checks, for random deterministic inputs:
      E{X A X^H} = sigma_x Tr(A) I
      E{g^H w1 g^H w2} = 0
      E{(g^H A g)^2} = Tr(A^2) + |Tr(A)|^2  (Hermitian A)
    """
    if n_samples < 1000:
        raise ValueError("lemma checks need at least 1000 samples")
    rng = np.random.default_rng(seed)
    a_raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    a_herm = 0.5 * (a_raw + a_raw.conj().T)
    w1 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    w2 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    sigma_x = 1.0

    acc_xax = np.zeros((dim, dim), dtype=complex)
    acc_w = 0.0 + 0.0j
    acc_w_sq = 0.0
    acc_q = np.zeros(n_samples)
    batch = 2000
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        x = (rng.standard_normal((b, dim, dim)) + 1j * rng.standard_normal((b, dim, dim))) * np.sqrt(0.5)
        g = (rng.standard_normal((b, dim)) + 1j * rng.standard_normal((b, dim))) * np.sqrt(0.5)
        acc_xax += np.einsum("rab,bc,rdc->ad", x, a_herm, x.conj())
        prod = np.einsum("rn,n->r", g.conj(), w1) * np.einsum("rn,n->r", g.conj(), w2)
        acc_w += prod.sum()
        acc_w_sq += (np.abs(prod) ** 2).sum()
        q = np.einsum("rn,nm,rm->r", g.conj(), a_herm, g).real
        acc_q[done : done + b] = q**2
        done += b

    target_1 = sigma_x * np.trace(a_herm).real * np.eye(dim)
    est_1 = acc_xax / n_samples
    err_1 = float(np.linalg.norm(est_1 - target_1))
    # per-entry fluctuation ~ ||A||_F / sqrt(n), dim^2 entries
    se_1 = dim * np.linalg.norm(a_herm) / np.sqrt(n_samples)

    est_2 = acc_w / n_samples
    se_2 = np.sqrt(max(acc_w_sq / n_samples - abs(est_2) ** 2, 0.0) / n_samples)
    norm_2 = np.linalg.norm(w1) * np.linalg.norm(w2)

    target_3 = np.trace(a_herm @ a_herm).real + abs(np.trace(a_herm)) ** 2
    est_3 = acc_q.mean()
    se_3 = acc_q.std(ddof=1) / np.sqrt(n_samples)

    return {
        "lemma1": {
            "abs_error": err_1,
            "threshold": float(3 * se_1),
            "ok": bool(err_1 < 3 * se_1),
        },
        "lemma2_bilinear": {
            "abs_error": float(abs(est_2)),
            "threshold": float(3 * se_2 + 1e-12 * norm_2),
            "ok": abs(est_2) < 3 * se_2 + 1e-12 * norm_2,
        },
        "lemma2_quartic": {
            "target": float(target_3),
            "estimate": float(est_3),
            "stderr": float(se_3),
            "ok": abs(est_3 - target_3) < 3 * se_3 + 0.01 * abs(target_3),
        },
    }
