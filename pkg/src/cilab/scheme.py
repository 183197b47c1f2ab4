"""The oscillatory corrector engine.

One iteration step adds two layers of high-frequency waves to a mollified
state: the first-order wave depletes the error carried on the (b-, b+)
basis at quadratic order, the second-order wave cancels the fast
oscillations the first one produces.  Fast phases are evaluated in closed
form; only slow coefficients are ever differentiated numerically, so time
grids never need to resolve the top frequency.

Two step drivers share one slice-level formula layer: a constant-state
driver whose slow coefficients are scalars (first step from the flat
subsolution, evaluable at arbitrary points), and a grid driver whose slow
coefficients live on stored fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .cutoffs import AmplitudeCutoff, PhaseFn, SpeedCutoffs, amplitude, build_cutoffs
from .fluxcore import cramer_coefficients, eigen_fields, eigen_frame

PLUS, MINUS = +1, -1
FAMILIES = (PLUS, MINUS)


class ResolutionError(ValueError):
    """Grid cannot resolve twice the next oscillation frequency."""


class BandViolation(Warning):
    pass


class PositivityViolation(Warning):
    pass


# ---------------------------------------------------------------------------
# Slice-level slow data

@dataclass
class FamilySlice:
    """Slow data of one wave family on a single time slice.

    Every entry is either a scalar/(2,)-vector (constant-state path) or an
    array over x.  The D_* entries are transport derivatives along the
    family speed, X_* are plain x-derivatives; both vanish identically in
    the constant-state path.
    """

    a: object                 # amplitude
    lam: object               # transport speed field of this family
    rho: object               # unit eigenvector field (..., 2)
    j: tuple                  # slot indices (j0, j0+1)
    phi: tuple                # cutoff values (phi0, phi1)
    D_par: tuple              # (dt + lam dx)[phi_s a rho], per slot, (..., 2)
    X_par: tuple              # dx[phi_s a rho]
    D_pair: dict              # {(s, s'): (dt + lam dx)[a^2 phi_s phi_s']}
    X_pair: dict
    da_dx: object = 0.0       # used only by ledger scale diagnostics


@dataclass
class CrossSlice:
    mean: object              # (lam_plus + lam_minus) / 2 field
    D_pair: dict              # {(sp, sm): (dt + mean dx)[a+ a- phi+_sp phi-_sm]}
    X_pair: dict


@dataclass
class SliceState:
    t: float
    x: np.ndarray
    u_delta: object           # (2,) or (nx, 2)
    E_delta: dict             # {family: scalar or (nx,)}
    comm: object              # f^delta(u) - f(u^delta) slice, (2,) or (nx, 2)
    fam: dict                 # {family: FamilySlice}
    cross: CrossSlice


def _vec(coef, scal):
    """coef (..,2) times scalar field -> (..,2), broadcasting both layouts."""
    return np.asarray(coef) * np.asarray(scal)[..., None]


def _matvec(m, v):
    return np.einsum("...ij,...j->...i", m, v)


def _d2f_contract(d2f, a, b):
    return np.einsum("...kij,...i,...j->...k", d2f, a, b)


# ---------------------------------------------------------------------------
# The formula layer: everything the step produces, on one time slice

def compute_slice(model, sc, lamp, lam_n, P, st, with_time_derivatives=False,
                  want_errors=True, want_expansion=True):
    """Evaluate correctors, remainders, and the updated state on one slice.

    lamp is the new oscillation frequency, lam_n the localization frequency
    of the current level.  Analytic time derivatives are only available
    when all slow bundles vanish (constant-state path).  t may be a scalar
    or a column array of times (constant-state path only); flags skip the
    error/update and trig-expansion blocks when a caller needs neither.
    """
    t, x = st.t, st.x
    Pt = np.asarray(P(t), dtype=float)
    Pd = np.asarray(P.d1(t), dtype=float)
    frame0 = sc.frame
    out = {}

    jets_f = model.f_at(np.asarray(st.u_delta))
    jets_df = model.df_at(np.asarray(st.u_delta))
    jets_d2f = model.d2f_at(np.asarray(st.u_delta))

    # phases per family and slot
    ph = {}
    for k in FAMILIES:
        fam = st.fam[k]
        entry = {}
        for s in (0, 1):
            speed = np.asarray(fam.j[s], dtype=float) / lam_n
            theta = lamp * (x - speed * t) + Pt
            entry[s] = {
                "speed": speed,
                "theta": theta,
                "cos": np.cos(theta),
                "sin": np.sin(theta),
                "cos2": np.cos(2.0 * theta),
                "sin2": np.sin(2.0 * theta),
                "dtheta_dt": -lamp * speed + Pd,
            }
        th01 = entry[0]["theta"] + entry[1]["theta"]
        entry["sum"] = {"cos": np.cos(th01), "sin": np.sin(th01)}
        ph[k] = entry

    # ---- first-order wave ---------------------------------------------
    v1 = {}
    for k in FAMILIES:
        fam = st.fam[k]
        pieces = 0.0
        for s in (0, 1):
            pieces = pieces + _vec(fam.rho, fam.phi[s] * fam.a * ph[k][s]["cos"])
            pieces = pieces + _vec(fam.X_par[s], np.asarray(ph[k][s]["sin"])) / lamp
        v1[k] = pieces
    v1_total = v1[PLUS] + v1[MINUS]
    out["v1"] = v1_total
    out["v1_fam"] = v1

    # ---- second-order wave ---------------------------------------------
    bvec = {PLUS: sc.b_plus, MINUS: sc.b_minus}
    Bvec = {PLUS: sc.B_plus, MINUS: sc.B_minus}
    btil = {PLUS: sc.btilde_plus, MINUS: sc.btilde_minus}
    nu_adj = 1.0 / lam_n

    v2_kk = {}
    for k in FAMILIES:
        fam = st.fam[k]
        a2 = fam.a * fam.a
        piece = 0.0
        for s in (0, 1):
            coef = a2 * fam.phi[s] ** 2
            piece = piece + _vec(Bvec[k], 0.25 * coef * ph[k][s]["cos2"])
            piece = piece + _vec(Bvec[k], st.fam[k].X_pair[(s, s)]
                                 * ph[k][s]["sin2"]) / (8.0 * lamp)
        coef01 = a2 * fam.phi[0] * fam.phi[1]
        piece = piece + 2.0 * _vec(Bvec[k], 0.25 * coef01 * ph[k]["sum"]["cos"])
        piece = piece + 2.0 * _vec(Bvec[k], fam.X_pair[(0, 1)]
                                   * ph[k]["sum"]["sin"]) / (8.0 * lamp)
        res_phase = np.asarray(lamp * nu_adj * np.asarray(t))
        piece = piece - 2.0 * _vec(bvec[k], fam.X_pair[(0, 1)]
                                   * np.sin(res_phase)) / (4.0 * lamp * nu_adj)
        v2_kk[k] = piece

    # cross corrector (one copy; it enters the total wave twice)
    fp, fm = st.fam[PLUS], st.fam[MINUS]
    apam = fp.a * fm.a
    v2_pm = 0.0
    cross_masks = {}
    for sp in (0, 1):
        for sm in (0, 1):
            jp, jm = fp.j[sp], fm.j[sm]
            mask = np.asarray(jp != jm, dtype=float)
            cross_masks[(sp, sm)] = mask
            phiphi = fp.phi[sp] * fm.phi[sm] * mask
            theta_sum = ph[PLUS][sp]["theta"] + ph[MINUS][sm]["theta"]
            v2_pm = v2_pm - _vec(sc.Dvec, 0.25 * apam * phiphi * np.cos(theta_sum))
            v2_pm = v2_pm - _vec(sc.Dvec, st.cross.X_pair[(sp, sm)] * mask
                                 * np.sin(theta_sum)) / (8.0 * lamp)
            nu = (np.asarray(jm, dtype=float) - np.asarray(jp, dtype=float)) / lam_n
            nu_safe = np.where(nu == 0.0, 1.0, nu)
            res = np.sin(lamp * nu * t) / nu_safe * mask
            v2_pm = v2_pm - _vec(sc.d, st.cross.X_pair[(sp, sm)] * res) / (4.0 * lamp)
    v2_total = v2_kk[PLUS] + v2_kk[MINUS] + 2.0 * np.asarray(v2_pm)
    out["v2"] = v2_total
    out["v2_kk"] = v2_kk
    out["v2_pm"] = np.asarray(v2_pm)
    out["v"] = v1_total + v2_total
    out["u_next"] = np.broadcast_to(np.asarray(st.u_delta),
                                    np.shape(out["v"])).copy() + out["v"]

    # ---- remainders -----------------------------------------------------
    R1 = {}
    for k in FAMILIES:
        fam = st.fam[k]
        acc = 0.0
        for s in (0, 1):
            acc = acc + _vec(fam.D_par[s], np.asarray(ph[k][s]["sin"])) / lamp
            mismatch = np.asarray(fam.lam) - ph[k][s]["speed"] + Pd / lamp
            acc = acc + _vec(fam.rho, fam.phi[s] * fam.a * ph[k][s]["cos"] * mismatch)
        R1[k] = acc
    out["R1"] = R1

    R2 = {}
    for k in FAMILIES:
        fam = st.fam[k]
        shifted = jets_df - np.asarray(fam.lam)[..., None, None] * np.eye(2)
        R2[k] = _matvec(shifted, v1[k])
    out["R2"] = R2

    G0 = {(PLUS, PLUS): sc.b_plus, (MINUS, MINUS): sc.b_minus,
          (PLUS, MINUS): sc.d, (MINUS, PLUS): sc.d}
    R3 = {}
    for k in FAMILIES:
        for l in FAMILIES:
            main = 0.0
            for s in (0, 1):
                for s2 in (0, 1):
                    coef = (st.fam[k].phi[s] * st.fam[l].phi[s2]
                            * ph[k][s]["cos"] * ph[l][s2]["cos"])
                    main = main + _vec(G0[(k, l)], st.fam[k].a * st.fam[l].a * coef)
            R3[(k, l)] = _d2f_contract(jets_d2f, v1[k], v1[l]) - main
    out["R3"] = R3

    df0 = model.jet((0.0, 0.0)).df
    R4 = {}
    R5 = {}
    for k in FAMILIES:
        fam = st.fam[k]
        a2 = fam.a * fam.a
        accT = 0.0
        accX = 0.0
        for s in (0, 1):
            accT = accT + _vec(Bvec[k], fam.D_pair[(s, s)]
                               * ph[k][s]["sin2"]) / (8.0 * lamp)
            phase_rate = 2.0 * lamp * (np.asarray(fam.lam) - ph[k][s]["speed"]) + 2.0 * Pd
            accT = accT + _vec(Bvec[k], a2 * fam.phi[s] ** 2
                               * ph[k][s]["cos2"] * phase_rate) / (8.0 * lamp)
            accX = accX - _vec(btil[k], fam.X_pair[(s, s)]
                               * ph[k][s]["sin2"]) / (8.0 * lamp)
        accT = accT + 2.0 * _vec(Bvec[k], fam.D_pair[(0, 1)]
                                 * ph[k]["sum"]["sin"]) / (8.0 * lamp)
        sum_rate = (lamp * (2.0 * np.asarray(fam.lam)
                            - ph[k][0]["speed"] - ph[k][1]["speed"]) + 2.0 * Pd)
        accT = accT + 2.0 * _vec(Bvec[k], a2 * fam.phi[0] * fam.phi[1]
                                 * ph[k]["sum"]["cos"] * sum_rate) / (8.0 * lamp)
        res_phase = np.asarray(lamp * nu_adj * np.asarray(t))
        accT = accT - 2.0 * _vec(bvec[k], fam.D_pair[(0, 1)]
                                 * np.sin(res_phase)) / (4.0 * lamp * nu_adj)
        accX = accX - 2.0 * _vec(btil[k], fam.X_pair[(0, 1)]
                                 * ph[k]["sum"]["sin"]) / (8.0 * lamp)
        dfb = (df0 - frame0.lam(k) * np.eye(2)) @ bvec[k]
        accX = accX - 2.0 * _vec(dfb, fam.X_pair[(0, 1)]
                                 * np.sin(res_phase)) / (4.0 * lamp * nu_adj)
        R4[k] = accT
        R5[k] = accX

    # cross-family transport and slow remainders (single copy each)
    mean0 = 0.5 * (frame0.lambda_plus + frame0.lambda_minus)
    dfd = (df0 - mean0 * np.eye(2)) @ sc.d
    accT = 0.0
    accX = 0.0
    for sp in (0, 1):
        for sm in (0, 1):
            mask = cross_masks[(sp, sm)]
            theta_sum = ph[PLUS][sp]["theta"] + ph[MINUS][sm]["theta"]
            sin_sum, cos_sum = np.sin(theta_sum), np.cos(theta_sum)
            Dc = st.cross.D_pair[(sp, sm)] * mask
            Xc = st.cross.X_pair[(sp, sm)] * mask
            accT = accT - _vec(sc.Dvec, Dc * sin_sum) / (8.0 * lamp)
            rate = (lamp * (2.0 * np.asarray(st.cross.mean)
                            - ph[PLUS][sp]["speed"] - ph[MINUS][sm]["speed"])
                    + 2.0 * Pd)
            phiphi = apam * fp.phi[sp] * fm.phi[sm] * mask
            accT = accT - _vec(sc.Dvec, phiphi * cos_sum * rate) / (8.0 * lamp)
            nu = (np.asarray(fm.j[sm], dtype=float)
                  - np.asarray(fp.j[sp], dtype=float)) / lam_n
            nu_safe = np.where(nu == 0.0, 1.0, nu)
            accT = accT - _vec(sc.d, Dc * np.sin(lamp * nu * t) / nu_safe) / (4.0 * lamp)
            accX = accX - _vec(sc.d, Xc * sin_sum) / (8.0 * lamp)
            accX = accX - _vec(dfd, Xc * np.sin(lamp * nu * t) / nu_safe) / (4.0 * lamp)
    R4["pm"] = np.asarray(accT)
    R5["pm"] = np.asarray(accX)
    out["R4"] = R4
    out["R5"] = R5

    # Taylor and pairing errors, evaluated directly
    if want_errors:
        v_all = out["v"]
        u_next = out["u_next"]
        f_next = model.f_at(u_next)
        Err1 = (f_next - jets_f - _matvec(jets_df, v_all)
                - 0.5 * _d2f_contract(jets_d2f, v_all, v_all))
        Err2 = 0.5 * (_d2f_contract(jets_d2f, v_all, v_all)
                      - _d2f_contract(jets_d2f, v1_total, v1_total))
        out["Err1"], out["Err2"] = Err1, Err2

        Err3 = {}
        for k in FAMILIES:
            shift_n = (jets_df
                       - np.asarray(st.fam[k].lam)[..., None, None] * np.eye(2))
            shift_0 = df0 - frame0.lam(k) * np.eye(2)
            Err3[k] = _matvec(shift_n - shift_0, v2_kk[k])
        shift_n = (jets_df
                   - np.asarray(st.cross.mean)[..., None, None] * np.eye(2))
        shift_0 = df0 - mean0 * np.eye(2)
        Err3["pm"] = _matvec(shift_n - shift_0, np.asarray(v2_pm))
        out["Err3"] = Err3

    # ---- depletion, collected error update ------------------------------
    # cramer-consistent residue coefficients of (b_k - btilde_k)
    res_coef = {}
    for k in FAMILIES:
        wp, wm = cramer_coefficients(sc, bvec[k] - btil[k])
        res_coef[k] = {PLUS: wp, MINUS: wm}

    Xosc = {}
    Ssum = {}
    for k in FAMILIES:
        fam = st.fam[k]
        Xosc[k] = (fam.phi[0] ** 2 * ph[k][0]["cos2"]
                   + fam.phi[1] ** 2 * ph[k][1]["cos2"]
                   + 2.0 * fam.phi[0] * fam.phi[1] * ph[k]["sum"]["cos"])
        Ssum[k] = fam.phi[0] ** 2 + fam.phi[1] ** 2
    D = {}
    for k in FAMILIES:
        kbar = -k
        a2k = st.fam[k].a ** 2
        a2b = st.fam[kbar].a ** 2
        D[k] = 0.25 * (a2k * Ssum[k]
                       + a2k * Xosc[k] * res_coef[k][k]
                       + a2b * Xosc[kbar] * res_coef[kbar][k])
    out["D"] = D

    s_printed = {}
    alpha = {PLUS: sc.alpha_plus, MINUS: sc.alpha_minus}
    beta = {PLUS: sc.beta_plus, MINUS: sc.beta_minus}
    for k in FAMILIES:
        kbar = -k
        adj_k = 2.0 * st.fam[k].phi[0] * st.fam[k].phi[1] * ph[k]["sum"]["cos"]
        adj_b = 2.0 * st.fam[kbar].phi[0] * st.fam[kbar].phi[1] * ph[kbar]["sum"]["cos"]
        s_printed[k] = alpha[k] * adj_k + beta[kbar] * adj_b
    out["s_printed"] = s_printed

    if want_errors:
        REM = (R1[PLUS] + R1[MINUS] + R2[PLUS] + R2[MINUS]
               + 0.5 * (R3[(PLUS, PLUS)] + R3[(MINUS, MINUS)]
                        + R3[(PLUS, MINUS)] + R3[(MINUS, PLUS)])
               + R4[PLUS] + R4[MINUS] + 2.0 * R4["pm"]
               + R5[PLUS] + R5[MINUS] + 2.0 * R5["pm"]
               + Err1 + Err2 + Err3[PLUS] + Err3[MINUS] + 2.0 * Err3["pm"])
        out["REM"] = REM
        W_for_E = np.broadcast_to(np.asarray(st.comm), np.shape(REM)) - REM
        out["W_for_E"] = W_for_E
        w_plus, w_minus = cramer_coefficients(sc, W_for_E)
        out["w"] = {PLUS: w_plus, MINUS: w_minus}
        out["E_next"] = {k: np.asarray(st.E_delta[k]) - D[k] + out["w"][k]
                         for k in FAMILIES}

    # quadratic-form pieces used by the corrector-algebra checks
    if not want_expansion:
        if with_time_derivatives:
            _attach_time_derivatives(out, st, ph, sc, lamp, cross_masks,
                                     apam, fp, fm)
        return out
    MQ = 0.0
    for k in FAMILIES:
        for l in FAMILIES:
            for s in (0, 1):
                for s2 in (0, 1):
                    coef = (st.fam[k].a * st.fam[l].a
                            * st.fam[k].phi[s] * st.fam[l].phi[s2]
                            * ph[k][s]["cos"] * ph[l][s2]["cos"])
                    MQ = MQ + 0.5 * _vec(G0[(k, l)], coef)
    out["MQ"] = np.asarray(MQ)
    MQ_mean = 0.0
    MQ_sres = 0.0
    for k in FAMILIES:
        a2k = st.fam[k].a ** 2
        MQ_mean = MQ_mean + _vec(bvec[k], 0.25 * a2k * Ssum[k])
        MQ_sres = MQ_sres + _vec(bvec[k] - btil[k], 0.25 * a2k * Xosc[k])
    out["MQ_mean"] = np.asarray(MQ_mean)
    out["MQ_sres"] = np.asarray(MQ_sres)

    # trig-expanded form of the quadratic interaction (mean, doubled phase,
    # near-diagonal, and time-resonance pieces), plus the cross-family part
    res_phase = np.asarray(lamp * nu_adj * np.asarray(t))
    MQ_exp = 0.0
    for k in FAMILIES:
        fam = st.fam[k]
        a2k = fam.a ** 2
        coef = (fam.phi[0] ** 2 * (1.0 + ph[k][0]["cos2"])
                + fam.phi[1] ** 2 * (1.0 + ph[k][1]["cos2"])
                + 2.0 * fam.phi[0] * fam.phi[1]
                * (ph[k]["sum"]["cos"] + np.cos(res_phase)))
        MQ_exp = MQ_exp + _vec(bvec[k], 0.25 * a2k * coef)
    cross_diag_max = 0.0
    for sp in (0, 1):
        for sm in (0, 1):
            phiphi = apam * fp.phi[sp] * fm.phi[sm]
            theta_sum = ph[PLUS][sp]["theta"] + ph[MINUS][sm]["theta"]
            nu = (np.asarray(fm.j[sm], dtype=float)
                  - np.asarray(fp.j[sp], dtype=float)) / lam_n
            MQ_exp = MQ_exp + _vec(sc.d, 0.5 * phiphi
                                   * (np.cos(lamp * nu * t) + np.cos(theta_sum)))
            diag = phiphi * (1.0 - cross_masks[(sp, sm)])
            cross_diag_max = max(cross_diag_max, float(np.max(np.abs(diag))))
    out["MQ_expanded"] = np.asarray(MQ_exp)
    out["cross_diag_max"] = cross_diag_max

    if with_time_derivatives:
        _attach_time_derivatives(out, st, ph, sc, lamp, cross_masks,
                                 apam, fp, fm)
    return out


def _attach_time_derivatives(out, st, ph, sc, lamp, cross_masks, apam, fp, fm):
    """Analytic d/dt of the total wave; valid when slow data is constant."""
    Bvec = {PLUS: sc.B_plus, MINUS: sc.B_minus}
    dv1 = 0.0
    for k in FAMILIES:
        fam = st.fam[k]
        for s in (0, 1):
            dv1 = dv1 + _vec(fam.rho, -fam.phi[s] * fam.a * ph[k][s]["sin"]
                             * ph[k][s]["dtheta_dt"])
    dv2 = 0.0
    for k in FAMILIES:
        fam = st.fam[k]
        a2 = fam.a * fam.a
        for s in (0, 1):
            dv2 = dv2 + _vec(Bvec[k], -0.25 * a2 * fam.phi[s] ** 2
                             * ph[k][s]["sin2"] * 2.0 * ph[k][s]["dtheta_dt"])
        rate01 = ph[k][0]["dtheta_dt"] + ph[k][1]["dtheta_dt"]
        dv2 = dv2 + 2.0 * _vec(Bvec[k], -0.25 * a2 * fam.phi[0] * fam.phi[1]
                               * ph[k]["sum"]["sin"] * rate01)
    for sp in (0, 1):
        for sm in (0, 1):
            mask = cross_masks[(sp, sm)]
            phiphi = apam * fp.phi[sp] * fm.phi[sm] * mask
            theta_sum = ph[PLUS][sp]["theta"] + ph[MINUS][sm]["theta"]
            rate = ph[PLUS][sp]["dtheta_dt"] + ph[MINUS][sm]["dtheta_dt"]
            dv2 = dv2 + 2.0 * _vec(sc.Dvec, 0.25 * phiphi
                                   * np.sin(theta_sum) * rate)
    out["dv_dt"] = np.asarray(dv1) + np.asarray(dv2)


# ---------------------------------------------------------------------------
# Constant-state step kit

def _zero_fam(a, lam, rho, j0, phi0, phi1):
    z2 = np.zeros(2)
    return FamilySlice(
        a=a, lam=lam, rho=rho, j=(j0, j0 + 1), phi=(phi0, phi1),
        D_par=(z2, z2), X_par=(z2, z2),
        D_pair={(0, 0): 0.0, (1, 1): 0.0, (0, 1): 0.0},
        X_pair={(0, 0): 0.0, (1, 1): 0.0, (0, 1): 0.0},
    )


@dataclass
class ConstStepKit:
    """Step from a constant state: all slow coefficients are scalars, so
    every produced field is evaluable in closed form at arbitrary (t, x)."""

    model: object
    sc: object
    sched: object
    n: int
    P: PhaseFn
    u0: np.ndarray
    E0: dict

    def __post_init__(self):
        self.lamp = self.sched.lam[self.n + 1]
        self.lam_n = self.sched.lam[self.n]
        frame = eigen_frame(self.model.jet(self.u0).df, self.sc.flips)
        bank = build_cutoffs(self.n, self.lam_n)
        cut = AmplitudeCutoff(self.sched.beta_cut, self.sched.gamma_cut)
        Fn = self.sched.F[self.n]
        self.fam_const = {}
        for k in FAMILIES:
            lam_k = frame.lam(k)
            j0, p0, p1 = bank.phi_pair(lam_k)
            a_k = float(amplitude(self.E0[k], Fn, cut))
            self.fam_const[k] = _zero_fam(a_k, lam_k, frame.r(k),
                                          int(j0), float(p0), float(p1))
        self.mean_const = 0.5 * (frame.lambda_plus + frame.lambda_minus)
        self.bank = bank

    def slice_state(self, t, x):
        zeros_pair = {(s, s2): 0.0 for s in (0, 1) for s2 in (0, 1)}
        cross = CrossSlice(mean=self.mean_const, D_pair=zeros_pair,
                           X_pair=zeros_pair)
        return SliceState(t=float(t), x=np.asarray(x, dtype=float),
                          u_delta=self.u0, E_delta=self.E0,
                          comm=np.zeros(2), fam=dict(self.fam_const),
                          cross=cross)

    def compute(self, t, x, with_time_derivatives=False, want_errors=True,
                want_expansion=True):
        return compute_slice(self.model, self.sc, self.lamp, self.lam_n,
                             self.P, self.slice_state(t, x),
                             with_time_derivatives=with_time_derivatives,
                             want_errors=want_errors,
                             want_expansion=want_expansion)

    def compute_block(self, ts, x, **kwargs):
        """Evaluate a block of time slices at once (column broadcasting)."""
        return self.compute(np.asarray(ts, dtype=float)[:, None], x, **kwargs)


# ---------------------------------------------------------------------------
# Iteration states

@dataclass
class ConstState:
    """Level state with spatially constant fields (the flat subsolution)."""

    n: int
    u: np.ndarray
    E: dict

    is_const = True

    def eval_u(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.u, x.shape + (2,)).copy()

    def eval_E(self, t, x):
        x = np.asarray(x, dtype=float)
        return {k: np.full(x.shape, self.E[k]) for k in FAMILIES}


@dataclass
class LazyCorrectorState:
    """Output of a constant-state step, evaluable anywhere in closed form."""

    n: int
    kit: ConstStepKit

    is_const = False

    def eval_u(self, t, x):
        return self.kit.compute(t, x)["u_next"]

    def eval_E(self, t, x):
        return self.kit.compute(t, x)["E_next"]

    def eval_all(self, t, x, with_time_derivatives=False, **kwargs):
        return self.kit.compute(t, x, with_time_derivatives, **kwargs)


@dataclass
class GridState:
    """Level state materialized on a space-time grid."""

    n: int
    u: gridmod.Field
    E: dict                   # {family: Field}

    is_const = False

    def eval_u(self, t, x):
        it = _nearest_slice(self.u, t)
        return self.u.values[it]

    def eval_E(self, t, x):
        return {k: self.E[k].values[_nearest_slice(self.E[k], t)]
                for k in FAMILIES}


def _nearest_slice(fld, t):
    tv = fld.grid.t
    it = int(np.clip(np.round((t - tv[0]) / fld.grid.dt), fld.lo, fld.hi))
    return it


# ---------------------------------------------------------------------------
# Spec-facing operations

def init_subsolution(sched, sc, grid=None):
    """Flat subsolution: zero state, constant error level alpha0 per family."""
    alpha0 = sched.alpha0
    return ConstState(n=0, u=np.zeros(2), E={PLUS: alpha0, MINUS: alpha0})


def build_v1(kit, t, x):
    return kit.compute(t, x)["v1"]


def build_v2(kit, t, x):
    out = kit.compute(t, x)
    return out["v2"]


def compute_s(bank, sc, P, lamp, fam_slices, t, x):
    """Printed-form near-diagonal oscillation residue (report-style)."""
    st = SliceState(t=float(t), x=np.asarray(x, dtype=float),
                    u_delta=np.zeros(2), E_delta={PLUS: 1.0, MINUS: 1.0},
                    comm=np.zeros(2), fam=fam_slices,
                    cross=CrossSlice(mean=0.0,
                                     D_pair={(s, s2): 0.0 for s in (0, 1)
                                             for s2 in (0, 1)},
                                     X_pair={(s, s2): 0.0 for s in (0, 1)
                                             for s2 in (0, 1)}))
    lam_n = bank.lam
    out = compute_slice_sonly(sc, lamp, lam_n, P, st)
    return out


def compute_slice_sonly(sc, lamp, lam_n, P, st):
    """s_+ / s_- fields per the printed near-diagonal formula."""
    t, x = st.t, st.x
    Pt = float(P(t))
    s_out = {}
    cossum = {}
    for k in FAMILIES:
        fam = st.fam[k]
        th0 = lamp * (x - np.asarray(fam.j[0], dtype=float) / lam_n * t) + Pt
        th1 = lamp * (x - np.asarray(fam.j[1], dtype=float) / lam_n * t) + Pt
        cossum[k] = 2.0 * fam.phi[0] * fam.phi[1] * np.cos(th0 + th1)
    alpha = {PLUS: sc.alpha_plus, MINUS: sc.alpha_minus}
    beta = {PLUS: sc.beta_plus, MINUS: sc.beta_minus}
    for k in FAMILIES:
        s_out[k] = alpha[k] * cossum[k] + beta[-k] * cossum[-k]
    return s_out


def nyquist_check(grid, lamp):
    k_needed = 2.0 * lamp / (2.0 * math.pi)
    if k_needed >= grid.nx / 2:
        raise ResolutionError(
            f"grid nx={grid.nx} cannot resolve wavenumber {k_needed:.1f}")


@dataclass
class StepReport:
    n_next: int
    F_next: float
    band: tuple
    E_min: dict
    E_max: dict
    band_ok: bool
    positivity_ok: bool
    u_max: float
    u_bound_ok: bool
    w_max: dict
    W_max: float
    increment_max: float
    cstar_implied: float
    c0_implied: float
    case_fractions: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "n_next": self.n_next, "F_next": self.F_next,
            "band": list(self.band),
            "E_min": {str(k): v for k, v in self.E_min.items()},
            "E_max": {str(k): v for k, v in self.E_max.items()},
            "band_ok": self.band_ok, "positivity_ok": self.positivity_ok,
            "u_max": self.u_max, "u_bound_ok": self.u_bound_ok,
            "w_max": {str(k): v for k, v in self.w_max.items()},
            "W_max": self.W_max, "increment_max": self.increment_max,
            "cstar_implied": self.cstar_implied, "c0_implied": self.c0_implied,
            "case_fractions": self.case_fractions, "notes": self.notes,
        }


def step_const(state, sched, grid, phase, model, sc, scan_stride=1):
    """Advance a constant state one level; scan the grid for the report."""
    n = state.n
    nyquist_check(grid, sched.lam[n + 1])
    kit = ConstStepKit(model=model, sc=sc, sched=sched, n=n, P=phase,
                       u0=state.u, E0=state.E)
    # small-divisor guard: adjacent localized speeds differ by 1/lam_n
    assert abs(kit.bank.localized_speed(1) - kit.bank.localized_speed(0)) \
        >= 1.0 / sched.lam[n] - 1e-15
    new_state = LazyCorrectorState(n=n + 1, kit=kit)
    report = scan_report(new_state, sched, grid, sc, state, scan_stride)
    return new_state, report


def scan_report(state, sched, grid, sc, prev_state, stride=1, block=8):
    n_next = state.n
    Fn = sched.F[n_next - 1]
    F_next = sched.F[n_next] if n_next < len(sched.F) else Fn * sched.r ** 2
    lo, hi = grid.core
    E_min = {k: math.inf for k in FAMILIES}
    E_max = {k: -math.inf for k in FAMILIES}
    u_max = 0.0
    w_max = {k: 0.0 for k in FAMILIES}
    W_max = 0.0
    inc_max = 0.0
    x = grid.x
    slices = list(range(lo, hi + 1, stride))
    for start in range(0, len(slices), block):
        ts = grid.t[slices[start:start + block]]
        out = state.kit.compute_block(ts, x, want_expansion=False)
        for k in FAMILIES:
            E_min[k] = min(E_min[k], float(np.min(out["E_next"][k])))
            E_max[k] = max(E_max[k], float(np.max(out["E_next"][k])))
            w_max[k] = max(w_max[k], float(np.max(np.abs(out["w"][k]))))
        u_max = max(u_max, float(np.max(np.abs(out["u_next"]))))
        W_max = max(W_max, float(np.max(np.abs(out["W_for_E"]))))
        inc_max = max(inc_max, float(np.max(np.abs(out["v"]))))
    band = (sched.c_q * F_next, F_next)
    band_ok = all(band[0] <= E_min[k] and E_max[k] <= band[1] for k in FAMILIES)
    positivity_ok = all(E_min[k] > 0.0 for k in FAMILIES)
    sqf = sched.sqrtF_cumsum(n_next - 1)
    c0_implied = max(w_max.values()) / (Fn * sqf) if Fn * sqf > 0 else math.inf
    cstar_implied = inc_max / math.sqrt(Fn) if Fn > 0 else math.inf
    notes = []
    if not band_ok:
        notes.append("band-violation")
    if not positivity_ok:
        notes.append("positivity-violation")
    return StepReport(
        n_next=n_next, F_next=F_next, band=band, E_min=E_min, E_max=E_max,
        band_ok=band_ok, positivity_ok=positivity_ok, u_max=u_max,
        u_bound_ok=u_max <= 1.0, w_max=w_max, W_max=W_max,
        increment_max=inc_max, cstar_implied=cstar_implied,
        c0_implied=c0_implied, notes=notes)
