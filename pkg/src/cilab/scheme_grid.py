"""Grid-path step driver: slow coefficients live on stored fields.

Used for multi-step relaxed runs where the previous level's state is no
longer constant.  Slow products are differentiated with 4th-order time
stencils (one-sided at window edges) and spectral x-derivatives, gathered
at fixed localization index so patch switching never pollutes a stencil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from .cutoffs import AmplitudeCutoff, amplitude, build_cutoffs
from .fluxcore import eigen_fields
from .scheme import (FAMILIES, MINUS, PLUS, CrossSlice, FamilySlice, GridState,
                     SliceState, StepReport, compute_slice, nyquist_check)

_CENTRAL5 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FWD5 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_FWD5_OFF1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def _stencil(it, lo, hi):
    """(indices, weights) of the 4th-order d/dt stencil at slice it."""
    if it - 2 >= lo and it + 2 <= hi:
        return range(it - 2, it + 3), _CENTRAL5
    if it == lo:
        return range(lo, lo + 5), _FWD5
    if it == lo + 1:
        return range(lo, lo + 5), _FWD5_OFF1
    if it == hi:
        return range(hi, hi - 5, -1), -_FWD5
    if it == hi - 1:
        return range(hi, hi - 5, -1), -_FWD5_OFF1
    raise AssertionError("unreachable stencil position")


def _dx_spec(arr, nx):
    """Spectral x-derivative along axis 0 of (nx,) or (nx, 2) arrays."""
    k = 2.0 * np.pi * np.fft.rfftfreq(nx, d=1.0 / nx)
    spec = np.fft.rfft(arr, axis=0)
    if arr.ndim == 1:
        spec *= 1j * k
    else:
        spec *= (1j * k)[:, None]
    return np.fft.irfft(spec, n=nx, axis=0)


def _dx_rows(arr, nx):
    """Spectral x-derivative along axis 1 of stored (nt, nx[, 2]) arrays."""
    k = 2.0 * np.pi * np.fft.rfftfreq(nx, d=1.0 / nx)
    spec = np.fft.rfft(arr, axis=1)
    shape = (1, -1) + (1,) * (arr.ndim - 2)
    spec *= (1j * k).reshape(shape)
    return np.fft.irfft(spec, n=nx, axis=1)


@dataclass
class GridStepKit:
    """Precomputed slow fields for one grid-path step."""

    model: object
    sc: object
    sched: object
    n: int
    P: object
    u_delta: gridmod.Field      # mollified state
    E_delta: dict               # {family: Field}
    comm: gridmod.Field

    def __post_init__(self):
        self.lamp = self.sched.lam[self.n + 1]
        self.lam_n = self.sched.lam[self.n]
        lo, hi = self.u_delta.lo, self.u_delta.hi
        self.lo, self.hi = lo, hi
        nx = self.u_delta.grid.nx
        vals = self.u_delta.values[lo:hi + 1]
        df = self.model.df_at(vals)
        lam_m, lam_p, r_m, r_p = eigen_fields(df, self.sc.flips)
        self.lam_fields = {PLUS: lam_p, MINUS: lam_m}
        self.rho_fields = {PLUS: r_p, MINUS: r_m}
        bank = build_cutoffs(self.n, self.lam_n)
        self.bank = bank
        self.j0 = {}
        self.phi0 = {}
        self.phi1 = {}
        self.dphi0 = {}
        self.dphi1 = {}
        for k in FAMILIES:
            j0, p0, p1, d0, d1 = bank.phi_pair_with_derivative(
                self.lam_fields[k])
            self.j0[k], self.phi0[k], self.phi1[k] = j0, p0, p1
            self.dphi0[k], self.dphi1[k] = d0, d1
        cut = AmplitudeCutoff(self.sched.beta_cut, self.sched.gamma_cut)
        Fn = self.sched.F[self.n]
        self.a = {k: amplitude(self.E_delta[k].values[lo:hi + 1], Fn, cut)
                  for k in FAMILIES}
        self.mean = 0.5 * (lam_p + lam_m)
        # x-derivatives of the smooth primitive fields (spectral, rowwise);
        # composites with a fixed localization index are then differentiated
        # by the chain rule, never across a patch seam.
        self.dlam_dx = {k: _dx_rows(self.lam_fields[k], nx) for k in FAMILIES}
        self.drho_dx = {k: _dx_rows(self.rho_fields[k], nx) for k in FAMILIES}
        self.da_dx = {k: _dx_rows(self.a[k], nx) for k in FAMILIES}

    # -- fixed-index gathers ------------------------------------------------
    def _phi_fixed(self, k, row, jsel):
        j0 = self.j0[k][row]
        out = np.where(j0 == jsel, self.phi0[k][row], 0.0)
        return out + np.where(j0 + 1 == jsel, self.phi1[k][row], 0.0)

    def _par_product(self, k, row, jsel):
        """phi_jsel * a * rho on a stored row (relative index)."""
        phi = self._phi_fixed(k, row, jsel)
        return (phi * self.a[k][row])[:, None] * self.rho_fields[k][row]

    def _pair_product(self, k, row, jsel_a, jsel_b):
        return (self._phi_fixed(k, row, jsel_a) * self._phi_fixed(k, row, jsel_b)
                * self.a[k][row] ** 2)

    def _cross_product(self, row, jsel_p, jsel_m):
        return (self._phi_fixed(PLUS, row, jsel_p)
                * self._phi_fixed(MINUS, row, jsel_m)
                * self.a[PLUS][row] * self.a[MINUS][row])

    def _ddt(self, values_fn, it):
        """d/dt of a fixed-index slow product by the 4th-order stencil."""
        rel = it - self.lo
        idx, wts = _stencil(rel, 0, self.hi - self.lo)
        acc = None
        for i, w in zip(idx, wts):
            if w == 0.0:
                continue
            term = w * values_fn(i)
            acc = term if acc is None else acc + term
        return acc / self.u_delta.grid.dt

    def _phi_slot(self, k, rel, s):
        return self.phi0[k][rel] if s == 0 else self.phi1[k][rel]

    def _dphix_slot(self, k, rel, s):
        """Analytic x-derivative of phi_{j0+s} along the slice."""
        dphi = self.dphi0[k][rel] if s == 0 else self.dphi1[k][rel]
        return dphi * self.dlam_dx[k][rel]

    # -- slice assembly -------------------------------------------------------
    def slice_state(self, it):
        grid = self.u_delta.grid
        rel = it - self.lo
        fam = {}
        for k in FAMILIES:
            lam_slice = self.lam_fields[k][rel]
            j0 = self.j0[k][rel]
            a = self.a[k][rel]
            da = self.da_dx[k][rel]
            rho = self.rho_fields[k][rel]
            drho = self.drho_dx[k][rel]
            D_par, X_par = [], []
            for s in (0, 1):
                jsel = j0 + s
                phi = self._phi_slot(k, rel, s)
                dphix = self._dphix_slot(k, rel, s)
                X = (dphix * a)[:, None] * rho + (phi * da)[:, None] * rho \
                    + (phi * a)[:, None] * drho
                ddt = self._ddt(
                    lambda row, k=k, jsel=jsel: self._par_product(k, row, jsel),
                    it)
                D_par.append(ddt + lam_slice[:, None] * X)
                X_par.append(X)
            D_pair, X_pair = {}, {}
            for (sa, sb) in ((0, 0), (1, 1), (0, 1)):
                pa, pb = self._phi_slot(k, rel, sa), self._phi_slot(k, rel, sb)
                dpa, dpb = self._dphix_slot(k, rel, sa), self._dphix_slot(k, rel, sb)
                X = 2.0 * a * da * pa * pb + a * a * (dpa * pb + pa * dpb)
                ddt = self._ddt(
                    lambda row, k=k, ja=j0 + sa, jb=j0 + sb:
                        self._pair_product(k, row, ja, jb),
                    it)
                D_pair[(sa, sb)] = ddt + lam_slice * X
                X_pair[(sa, sb)] = X
            fam[k] = FamilySlice(
                a=a, lam=lam_slice, rho=rho,
                j=(j0, j0 + 1), phi=(self.phi0[k][rel], self.phi1[k][rel]),
                D_par=tuple(D_par), X_par=tuple(X_par),
                D_pair=D_pair, X_pair=X_pair, da_dx=da)
        mean_slice = self.mean[rel]
        Dc, Xc = {}, {}
        jp0 = self.j0[PLUS][rel]
        jm0 = self.j0[MINUS][rel]
        ap, am = self.a[PLUS][rel], self.a[MINUS][rel]
        dap, dam = self.da_dx[PLUS][rel], self.da_dx[MINUS][rel]
        for sp in (0, 1):
            for sm in (0, 1):
                pp = self._phi_slot(PLUS, rel, sp)
                pm = self._phi_slot(MINUS, rel, sm)
                dpp = self._dphix_slot(PLUS, rel, sp)
                dpm = self._dphix_slot(MINUS, rel, sm)
                X = ((dap * am + ap * dam) * pp * pm
                     + ap * am * (dpp * pm + pp * dpm))
                ddt = self._ddt(
                    lambda row, jp=jp0 + sp, jm=jm0 + sm:
                        self._cross_product(row, jp, jm),
                    it)
                Dc[(sp, sm)] = ddt + mean_slice * X
                Xc[(sp, sm)] = X
        cross = CrossSlice(mean=mean_slice, D_pair=Dc, X_pair=Xc)
        return SliceState(
            t=grid.t[it], x=grid.x,
            u_delta=self.u_delta.values[it],
            E_delta={k: self.E_delta[k].values[it] for k in FAMILIES},
            comm=self.comm.values[it],
            fam=fam, cross=cross)

    def compute(self, it):
        return compute_slice(self.model, self.sc, self.lamp, self.lam_n,
                             self.P, self.slice_state(it))


def mollify_state(state, model, delta, grid):
    """Mollified state, error levels, and the flux commutator field."""
    moll = gridmod.Mollifier(delta=delta, grid=grid)
    u_delta = gridmod.mollify(state.u, moll)
    E_delta = {k: gridmod.mollify(state.E[k], moll) for k in FAMILIES}
    f_of_u = gridmod.Field(grid, model.f_at(state.u.values),
                           state.u.lo, state.u.hi)
    f_moll = gridmod.mollify(f_of_u, moll)
    comm_vals = np.full_like(f_moll.values, np.nan)
    lo, hi = u_delta.lo, u_delta.hi
    comm_vals[lo:hi + 1] = (f_moll.values[lo:hi + 1]
                            - model.f_at(u_delta.values[lo:hi + 1]))
    comm = gridmod.Field(grid, comm_vals, lo, hi)
    return u_delta, E_delta, comm


def step_grid(state, sched, grid, phase, model, sc):
    """Advance a grid state one level; returns (state, report, slice norms)."""
    n = state.n
    nyquist_check(grid, sched.lam[n + 1])
    model.check_domain(state.u.valid_values())
    delta = sched.delta[n] if n < len(sched.delta) else 0.0
    u_delta, E_delta, comm = mollify_state(state, model, delta, grid)
    kit = GridStepKit(model=model, sc=sc, sched=sched, n=n, P=phase,
                      u_delta=u_delta, E_delta=E_delta, comm=comm)
    lo, hi = kit.lo, kit.hi
    nt_total, nx = grid.nt_total, grid.nx
    u_next = np.full((nt_total, nx, 2), np.nan)
    E_next = {k: np.full((nt_total, nx), np.nan) for k in FAMILIES}
    w_vals = {k: np.full((nt_total, nx), np.nan) for k in FAMILIES}
    norms = {}
    for it in range(lo, hi + 1):
        out = kit.compute(it)
        u_next[it] = out["u_next"]
        for k in FAMILIES:
            E_next[k][it] = out["E_next"][k]
            w_vals[k][it] = out["w"][k]
        for name in ("R1", "R2"):
            for k in FAMILIES:
                key = f"{name}{'+' if k > 0 else '-'}"
                norms[key] = max(norms.get(key, 0.0),
                                 float(np.max(np.abs(out[name][k]))))
        for key_r3, val in out["R3"].items():
            key = f"R3{key_r3}"
            norms[key] = max(norms.get(key, 0.0), float(np.max(np.abs(val))))
        for name in ("R4", "R5", "Err3"):
            for kk, val in out[name].items():
                key = f"{name}{kk}"
                norms[key] = max(norms.get(key, 0.0), float(np.max(np.abs(val))))
        for name in ("Err1", "Err2", "W_for_E", "v"):
            norms[name] = max(norms.get(name, 0.0),
                              float(np.max(np.abs(out[name]))))
    new_state = GridState(
        n=n + 1,
        u=gridmod.Field(grid, u_next, lo, hi),
        E={k: gridmod.Field(grid, E_next[k], lo, hi) for k in FAMILIES})
    report = _grid_report(new_state, w_vals, norms, sched, n, u_delta, E_delta)
    return new_state, report, norms


def _grid_report(state, w_vals, norms, sched, n, u_delta, E_delta):
    lo, hi = state.u.lo, state.u.hi
    Fn = sched.F[n]
    F_next = sched.F[n + 1] if n + 1 < len(sched.F) else Fn * sched.r ** 2
    E_min, E_max, w_max = {}, {}, {}
    for k in FAMILIES:
        block = state.E[k].values[lo:hi + 1]
        E_min[k] = float(np.min(block))
        E_max[k] = float(np.max(block))
        w_max[k] = float(np.nanmax(np.abs(w_vals[k][lo:hi + 1])))
    band = (sched.c_q * F_next, F_next)
    band_ok = all(band[0] <= E_min[k] and E_max[k] <= band[1] for k in FAMILIES)
    positivity_ok = all(E_min[k] > 0.0 for k in FAMILIES)
    u_max = float(np.max(np.abs(state.u.values[lo:hi + 1])))
    inc = norms.get("v", 0.0)
    sqf = sched.sqrtF_cumsum(n)
    # share of each depletion regime over the mollified error level
    cases = {}
    for k in FAMILIES:
        e_over_f = E_delta[k].values[lo:hi + 1] / Fn
        total = e_over_f.size
        cases[f"case1{'+' if k > 0 else '-'}"] = float(
            np.count_nonzero(e_over_f <= sched.beta_cut) / total)
        cases[f"case2{'+' if k > 0 else '-'}"] = float(
            np.count_nonzero(e_over_f >= sched.gamma_cut) / total)
    notes = []
    if not band_ok:
        notes.append("band-violation")
    if not positivity_ok:
        notes.append("positivity-violation")
    return StepReport(
        n_next=n + 1, F_next=F_next, band=band, E_min=E_min, E_max=E_max,
        band_ok=band_ok, positivity_ok=positivity_ok, u_max=u_max,
        u_bound_ok=u_max <= 1.0, w_max=w_max,
        W_max=norms.get("W_for_E", 0.0), increment_max=inc,
        cstar_implied=inc / math.sqrt(Fn),
        c0_implied=max(w_max.values()) / (Fn * sqf) if Fn * sqf else math.inf,
        case_fractions=cases, notes=notes)


def materialize(lazy_state, grid):
    """Sample a closed-form level state onto grid fields."""
    nt_total, nx = grid.nt_total, grid.nx
    u_vals = np.empty((nt_total, nx, 2))
    E_vals = {k: np.empty((nt_total, nx)) for k in FAMILIES}
    x = grid.x
    for it in range(nt_total):
        out = lazy_state.eval_all(grid.t[it], x)
        u_vals[it] = out["u_next"]
        for k in FAMILIES:
            E_vals[k][it] = out["E_next"][k]
    return GridState(n=lazy_state.n,
                     u=gridmod.Field(grid, u_vals),
                     E={k: gridmod.Field(grid, E_vals[k]) for k in FAMILIES})


def run_relaxed(model, sc, sched, grid, phase, n_steps):
    """Multi-step relaxed iteration from the flat subsolution.

    The first step is exact (constant slow data, materialized afterwards);
    later steps run on the grid.  Returns per-level states and reports.
    """
    from .scheme import ConstState, step_const

    state0 = ConstState(n=0, u=np.zeros(2),
                        E={PLUS: sched.alpha0, MINUS: sched.alpha0})
    lazy1, rep1 = step_const(state0, sched, grid, phase, model, sc)
    states = [state0, materialize(lazy1, grid)]
    reports = [rep1]
    ledgers = [None]
    for n in range(1, n_steps):
        new_state, rep, norms = step_grid(states[-1], sched, grid, phase,
                                          model, sc)
        states.append(new_state)
        reports.append(rep)
        ledgers.append(norms)
    return states, reports, ledgers
