import math

import numpy as np
import pytest

from cilab.cutoffs import build_cutoffs, make_psi, zero_phase
from cilab.scheme import (MINUS, PLUS, ConstState, ConstStepKit,
                          LazyCorrectorState, ResolutionError, _zero_fam,
                          compute_slice_sonly, init_subsolution, step_const)
from cilab.grid import SpaceTimeGrid

TWO_PI = 2.0 * math.pi


def test_init_subsolution(mini_sched, example_sc):
    state = init_subsolution(mini_sched, example_sc)
    assert state.n == 0
    assert np.all(state.u == 0.0)
    assert state.E[PLUS] == mini_sched.alpha0 == mini_sched.F[0]


def test_subsolution_residual_exact(mini_sched, example_sc, example_model):
    # all-constant subsolution: flux side is constant, residual identically 0
    state = init_subsolution(mini_sched, example_sc)
    flux = (example_model.jet(state.u).f
            + state.E[MINUS] * example_sc.b_minus
            + state.E[PLUS] * example_sc.b_plus)
    assert flux.shape == (2,)  # constant in space and time: derivative zero


def test_amplitude_cutoff_at_band_top(mini_sched):
    from cilab.cutoffs import AmplitudeCutoff
    cut = AmplitudeCutoff(mini_sched.beta_cut, mini_sched.gamma_cut)
    assert cut(1.0) == 1.0


def test_single_surviving_localization_index(example_model, example_sc,
                                             mini_sched):
    kit = ConstStepKit(model=example_model, sc=example_sc, sched=mini_sched,
                       n=0, P=zero_phase(), u0=np.zeros(2),
                       E0={PLUS: mini_sched.alpha0, MINUS: mini_sched.alpha0})
    for k in (PLUS, MINUS):
        fam = kit.fam_const[k]
        actives = [s for s in (0, 1) if fam.phi[s] > 0.0]
        assert len(actives) == 1
        assert fam.phi[actives[0]] == 1.0
        # localized speed within the support halfwidth of the exact speed
        j = fam.j[actives[0]]
        assert abs(fam.lam - j / mini_sched.lam[0]) <= (2 / 3) / mini_sched.lam[0]


def test_v1_is_single_cosine_at_flat_state(example_model, example_sc,
                                           mini_sched):
    kit = ConstStepKit(model=example_model, sc=example_sc, sched=mini_sched,
                       n=0, P=zero_phase(), u0=np.zeros(2),
                       E0={PLUS: mini_sched.alpha0, MINUS: mini_sched.alpha0})
    x = np.linspace(0.0, 1.0, 257)[:-1]
    t = -0.37
    out = kit.compute(t, x)
    a = math.sqrt(2.0 * mini_sched.alpha0)
    lamp = mini_sched.lam[1]
    recon = 0.0
    for k in (PLUS, MINUS):
        fam = kit.fam_const[k]
        s = 0 if fam.phi[0] > 0 else 1
        theta = lamp * (x - (fam.j[s] / mini_sched.lam[0]) * t)
        recon = recon + a * np.cos(theta)[:, None] * np.asarray(fam.rho)
    assert np.max(np.abs(out["v1"] - recon)) <= 1e-12


def test_v1_x_mean_vanishes(example_model, example_sc, mini_sched):
    kit = ConstStepKit(model=example_model, sc=example_sc, sched=mini_sched,
                       n=0, P=zero_phase(), u0=np.zeros(2),
                       E0={PLUS: mini_sched.alpha0, MINUS: mini_sched.alpha0})
    nx = 4096
    x = np.arange(nx) / nx
    out = kit.compute(0.13, x)
    assert np.max(np.abs(out["v1"].mean(axis=0))) <= 1e-10


def test_zero_amplitude_gives_zero_waves(example_model, example_sc,
                                         mini_sched):
    # error level far below the lower cutoff: amplitude vanishes
    E0 = {PLUS: 0.1 * mini_sched.F[0], MINUS: 0.1 * mini_sched.F[0]}
    kit = ConstStepKit(model=example_model, sc=example_sc, sched=mini_sched,
                       n=0, P=zero_phase(), u0=np.zeros(2), E0=E0)
    x = np.arange(64) / 64.0
    out = kit.compute(-0.2, x)
    assert np.max(np.abs(out["v1"])) == 0.0
    assert np.max(np.abs(out["v2"])) == 0.0
    for key in ("R1", "R2"):
        for k in (PLUS, MINUS):
            assert np.max(np.abs(out[key][k])) == 0.0
    assert np.max(np.abs(out["Err1"])) <= 1e-15
    assert np.max(np.abs(out["Err2"])) <= 1e-15


def test_v2_reduces_to_doubled_frequency_terms(example_model, example_sc,
                                               mini_sched):
    """Single active index per family: no near-diagonal or resonance terms,
    only the doubled-phase carriers and the standing cross wave remain."""
    kit = ConstStepKit(model=example_model, sc=example_sc, sched=mini_sched,
                       n=0, P=zero_phase(), u0=np.zeros(2),
                       E0={PLUS: mini_sched.alpha0, MINUS: mini_sched.alpha0})
    x = np.arange(512) / 512.0
    t = 0.05
    out = kit.compute(t, x)
    a2 = 2.0 * mini_sched.alpha0
    lamp = mini_sched.lam[1]
    sc = example_sc
    recon = 0.0
    for k, B in ((PLUS, sc.B_plus), (MINUS, sc.B_minus)):
        fam = kit.fam_const[k]
        s = 0 if fam.phi[0] > 0 else 1
        theta = lamp * (x - (fam.j[s] / mini_sched.lam[0]) * t)
        recon = recon + 0.25 * a2 * np.cos(2 * theta)[:, None] * B
    fam_p, fam_m = kit.fam_const[PLUS], kit.fam_const[MINUS]
    sp = 0 if fam_p.phi[0] > 0 else 1
    sm = 0 if fam_m.phi[0] > 0 else 1
    theta_sum = (lamp * (x - (fam_p.j[sp] / mini_sched.lam[0]) * t)
                 + lamp * (x - (fam_m.j[sm] / mini_sched.lam[0]) * t))
    recon = recon - 2.0 * 0.25 * a2 * np.cos(theta_sum)[:, None] * sc.Dvec
    assert np.max(np.abs(out["v2"] - recon)) <= 1e-12


def test_depletion_case2_identity(example_model, example_sc, mini_sched,
                                  mini_grid):
    """Full-strength regime with vanishing interaction residue: the updated
    error level minus the projected remainder equals exactly half of the
    previous one."""
    state0 = init_subsolution(mini_sched, example_sc)
    state1, _ = step_const(state0, mini_sched, mini_grid, zero_phase(),
                           example_model, example_sc)
    x = mini_grid.x
    for t in (-0.8, -0.1, 0.2):
        out = state1.kit.compute(t, x)
        for k in (PLUS, MINUS):
            lhs = out["E_next"][k] - out["w"][k]
            assert np.max(np.abs(lhs - 0.5 * mini_sched.alpha0)) <= 1e-12


def test_phase_flip_negates_first_wave(example_model, example_sc, mini_sched):
    """At times where the ramp sits at pi, the oscillatory wave of the
    dephased run is the exact negation of the straight run's."""
    kits = {}
    for tag, P in (("zero", zero_phase()), ("psi", make_psi())):
        kits[tag] = ConstStepKit(model=example_model, sc=example_sc,
                                 sched=mini_sched, n=0, P=P, u0=np.zeros(2),
                                 E0={PLUS: mini_sched.alpha0,
                                     MINUS: mini_sched.alpha0})
    x = np.arange(256) / 256.0
    for t in (-0.25, 0.0, 0.2):
        v1a = kits["zero"].compute(t, x)["v1"]
        v1b = kits["psi"].compute(t, x)["v1"]
        assert np.max(np.abs(v1a + v1b)) <= 1e-12


def test_s_fields_vanish_for_example(example_sc, mini_sched):
    bank = build_cutoffs(0, mini_sched.lam[0])
    fam = {k: _zero_fam(0.1, 0.0, np.array([1.0, 0.0]), 3, 0.7,
                        math.sqrt(1 - 0.49)) for k in (PLUS, MINUS)}
    from cilab.scheme import SliceState, CrossSlice
    st = SliceState(t=0.1, x=np.arange(32) / 32.0, u_delta=np.zeros(2),
                    E_delta={PLUS: 1.0, MINUS: 1.0}, comm=np.zeros(2),
                    fam=fam, cross=None)
    s = compute_slice_sonly(example_sc, mini_sched.lam[1], mini_sched.lam[0],
                            zero_phase(), st)
    for k in (PLUS, MINUS):
        assert np.max(np.abs(s[k])) <= 1e-9


def test_s_fields_bounded_with_synthetic_coefficients(example_sc, mini_sched):
    import dataclasses
    sc = dataclasses.replace(example_sc)
    sc.alpha_plus = 0.1
    sc.alpha_minus = 0.0
    sc.beta_plus = 0.0
    sc.beta_minus = 0.0
    phi0 = math.sqrt(0.5)
    fam = {k: _zero_fam(0.1, 0.0, np.array([1.0, 0.0]), 3, phi0, phi0)
           for k in (PLUS, MINUS)}
    from cilab.scheme import SliceState
    st = SliceState(t=0.07, x=np.arange(128) / 128.0, u_delta=np.zeros(2),
                    E_delta={PLUS: 1.0, MINUS: 1.0}, comm=np.zeros(2),
                    fam=fam, cross=None)
    s = compute_slice_sonly(sc, mini_sched.lam[1], mini_sched.lam[0],
                            zero_phase(), st)
    # overlap product phi_i phi_j <= 1/2, two ordered pairs
    assert np.max(np.abs(s[PLUS])) <= 0.1 + 1e-12
    assert np.max(np.abs(s[PLUS])) > 0.01
    assert np.max(np.abs(s[MINUS])) <= 1e-15


def test_pou_on_speed_grid(example_model, example_sc, mini_sched):
    bank = build_cutoffs(0, mini_sched.lam[0])
    rng = np.random.default_rng(0)
    y = rng.uniform(-2, 2, size=100_000)
    assert float(np.max(bank.pou_defect(y))) <= 1e-12


def test_resolution_guard(example_model, example_sc, mini_sched):
    grid = SpaceTimeGrid(nx=16, nt=9, t0=0.0, t1=0.1)
    state0 = init_subsolution(mini_sched, example_sc)
    with pytest.raises(ResolutionError):
        step_const(state0, mini_sched, grid, zero_phase(), example_model,
                   example_sc)


def test_step_report_contents(example_model, example_sc, mini_sched,
                              mini_grid):
    state0 = init_subsolution(mini_sched, example_sc)
    state1, rep = step_const(state0, mini_sched, mini_grid, zero_phase(),
                             example_model, example_sc)
    assert isinstance(state1, LazyCorrectorState)
    assert state1.n == 1
    assert rep.u_bound_ok
    assert rep.increment_max <= rep.cstar_implied * math.sqrt(mini_sched.F[0]) + 1e-12
    assert rep.W_max > 0.0
    d = rep.to_dict()
    assert set(d) >= {"band", "E_min", "E_max", "w_max", "notes"}
