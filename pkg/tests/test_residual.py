import math

import numpy as np
import pytest

from cilab.cutoffs import zero_phase
from cilab.fluxcore import cramer_coefficients
from cilab.grid import SpaceTimeGrid
from cilab.residual import (assemble_remainders, pde_residual_check_const,
                            refinement_passes, second_cancellation_residual,
                            still_oscillation_residual, update_E,
                            cramer_project)
from cilab.scheme import MINUS, PLUS, init_subsolution, step_const

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def mini_step(example_model, example_sc, mini_sched, mini_grid):
    state0 = init_subsolution(mini_sched, example_sc)
    state1, rep = step_const(state0, mini_sched, mini_grid, zero_phase(),
                             example_model, example_sc)
    return state1, rep


def test_cramer_unit_vectors(example_sc):
    wp, wm = cramer_project(example_sc.b_plus, example_sc)
    assert abs(wp - 1.0) <= 1e-12 and abs(wm) <= 1e-12
    wp, wm = cramer_project(example_sc.b_minus, example_sc)
    assert abs(wp) <= 1e-12 and abs(wm - 1.0) <= 1e-12


def test_remainders_vanish_at_zero_amplitude(example_model, example_sc,
                                             mini_sched, mini_grid):
    from cilab.scheme import ConstState, step_const as sc_step
    tiny = 0.1 * mini_sched.beta_cut * mini_sched.F[0]
    state0 = ConstState(n=0, u=np.zeros(2), E={PLUS: tiny, MINUS: tiny})
    state1, rep = sc_step(state0, mini_sched, mini_grid, zero_phase(),
                          example_model, example_sc)
    ledger = assemble_remainders(state1.kit, mini_grid, stride=8)
    for entry in ledger.entries:
        assert entry.measured <= 1e-14, entry.name
    assert rep.W_max <= 1e-14
    # pure mollification of a constant state: E unchanged
    assert abs(rep.E_min[PLUS] - tiny) <= 1e-15
    assert abs(rep.E_max[PLUS] - tiny) <= 1e-15


def test_r2_vanishes_at_flat_state(mini_step, mini_grid):
    state1, _ = mini_step
    out = state1.kit.compute(-0.4, mini_grid.x)
    for k in (PLUS, MINUS):
        assert np.max(np.abs(out["R2"][k])) <= 1e-14


def test_err1_zero_for_quadratic_flux(mini_step, mini_grid):
    state1, _ = mini_step
    out = state1.kit.compute(0.1, mini_grid.x)
    assert np.max(np.abs(out["Err1"])) <= 1e-12


def test_ledger_bounds_hold(mini_step, mini_grid):
    state1, _ = mini_step
    ledger = assemble_remainders(state1.kit, mini_grid, stride=4)
    failing = [e.name for e in ledger.entries if not e.ok]
    assert not failing, ledger.to_json()
    assert ledger.W_max > 0


def test_update_E_case1():
    from cilab.schedule import ParamSchedule
    sched = ParamSchedule(eps_cond=0.1, eps_amp=0.01, r=0.8, c_q=0.2,
                          beta_cut=0.5, gamma_cut=0.55, C0=0.1, Cstar=2.0,
                          lam=[TWO_PI, TWO_PI * 32], delta=[0, 0],
                          F=[0.05, 0.032], mode="relaxed")
    E = np.full(16, 0.3 * 0.05)  # below beta F: no depletion
    w = np.full(16, 1e-4)
    E1, rep = update_E(E, np.zeros(16), w, sched, 0)
    assert np.allclose(E1, E + w, atol=0)
    assert rep.fractions["case1"] == 1.0
    assert rep.positivity_ok


def test_update_E_case2_halving():
    from cilab.schedule import ParamSchedule
    sched = ParamSchedule(eps_cond=0.1, eps_amp=0.01, r=0.8, c_q=0.2,
                          beta_cut=0.5, gamma_cut=0.55, C0=0.1, Cstar=2.0,
                          lam=[TWO_PI, TWO_PI * 32], delta=[0, 0],
                          F=[0.05, 0.032], mode="relaxed")
    E = np.full(16, 0.05)
    E1, rep = update_E(E, 0.5 * E, np.zeros(16), sched, 0)
    assert np.allclose(E1, 0.5 * E, atol=0)
    assert rep.fractions["case2"] == 1.0


def test_update_E_positivity_flag():
    from cilab.schedule import ParamSchedule
    sched = ParamSchedule(eps_cond=0.1, eps_amp=0.01, r=0.8, c_q=0.2,
                          beta_cut=0.5, gamma_cut=0.55, C0=0.1, Cstar=2.0,
                          lam=[TWO_PI, TWO_PI * 32], delta=[0, 0],
                          F=[0.05, 0.032], mode="relaxed")
    E = np.full(4, 0.05)
    E1, rep = update_E(E, 0.5 * E, np.full(4, -0.05), sched, 0)
    assert not rep.positivity_ok


def test_corrector_algebra_mini(mini_step, mini_grid):
    state1, _ = mini_step
    x = mini_grid.x
    worst_still = worst_cancel = 0.0
    for t in np.linspace(-0.95, 0.2, 9):
        worst_still = max(worst_still, float(np.max(np.abs(
            still_oscillation_residual(state1.kit, t, x)))))
        worst_cancel = max(worst_cancel, float(np.max(np.abs(
            second_cancellation_residual(state1.kit, t, x)))))
    assert worst_still <= 1e-10
    assert worst_cancel <= 1e-8


def test_level_identity_residual_mini(mini_step, example_sc, example_model,
                                      mini_grid):
    state1, _ = mini_step
    rep = pde_residual_check_const(state1, example_sc, example_model,
                                   mini_grid, stride=2)
    assert rep.max_norm <= 1e-9


def test_refinement_rule():
    assert refinement_passes(1e-3, 1e-4)          # honest factor 10
    assert not refinement_passes(1e-3, 5e-4)      # only factor 2
    assert refinement_passes(1e-12, 5e-13)        # rounding floor
