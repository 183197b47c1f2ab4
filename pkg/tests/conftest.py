import math

import numpy as np
import pytest

from cilab.fluxcore import structure_constants
from cilab.fluxdsl import load_flux
from cilab.grid import SpaceTimeGrid
from cilab.schedule import ParamSchedule

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def example_model():
    return load_flux("example61")


@pytest.fixture(scope="session")
def example_sc(example_model):
    return structure_constants(example_model)


@pytest.fixture(scope="session")
def mini_sched():
    """Small-frequency schedule for fast identity tests (not strict-legal)."""
    return ParamSchedule(eps_cond=0.1, eps_amp=0.014, r=0.8, c_q=0.2,
                         beta_cut=0.5, gamma_cut=0.55, C0=0.0626, Cstar=2.0,
                         lam=[TWO_PI, TWO_PI * 32], delta=[1e-4, 1e-5],
                         F=[0.05, 0.032], mode="relaxed", K=32)


@pytest.fixture(scope="session")
def mini_grid():
    return SpaceTimeGrid(nx=512, nt=65, t0=-1.0, t1=0.25, pad_t=0.0)


def random_hyperbolic_flux(rng, radius=0.8):
    """Seeded random polynomial flux, strictly hyperbolic at 0 with
    nonzero integral-curve curvatures."""
    from cilab.fluxdsl import differentiate, parse_flux
    from cilab.fluxcore import (NotStrictlyHyperbolicError, canonical_flips,
                                _kappa_fd)
    from fractions import Fraction

    while True:
        # linear part with a guaranteed positive discriminant
        a, b, c, d = (Fraction(int(rng.integers(-8, 9)), 4) for _ in range(4))
        disc = (a - d) ** 2 + 4 * b * c
        if disc <= Fraction(1, 2):
            continue
        terms = {1: [], 2: []}
        lin = {1: (a, b), 2: (c, d)}
        for comp in (1, 2):
            cu, cv = lin[comp]
            if cu:
                terms[comp].append(f"({cu})*u")
            if cv:
                terms[comp].append(f"({cv})*v")
            for mono in ("u^2", "u*v", "v^2"):
                q = Fraction(int(rng.integers(-6, 7)), 4)
                if q:
                    terms[comp].append(f"({q})*{mono}")
        txt1 = "+".join(terms[1]) or "0"
        txt2 = "+".join(terms[2]) or "0"
        text = f"({txt1}, {txt2})"
        try:
            model = differentiate(parse_flux(text), radius=radius)
            flips = canonical_flips(model)
            kp = _kappa_fd(model, +1, flips)
            km = _kappa_fd(model, -1, flips)
        except (NotStrictlyHyperbolicError, ArithmeticError):
            continue
        if min(abs(kp), abs(km)) < 5e-2:
            continue
        return model
