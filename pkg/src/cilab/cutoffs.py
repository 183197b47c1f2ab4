"""Smooth localization machinery: speed cutoff bank, amplitude cutoff,
and the temporal phase functions used to dephase paired runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

POU_TOL = 1e-12


def smoothstep5(x):
    """Quintic smoothstep: 0 below 0, 1 above 1, C^2 with bounded curvature."""
    x = np.asarray(x, dtype=float)
    y = np.clip(x, 0.0, 1.0)
    out = y * y * y * (10.0 + y * (-15.0 + 6.0 * y))
    out = np.where(x <= 0.0, 0.0, out)
    out = np.where(x >= 1.0, 1.0, out)
    return out


def smoothstep5_d1(x):
    x = np.asarray(x, dtype=float)
    y = np.clip(x, 0.0, 1.0)
    out = 30.0 * y * y * (1.0 - y) ** 2
    return np.where((x <= 0.0) | (x >= 1.0), 0.0, out)


def smoothstep5_d2(x):
    x = np.asarray(x, dtype=float)
    y = np.clip(x, 0.0, 1.0)
    out = 60.0 * y * (1.0 - y) * (1.0 - 2.0 * y)
    return np.where((x <= 0.0) | (x >= 1.0), 0.0, out)


def smooth_transition(x):
    """C-infinity monotone transition: exactly 0 for x<=0, 1 for x>=1."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(arr)
    out[arr >= 1.0] = 1.0
    mid = (arr > 0.0) & (arr < 1.0)
    xm = arr[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a / (a + b)
    return out.reshape(np.shape(x)) if np.ndim(x) else out[0]


def smooth_transition_d1(x):
    """Closed-form derivative of the transition."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(arr)
    mid = (arr > 0.0) & (arr < 1.0)
    xm = arr[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a * b * (1.0 / xm ** 2 + 1.0 / (1.0 - xm) ** 2) / (a + b) ** 2
    return out.reshape(np.shape(x)) if np.ndim(x) else out[0]


def bump_h(s):
    """Even bump: 1 on |s| <= 1/3, 0 on |s| >= 2/3, smooth in between."""
    s = np.abs(np.asarray(s, dtype=float))
    return smooth_transition((2.0 / 3.0 - s) * 3.0)


def bump_h_d1(s):
    s = np.asarray(s, dtype=float)
    return -3.0 * np.sign(s) * smooth_transition_d1((2.0 / 3.0 - np.abs(s)) * 3.0)


@dataclass(frozen=True)
class SpeedCutoffs:
    """Squared partition of unity over localized wave speeds at one level.

    phi_j(y) = h(lam*y - j) / sqrt(sum_k h(lam*y - k)^2); at any y at most
    two consecutive indices are active.
    """

    level: int
    lam: float  # localization frequency lambda_n

    def slot_indices(self, y):
        """Lowest possibly-active index j0 at each y; active set is {j0, j0+1}."""
        y = np.asarray(y, dtype=float)
        return np.ceil(self.lam * y - 2.0 / 3.0).astype(np.int64)

    def phi_pair(self, y):
        """(j0, phi_{j0}(y), phi_{j0+1}(y)) vectorized over y."""
        y = np.asarray(y, dtype=float)
        j0 = self.slot_indices(y)
        h0 = bump_h(self.lam * y - j0)
        h1 = bump_h(self.lam * y - (j0 + 1))
        norm = np.sqrt(h0 * h0 + h1 * h1)
        return j0, h0 / norm, h1 / norm

    def phi_pair_with_derivative(self, y):
        """Cutoff pair plus closed-form d(phi)/dy (needed so products with
        a fixed index can be differentiated without crossing patch seams)."""
        y = np.asarray(y, dtype=float)
        j0 = self.slot_indices(y)
        s0 = self.lam * y - j0
        s1 = self.lam * y - (j0 + 1)
        h0, h1 = bump_h(s0), bump_h(s1)
        d0, d1 = self.lam * bump_h_d1(s0), self.lam * bump_h_d1(s1)
        n2 = h0 * h0 + h1 * h1
        norm = np.sqrt(n2)
        dn = (h0 * d0 + h1 * d1) / norm
        dphi0 = (d0 * norm - h0 * dn) / n2
        dphi1 = (d1 * norm - h1 * dn) / n2
        return j0, h0 / norm, h1 / norm, dphi0, dphi1

    def phi(self, j, y):
        """phi_j(y) for a fixed index j (vectorized over y)."""
        j0, p0, p1 = self.phi_pair(y)
        out = np.where(j0 == j, p0, 0.0)
        return np.where(j0 + 1 == j, p1, out)

    def pou_defect(self, y):
        _, p0, p1 = self.phi_pair(y)
        return np.abs(p0 * p0 + p1 * p1 - 1.0)

    def localized_speed(self, j):
        """Frozen transport speed of patch j."""
        return np.asarray(j, dtype=float) / self.lam

    def support_halfwidth(self):
        return (2.0 / 3.0) / self.lam


def build_cutoffs(level, lam):
    if lam <= 0:
        raise ValueError("localization frequency must be positive")
    return SpeedCutoffs(level=level, lam=float(lam))


def localized_speed(bank, j):
    return bank.localized_speed(j)


# ---------------------------------------------------------------------------
# Amplitude cutoff

@dataclass(frozen=True)
class AmplitudeCutoff:
    """Smooth nondecreasing ramp: 0 below beta, 1 above gamma."""

    beta: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.beta < self.gamma < 1.0:
            raise ValueError("need 0 < beta < gamma < 1")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return smooth_transition((s - self.beta) / (self.gamma - self.beta))


def amplitude(e_moll, f_n, cutoff):
    """Oscillation strength from the mollified error level.

    a^2 = 2 * phi_cut(E/F)^2 * E pointwise; negative error levels (possible
    once the scheme has left its validity regime) are clamped to zero.
    """
    e = np.asarray(e_moll, dtype=float)
    phi = cutoff(e / f_n)
    return np.sqrt(2.0 * phi * phi * np.maximum(e, 0.0))


# ---------------------------------------------------------------------------
# Temporal phase functions

@dataclass(frozen=True)
class PhaseFn:
    """C^2 temporal phase: either identically zero or the pi-ramp psi."""

    tag: str  # "zero" | "psi"

    def __call__(self, t):
        if self.tag == "zero":
            return np.zeros_like(np.asarray(t, dtype=float))
        return psi_value(t)

    def d1(self, t):
        if self.tag == "zero":
            return np.zeros_like(np.asarray(t, dtype=float))
        return psi_d1(t)

    def d2(self, t):
        if self.tag == "zero":
            return np.zeros_like(np.asarray(t, dtype=float))
        return psi_d2(t)


def psi_value(t):
    """0 for t <= -1, pi for t >= -1/2, quintic-smoothstep ramp between."""
    t = np.asarray(t, dtype=float)
    return math.pi * smoothstep5((t + 1.0) * 2.0)


def psi_d1(t):
    t = np.asarray(t, dtype=float)
    return 2.0 * math.pi * smoothstep5_d1((t + 1.0) * 2.0)


def psi_d2(t):
    t = np.asarray(t, dtype=float)
    return 4.0 * math.pi * smoothstep5_d2((t + 1.0) * 2.0)


def make_psi():
    return PhaseFn(tag="psi")


def zero_phase():
    return PhaseFn(tag="zero")
