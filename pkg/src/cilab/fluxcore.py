"""Pointwise differential geometry of a 2x2 flux.

Closed-form eigendecomposition of the flux Jacobian, integral-curve
curvatures at the origin (computed two independent ways), and the full set
of structure constants that govern how the construction projects and
cancels errors on the (b-, b+) carrier basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DISC_TOL = 1e-12
FD_STEP = 1e-4       # 4th-order central differences of the frame at 0
ODE_STEP = 1e-4      # integral-curve oracle step
KAPPA_AGREE_TOL = 1e-6
SOLVE_RESIDUAL_TOL = 1e-12


def _central4(fn, h):
    """4th-order central difference of a vector function of one variable."""
    return (-fn(2 * h) + 8.0 * fn(h) - 8.0 * fn(-h) + fn(-2 * h)) / (12.0 * h)


class NotStrictlyHyperbolicError(ValueError):
    """Jacobian discriminant not positive beyond tolerance."""


class SingularSystemError(ValueError):
    """A structure-constant linear solve is singular beyond tolerance."""


@dataclass(frozen=True)
class EigenFrame:
    lambda_minus: float
    lambda_plus: float
    r_minus: np.ndarray
    r_plus: np.ndarray
    l_minus: np.ndarray
    l_plus: np.ndarray

    def r(self, sign):
        return self.r_plus if sign > 0 else self.r_minus

    def l(self, sign):
        return self.l_plus if sign > 0 else self.l_minus

    def lam(self, sign):
        return self.lambda_plus if sign > 0 else self.lambda_minus


@dataclass(frozen=True)
class ConditionReport:
    eps: float
    holds: bool
    kappas_positive: bool
    margin_minus: float  # lhs/rhs for the minus-family inequality
    margin_plus: float


@dataclass
class StructureConstants:
    delta_lambda: float
    area: float
    p0: float
    kappa_minus: float
    kappa_plus: float
    b_minus: np.ndarray
    b_plus: np.ndarray
    d: np.ndarray
    btilde_minus: np.ndarray
    btilde_plus: np.ndarray
    B_minus: np.ndarray
    B_plus: np.ndarray
    Dvec: np.ndarray
    alpha_minus: float
    alpha_plus: float
    beta_minus: float
    beta_plus: float
    g_minus: float        # (r- . grad Lambda-)(0)
    g_plus: float
    lhs_minus: float      # |g-| vs eps * kappa+ dL / A
    lhs_plus: float       # |g+| vs eps * kappa- dL / A
    eps_min: float        # smallest eps in (0,1) satisfying both bounds
    frame: EigenFrame = None
    flips: tuple = (False, False)   # (flip_plus, flip_minus) vs the base sign rule
    det_b: float = 0.0

    def b(self, sign):
        return self.b_plus if sign > 0 else self.b_minus

    def kappa(self, sign):
        return self.kappa_plus if sign > 0 else self.kappa_minus


# ---------------------------------------------------------------------------
# Eigen decomposition

def _eigvec(df, lam):
    # (df - lam I) r = 0; pick the better-conditioned row complement
    c1 = np.array([df[0, 1], lam - df[0, 0]])
    c2 = np.array([lam - df[1, 1], df[1, 0]])
    r = c1 if c1 @ c1 >= c2 @ c2 else c2
    r = r / math.sqrt(r @ r)
    # base orientation: second component positive, ties broken by the first
    if r[1] < 0 or (r[1] == 0 and r[0] < 0):
        r = -r
    return r


def eigen_frame(jet_or_df, flips=(False, False)):
    """Closed-form ordered eigendecomposition of a 2x2 Jacobian.

    Returns unit right eigenvectors (base orientation: positive second
    component, optionally flipped per family) and the dual left vectors
    with l_i . r_j = delta_ij.
    """
    df = jet_or_df.df if hasattr(jet_or_df, "df") else np.asarray(jet_or_df, float)
    tr = df[0, 0] + df[1, 1]
    det = df[0, 0] * df[1, 1] - df[0, 1] * df[1, 0]
    disc = tr * tr - 4.0 * det
    scale = max(1.0, tr * tr, abs(det))
    if disc <= DISC_TOL * scale:
        raise NotStrictlyHyperbolicError(
            f"discriminant {disc:.3e} not positive (scale {scale:.3e})")
    root = math.sqrt(disc)
    lam_p, lam_m = (tr + root) / 2.0, (tr - root) / 2.0
    r_p, r_m = _eigvec(df, lam_p), _eigvec(df, lam_m)
    flip_plus, flip_minus = flips
    if flip_plus:
        r_p = -r_p
    if flip_minus:
        r_m = -r_m
    det_r = r_p[0] * r_m[1] - r_p[1] * r_m[0]
    # duals: l+ orthogonal to r-, l- orthogonal to r+, normalized against own r
    l_p = np.array([r_m[1], -r_m[0]]) / det_r
    l_m = np.array([-r_p[1], r_p[0]]) / det_r
    return EigenFrame(lam_m, lam_p, r_m, r_p, l_m, l_p)


def eigen_fields(df, flips=(False, False)):
    """Vectorized eigendecomposition over a (..., 2, 2) Jacobian array.

    Returns (lam_minus, lam_plus, r_minus, r_plus) with r arrays (..., 2).
    """
    a, b = df[..., 0, 0], df[..., 0, 1]
    c, e = df[..., 1, 0], df[..., 1, 1]
    tr = a + e
    det = a * e - b * c
    disc = tr * tr - 4.0 * det
    scale = np.maximum(1.0, np.maximum(tr * tr, np.abs(det)))
    if np.any(disc <= DISC_TOL * scale):
        raise NotStrictlyHyperbolicError("strict hyperbolicity lost on the grid")
    root = np.sqrt(disc)
    lam_p, lam_m = (tr + root) / 2.0, (tr - root) / 2.0

    def rvec(lam, flip):
        c1 = np.stack([b, lam - a], axis=-1)
        c2 = np.stack([lam - e, c], axis=-1)
        n1 = np.sum(c1 * c1, axis=-1)
        n2 = np.sum(c2 * c2, axis=-1)
        r = np.where((n1 >= n2)[..., None], c1, c2)
        r = r / np.sqrt(np.sum(r * r, axis=-1))[..., None]
        bad = (r[..., 1] < 0) | ((r[..., 1] == 0) & (r[..., 0] < 0))
        r = np.where(bad[..., None], -r, r)
        return -r if flip else r

    flip_plus, flip_minus = flips
    return lam_m, lam_p, rvec(lam_m, flip_minus), rvec(lam_p, flip_plus)


# ---------------------------------------------------------------------------
# Jets and contractions

def eval_jet(model, state):
    """Exact polynomial jet of the flux at a state (no numerical derivatives)."""
    return model.jet(state)


def contract_d2f(d2f, x, y):
    """d2f : (x (x) y) contraction, component-wise over the leading slot."""
    return np.einsum("...kij,...i,...j->...k", d2f, x, y)


# ---------------------------------------------------------------------------
# Curvature of the integral curves at the origin

def _frame_at(model, state, flips):
    return eigen_frame(model.jet(state).df, flips)


def _kappa_fd(model, sign, flips):
    """Algebraic route: kappa = A * (r.grad)r . l_opp with grad r by central
    finite differences of the exact eigenframe."""
    f0 = _frame_at(model, (0.0, 0.0), flips)
    r0 = f0.r(sign)
    grad = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1.0
        grad.append(_central4(
            lambda s, e=e: _frame_at(model, s * e, flips).r(sign), FD_STEP))
    curve_vec = r0[0] * grad[0] + r0[1] * grad[1]
    area = abs(f0.r_minus[0] * f0.r_plus[1] - f0.r_minus[1] * f0.r_plus[0])
    return area * float(curve_vec @ f0.l(-sign))


def _kappa_ode(model, sign, flips):
    """Brute-force oracle: integrate du/ds = r(u) through 0 with RK4 and fit
    the osculating circle (signed Menger curvature of three nearby points)."""
    def rhs(p):
        return _frame_at(model, p, flips).r(sign)

    def rk4(h):
        p = np.zeros(2)
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * h * k1)
        k3 = rhs(p + 0.5 * h * k2)
        k4 = rhs(p + h * k3)
        return p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    h = ODE_STEP
    p_back, p_fwd = rk4(-h), rk4(h)
    p_mid = np.zeros(2)
    d01 = np.linalg.norm(p_mid - p_back)
    d02 = np.linalg.norm(p_fwd - p_back)
    d12 = np.linalg.norm(p_fwd - p_mid)
    cross = ((p_mid - p_back)[0] * (p_fwd - p_back)[1]
             - (p_mid - p_back)[1] * (p_fwd - p_back)[0])
    menger = 2.0 * cross / (d01 * d02 * d12)
    f0 = _frame_at(model, (0.0, 0.0), flips)
    r_k, r_o = f0.r(sign), f0.r(-sign)
    det_k = r_k[0] * r_o[1] - r_k[1] * r_o[0]
    area = abs(f0.r_minus[0] * f0.r_plus[1] - f0.r_minus[1] * f0.r_plus[0])
    return area * menger / det_k


def integral_curve_curvature(model, sign, flips=(False, False)):
    """Signed curvature of the integral curve at 0, cross-validated.

    Both routes must agree to KAPPA_AGREE_TOL (relative); the algebraic
    value is returned.
    """
    k_fd = _kappa_fd(model, sign, flips)
    k_ode = _kappa_ode(model, sign, flips)
    if abs(k_fd - k_ode) > KAPPA_AGREE_TOL * (1.0 + abs(k_fd)):
        raise ArithmeticError(
            f"curvature routes disagree: fd={k_fd:.9e} ode={k_ode:.9e}")
    return k_fd


def grad_lambda(model, sign, state=(0.0, 0.0)):
    """Exact gradient of an eigenvalue from the flux Hessian.

    lambda = (tr +- sqrt(disc))/2 with tr, disc polynomial in the Jacobian
    entries, so the gradient is closed-form; no numerical differentiation.
    """
    jet = model.jet(state)
    df, d2f = jet.df, jet.d2f
    a, b = df[0, 0], df[0, 1]
    c, d = df[1, 0], df[1, 1]
    disc = (a - d) ** 2 + 4.0 * b * c
    if disc <= 0.0:
        raise NotStrictlyHyperbolicError("discriminant not positive")
    root = math.sqrt(disc)
    grad = np.zeros(2)
    for i in range(2):
        da, db = d2f[0, 0, i], d2f[0, 1, i]
        dc, dd = d2f[1, 0, i], d2f[1, 1, i]
        tr_i = da + dd
        disc_i = 2.0 * (a - d) * (da - dd) + 4.0 * (db * c + b * dc)
        grad[i] = 0.5 * (tr_i + sign * disc_i / (2.0 * root))
    return grad


def _grad_lambda_dot_r(model, sign, flips):
    """(r_sign . grad Lambda_sign)(0) via the exact eigenvalue gradient."""
    f0 = _frame_at(model, (0.0, 0.0), flips)
    return float(f0.r(sign) @ grad_lambda(model, sign))


# ---------------------------------------------------------------------------
# Structure constants

def canonical_flips(model):
    """Orientation making both origin curvatures nonnegative when possible.

    Base rule: positive second component.  Flipping r- changes the sign of
    kappa+ only, flipping r+ changes kappa- only, so any nonzero sign
    pattern can be canonicalized.  Degenerate (zero) curvatures keep the
    base orientation.
    """
    base = (False, False)
    kp = _kappa_fd(model, +1, base)
    km = _kappa_fd(model, -1, base)
    return (bool(km < 0.0), bool(kp < 0.0))


def structure_constants(model):
    """All origin constants of the construction, in the canonical frame."""
    flips = canonical_flips(model)
    jet0 = model.jet((0.0, 0.0))
    frame = eigen_frame(jet0.df, flips)
    r_m, r_p = frame.r_minus, frame.r_plus
    delta_lambda = frame.lambda_plus - frame.lambda_minus
    area = abs(r_m[0] * r_p[1] - r_m[1] * r_p[0])
    p0 = float(r_p @ r_m)

    kappa_plus = integral_curve_curvature(model, +1, flips)
    kappa_minus = integral_curve_curvature(model, -1, flips)
    g_plus = _grad_lambda_dot_r(model, +1, flips)
    g_minus = _grad_lambda_dot_r(model, -1, flips)

    b_plus = contract_d2f(jet0.d2f, r_p, r_p)
    b_minus = contract_d2f(jet0.d2f, r_m, r_m)
    d = contract_d2f(jet0.d2f, r_p, r_m)

    k_p = kappa_plus * delta_lambda / area
    k_m = kappa_minus * delta_lambda / area
    btilde_plus = k_p * r_m
    btilde_minus = -k_m * r_p

    # [lam I - Df] is rank one along its own eigenvector; solve in the
    # eigenbasis (component along the opposite eigenvector), guarding the
    # spectral-gap divisor.
    if abs(delta_lambda) <= math.sqrt(SOLVE_RESIDUAL_TOL):
        raise SingularSystemError("spectral gap too small for B solves")
    B_plus = (kappa_plus / area) * r_m
    B_minus = (kappa_minus / area) * r_p
    for lam, B, rhs in ((frame.lambda_plus, B_plus, btilde_plus),
                        (frame.lambda_minus, B_minus, btilde_minus)):
        res = (lam * np.eye(2) - jet0.df) @ B - rhs
        if np.max(np.abs(res)) > SOLVE_RESIDUAL_TOL * max(1.0, abs(lam)):
            raise SingularSystemError(f"B solve residual {np.max(np.abs(res)):.3e}")

    mean = 0.5 * (frame.lambda_plus + frame.lambda_minus)
    M = jet0.df - mean * np.eye(2)
    det_M = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det_M) <= SOLVE_RESIDUAL_TOL:
        raise SingularSystemError("mean-shifted Jacobian singular")
    Dvec = np.linalg.solve(M, d)
    if np.max(np.abs(M @ Dvec - d)) > SOLVE_RESIDUAL_TOL * max(1.0, float(np.max(np.abs(d)))):
        raise SingularSystemError("Dvec solve residual beyond tolerance")

    # Expansion of (l_k . b_k) r_k on the (b_k, b_opp) basis, closed form
    det_q = g_plus * g_minus + k_p * k_m
    if det_q == 0.0:
        alpha_plus = alpha_minus = beta_plus = beta_minus = math.nan
    else:
        alpha_plus = alpha_minus = g_plus * g_minus / det_q
        beta_plus = -g_plus * k_p / det_q
        beta_minus = g_minus * k_m / det_q

    rhs_minus = kappa_plus * delta_lambda / area   # bound partner of |g-|
    rhs_plus = kappa_minus * delta_lambda / area
    if kappa_plus > 0 and kappa_minus > 0:
        eps_min = max(abs(g_minus) / rhs_minus, abs(g_plus) / rhs_plus)
    else:
        eps_min = math.inf

    det_b = b_minus[0] * b_plus[1] - b_minus[1] * b_plus[0]

    return StructureConstants(
        delta_lambda=delta_lambda,
        area=area,
        p0=p0,
        kappa_minus=kappa_minus,
        kappa_plus=kappa_plus,
        b_minus=b_minus,
        b_plus=b_plus,
        d=d,
        btilde_minus=btilde_minus,
        btilde_plus=btilde_plus,
        B_minus=B_minus,
        B_plus=B_plus,
        Dvec=Dvec,
        alpha_minus=alpha_minus,
        alpha_plus=alpha_plus,
        beta_minus=beta_minus,
        beta_plus=beta_plus,
        g_minus=g_minus,
        g_plus=g_plus,
        lhs_minus=abs(g_minus),
        lhs_plus=abs(g_plus),
        eps_min=eps_min,
        frame=frame,
        flips=flips,
        det_b=det_b,
    )


def check_condition(sc, eps):
    """Geometric smallness condition at level eps in (0, 1).

    Holds iff both curvatures are positive and each eigenvalue's growth rate
    along its own field is at most eps times the opposite curvature scale.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    kpos = sc.kappa_minus > 0.0 and sc.kappa_plus > 0.0
    if kpos:
        rhs_minus = eps * sc.kappa_plus * sc.delta_lambda / sc.area
        rhs_plus = eps * sc.kappa_minus * sc.delta_lambda / sc.area
        margin_minus = sc.lhs_minus / rhs_minus if rhs_minus > 0 else math.inf
        margin_plus = sc.lhs_plus / rhs_plus if rhs_plus > 0 else math.inf
        holds = margin_minus <= 1.0 and margin_plus <= 1.0
    else:
        margin_minus = margin_plus = math.inf
        holds = False
    return ConditionReport(eps=eps, holds=holds, kappas_positive=kpos,
                           margin_minus=margin_minus, margin_plus=margin_plus)


def cramer_coefficients(sc, w):
    """Coordinates of w on the (b-, b+) basis: w = w_minus b- + w_plus b+.

    Vectorized over leading axes of w (... , 2).
    """
    if abs(sc.det_b) < 1e-14:
        raise SingularSystemError("carrier basis (b-, b+) is degenerate")
    bm, bp = sc.b_minus, sc.b_plus
    w_plus = (bm[0] * w[..., 1] - bm[1] * w[..., 0]) / sc.det_b
    w_minus = (w[..., 0] * bp[1] - w[..., 1] * bp[0]) / sc.det_b
    return w_plus, w_minus
