"""Weak-solution verification and closed-form checks of the worked system.

The weak tester pairs a candidate field against a seeded bank of compactly
supported space-time bumps by quadrature; smooth exact solutions must give
residuals at quadrature accuracy, while a jump moving at the wrong speed
leaves an O(1) defect no refinement can remove.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .fluxcore import eigen_frame


def _bump(s):
    """C^3 polynomial bump (1 - s^2)^4 on |s| < 1; tame derivatives keep
    the quadrature error cleanly fourth order."""
    s = np.asarray(s, dtype=float)
    core = np.maximum(1.0 - s * s, 0.0)
    return core ** 4


def _bump_d(s):
    s = np.asarray(s, dtype=float)
    core = np.maximum(1.0 - s * s, 0.0)
    return -8.0 * s * core ** 3


@dataclass(frozen=True)
class TestFunction:
    """C^1 space-time bump, periodic in x, with closed-form derivatives."""

    tc: float
    xc: float
    wt: float
    wx: float

    def _xi(self, x):
        return (((np.asarray(x) - self.xc) + 0.5) % 1.0 - 0.5) / self.wx

    def __call__(self, t, x):
        return float(_bump((t - self.tc) / self.wt)) * _bump(self._xi(x))

    def dt(self, t, x):
        return (float(_bump_d((t - self.tc) / self.wt)) / self.wt
                * _bump(self._xi(x)))

    def dx(self, t, x):
        return (float(_bump((t - self.tc) / self.wt))
                * _bump_d(self._xi(x)) / self.wx)


@dataclass
class TestFunctionBank:
    functions: list
    seed: int

    def __len__(self):
        return len(self.functions)


def make_bank(t0, t1, n=10, seed=0, width_range=(0.05, 0.3)):
    """Seeded bank of interior bumps; every one vanishes on the window edge."""
    rng = np.random.default_rng(seed)
    lo, hi = math.log(width_range[0]), math.log(width_range[1])
    fns = []
    for _ in range(n):
        wt = math.exp(rng.uniform(lo, hi))
        wx = math.exp(rng.uniform(lo, hi))
        wt = min(wt, 0.45 * (t1 - t0))
        tc = rng.uniform(t0 + wt, t1 - wt)
        xc = rng.uniform(0.0, 1.0)
        fns.append(TestFunction(tc=tc, xc=xc, wt=wt, wx=min(wx, 0.45)))
    return TestFunctionBank(functions=fns, seed=seed)


def _simpson_weights(m):
    """Composite Simpson weights on m uniformly spaced samples (m odd);
    falls back to trapezoid on the last interval when m is even."""
    w = np.zeros(m)
    if m < 2:
        return w
    m_odd = m if m % 2 == 1 else m - 1
    if m_odd >= 3:
        w[0] += 1.0 / 3.0
        w[m_odd - 1] += 1.0 / 3.0
        w[1:m_odd - 1:2] += 4.0 / 3.0
        w[2:m_odd - 1:2] += 2.0 / 3.0
    if m_odd != m:
        w[m - 2] += 0.5
        w[m - 1] += 0.5
    if m == 2:
        w[:] = 0.5
    return w


@dataclass
class WeakReport:
    residuals: list
    max_residual: float

    def to_dict(self):
        return {"residuals": self.residuals, "max_residual": self.max_residual}


def weak_solution_test(u_fn, u0_fn, model, bank, t0, t1, nt=513, nx=1024):
    """| integral of (u phi_t + f(u) phi_x) + initial-data pairing | per bump.

    u_fn(t, x_array) -> (nx, 2); u0_fn(x_array) -> (nx, 2) is the data at
    t0.  x-integrals use the periodic trapezoid rule (spectrally accurate
    for smooth fields), t-integrals composite Simpson.
    """
    x = np.arange(nx) / nx
    tgrid = np.linspace(t0, t1, nt)
    wts = _simpson_weights(nt) * (tgrid[1] - tgrid[0])
    sums = np.zeros((len(bank.functions), 2))
    for t, wt in zip(tgrid, wts):
        u = np.asarray(u_fn(t, x))
        fu = model.f_at(u)
        for i, tf in enumerate(bank.functions):
            phit = tf.dt(t, x)
            phix = tf.dx(t, x)
            sums[i] += wt * (np.sum(u * phit[:, None], axis=0)
                             + np.sum(fu * phix[:, None], axis=0)) / nx
    u0 = np.asarray(u0_fn(x))
    residuals = []
    for i, tf in enumerate(bank.functions):
        phi0 = tf(t0, x)
        init = np.sum(u0 * phi0[:, None], axis=0) / nx
        residuals.append(float(np.max(np.abs(sums[i] + init))))
    return WeakReport(residuals=residuals, max_residual=max(residuals))


def weak_test_field(field, u0_fn, model, bank):
    """Weak test of a stored space-time field over its valid window."""
    grid = field.grid
    lo, hi = field.lo, field.hi

    def u_fn(t, x):
        it = int(round((t - grid.t[0]) / grid.dt))
        return field.values[it]

    return weak_solution_test(u_fn, u0_fn, model, bank,
                              grid.t[lo], grid.t[hi],
                              nt=hi - lo + 1, nx=grid.nx)


# ---------------------------------------------------------------------------
# Closed-form checks of the worked 2x2 system

@dataclass
class ExampleChecks:
    items: dict = field(default_factory=dict)

    def passed(self):
        return all(v["pass"] for v in self.items.values())

    def add(self, name, err, tol):
        self.items[name] = {"error": float(err), "tol": tol,
                            "pass": bool(err <= tol)}


def example_checks(model, seed=0, n_samples=60, tol=1e-10):
    """Analytic verification suite for the worked system.

    Checks the hyperbolicity discriminant, eigenvalue formulas, growth
    rates along each family, genuine nonlinearity off the v = 0 line, and
    convexity plus compatibility of the entropy.
    """
    rng = np.random.default_rng(seed)
    rep = ExampleChecks()
    pts = rng.uniform(-0.3, 0.3, size=(n_samples, 2))

    err_phi = err_lam = err_rate = 0.0
    for (u, v) in pts:
        jet = model.jet((u, v))
        phi = 4.0 + 2.0 * u + 2.25 * v * v
        tr = jet.df[0, 0] + jet.df[1, 1]
        det = jet.df[0, 0] * jet.df[1, 1] - jet.df[0, 1] * jet.df[1, 0]
        err_phi = max(err_phi, abs(tr * tr - 4.0 * det - phi))
        frame = eigen_frame(jet.df)
        sq = math.sqrt(phi)
        err_lam = max(err_lam,
                      abs(frame.lambda_plus - (-v / 4.0 + sq / 2.0)),
                      abs(frame.lambda_minus - (-v / 4.0 - sq / 2.0)))
        # growth rate along each family, stated with the unnormalized
        # eigenvector fields w_pm = (3v/4 +- sqrt(phi)/2, 1)
        grad_p = np.array([1.0 / (2.0 * sq), -0.25 + 9.0 * v / (8.0 * sq)])
        grad_m = np.array([-1.0 / (2.0 * sq), -0.25 - 9.0 * v / (8.0 * sq)])
        w_p = np.array([3.0 * v / 4.0 + sq / 2.0, 1.0])
        w_m = np.array([3.0 * v / 4.0 - sq / 2.0, 1.0])
        err_rate = max(err_rate,
                       abs(w_p @ grad_p - 3.0 * v / (2.0 * sq)),
                       abs(w_m @ grad_m + 3.0 * v / (2.0 * sq)))
        # the analytic gradient itself against finite differences
        h = 1e-6
        for grad, sgn in ((grad_p, +1), (grad_m, -1)):
            fd = np.zeros(2)
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fp = eigen_frame(model.jet((u + e[0], v + e[1])).df)
                fm = eigen_frame(model.jet((u - e[0], v - e[1])).df)
                fd[i] = (fp.lam(sgn) - fm.lam(sgn)) / (2.0 * h)
            err_rate = max(err_rate, float(np.max(np.abs(fd - grad))) * 1e-4)
    rep.add("hyperbolicity_discriminant", err_phi, tol)
    rep.add("eigenvalue_formulas", err_lam, tol)
    rep.add("growth_rate_formula", err_rate, tol)

    # genuine nonlinearity on a ball avoiding v = 0
    ball = rng.uniform(-1.0, 1.0, size=(n_samples, 2)) * 0.04 + np.array([0.0, 0.1])
    min_rate = math.inf
    for (u, v) in ball:
        phi = 4.0 + 2.0 * u + 2.25 * v * v
        min_rate = min(min_rate, abs(3.0 * v / (2.0 * math.sqrt(phi))))
    rep.items["genuine_nonlinearity"] = {
        "error": -min_rate, "tol": 0.0, "pass": bool(min_rate > 0.0)}

    # entropy: convex near 0 and compatible with the flux
    err_tr = err_det = err_sym = 0.0
    pd_ok = True
    disk = rng.uniform(-1.0, 1.0, size=(n_samples, 2))
    disk = 0.1 * disk / np.maximum(1.0, np.linalg.norm(disk, axis=1))[:, None]
    for (u, v) in disk:
        hess = np.array([[1.0, v / 2.0],
                         [v / 2.0, 1.0 + u / 2.0 - 0.75 * v * v]])
        err_tr = max(err_tr, abs(np.trace(hess) - (2.0 + u / 2.0 - 0.75 * v * v)))
        err_det = max(err_det, abs(np.linalg.det(hess) - (1.0 + u / 2.0 - v * v)))
        eigvals = np.linalg.eigvalsh(hess)
        pd_ok = pd_ok and bool(eigvals.min() > 0.0)
        compat = hess @ model.jet((u, v)).df
        err_sym = max(err_sym, abs(compat[0, 1] - compat[1, 0]))
    rep.add("entropy_hessian_trace", err_tr, tol)
    rep.add("entropy_hessian_det", err_det, tol)
    rep.items["entropy_positive_definite"] = {
        "error": 0.0, "tol": 0.0, "pass": pd_ok}
    rep.add("entropy_flux_compatibility", err_sym, 1e-8)
    return rep
