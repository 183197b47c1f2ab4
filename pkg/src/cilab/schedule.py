"""Iteration schedules: frequency/mollification/error-level sequences and
the full list of parameter constraints with measured margins.

Strict mode enforces the super-geometric frequency growth (feasible on a
grid only through one step); relaxed mode grows frequencies geometrically
and reports, rather than hides, every violated constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ConstraintMargin:
    name: str
    satisfied: bool
    detail: str


@dataclass
class ParamSchedule:
    eps_cond: float          # smallness level of the geometric condition
    eps_amp: float           # amplitude constant epsilon of the error levels
    r: float                 # geometric decay ratio of the error band
    c_q: float               # lower band fraction
    beta_cut: float
    gamma_cut: float
    C0: float                # formal constant tying eps_amp to F0
    Cstar: float             # C^0 step-increment constant (measured once)
    lam: list                # lambda_0 .. lambda_N (all in 2*pi*N)
    delta: list              # mollification scales delta_0 .. delta_N
    F: list                  # error band tops F_0 .. F_N
    mode: str                # "strict" | "relaxed"
    K: int = 16              # relaxed-mode frequency ratio
    alpha0: float = None     # initial error level (defaults to F_0)

    def __post_init__(self):
        if self.alpha0 is None:
            self.alpha0 = self.F[0]

    @property
    def n_levels(self):
        return len(self.lam) - 1

    def sqrtF_cumsum(self, n):
        return sum(math.sqrt(f) for f in self.F[:n + 1])

    def band(self, n):
        return self.c_q * self.F[n], self.F[n]

    def to_dict(self):
        return asdict(self)


def geometric_F(eps_amp, C0, r, count):
    return [(eps_amp / C0) ** 2 * r ** (2 * n) for n in range(count)]


def _check(margins, name, ok, detail):
    margins.append(ConstraintMargin(name, bool(ok), detail))


def validate(sched, delta_lambda=2.0, dephasing_C=None):
    """Every schedule constraint with its measured margin.

    In strict mode all of these are meant to hold; in relaxed mode the
    frequency-growth and window constraints typically fail and are simply
    reported.
    """
    m = []
    eps, epsa = sched.eps_cond, sched.eps_amp
    r, c_q, beta, gamma = sched.r, sched.c_q, sched.beta_cut, sched.gamma_cut

    lhs = (1 - 2 * eps) * beta / (2 - 2 * eps)
    _check(m, "order:c_q<(1-2e)b/(2-2e)", c_q < lhs, f"{c_q:.4g} < {lhs:.4g}")
    _check(m, "order:(1-2e)b/(2-2e)<beta", lhs < beta, f"{lhs:.4g} < {beta:.4g}")
    _check(m, "order:beta<gamma", beta < gamma, f"{beta:.4g} < {gamma:.4g}")
    ub = 1 / (2 - 2 * eps)
    _check(m, "order:gamma<1/(2-2e)", gamma < ub, f"{gamma:.4g} < {ub:.4g}")
    lhs2 = (1 - 2 * eps) * beta / ((2 - 2 * eps) * gamma)
    _check(m, "order:c_q<(1-2e)b/((2-2e)g)", c_q < lhs2, f"{c_q:.4g} < {lhs2:.4g}")

    lo = 0.5 + epsa / (1 - r)
    hi = 1 - epsa / (c_q * (1 - r))
    _check(m, "ratio:lo<=r^2", lo <= r * r, f"{lo:.4g} <= {r * r:.4g}")
    _check(m, "ratio:r^2<=hi", r * r <= hi, f"{r * r:.4g} <= {hi:.4g}")

    _check(m, "freq:lam0>4/deltaLambda", sched.lam[0] > 4.0 / delta_lambda,
           f"{sched.lam[0]:.4g} > {4.0 / delta_lambda:.4g}")
    for n, lam in enumerate(sched.lam):
        k = lam / TWO_PI
        _check(m, f"freq:lam{n} in 2*pi*N", abs(k - round(k)) < 1e-9 and k >= 1,
               f"lam{n}/(2pi)={k:.6g}")
    for n in range(sched.n_levels):
        _check(m, f"freq:lam{n + 1}>=lam{n}^5",
               sched.lam[n + 1] >= sched.lam[n] ** 5 * (1 - 1e-12),
               f"{sched.lam[n + 1]:.6g} >= {sched.lam[n] ** 5:.6g}")

    for n in range(sched.n_levels):
        lam, lam1, Fn = sched.lam[n], sched.lam[n + 1], sched.F[n]
        _check(m, f"F:lam{n}^3/lam{n + 1}^2<=F{n}", lam ** 3 / lam1 ** 2 <= Fn,
               f"{lam ** 3 / lam1 ** 2:.4g} <= {Fn:.4g}")
        _check(m, f"F:F{n}<=r^2n", Fn <= r ** (2 * n) * (1 + 1e-12),
               f"{Fn:.4g} <= {r ** (2 * n):.4g}")
        dl = sched.delta[n] * lam
        _check(m, f"delta:sqrt(lam{n})/lam{n + 1}<=d{n}*lam{n}",
               math.sqrt(lam) / lam1 <= dl,
               f"{math.sqrt(lam) / lam1:.4g} <= {dl:.4g}")
        cap1 = r ** (2 * n) * epsa ** 3 / (sched.C0 ** 3 * (1 - r))
        _check(m, f"delta:d{n}*lam{n}<=r^2n*e^3/(C0^3(1-r))", dl <= cap1,
               f"{dl:.4g} <= {cap1:.4g}")
        cap2 = Fn * sched.sqrtF_cumsum(n)
        _check(m, f"delta:d{n}*lam{n}<=F{n}*sum(sqrtF)", dl <= cap2,
               f"{dl:.4g} <= {cap2:.4g}")

    if dephasing_C is not None:
        for n in range(1, len(sched.lam)):
            cap = 1.0 / (2.0 * dephasing_C * sched.lam[n])
            _check(m, f"dephase:delta{n}<=1/(2C*lam{n})",
                   sched.delta[n] <= cap, f"{sched.delta[n]:.4g} <= {cap:.4g}")
    return m


def all_satisfied(margins):
    return all(c.satisfied for c in margins)


def build_strict(eps_cond=0.1, r=0.8, c_q=0.2, beta_cut=0.5, gamma_cut=0.55,
                 F0=0.05, eps_amp=0.014, lam0_k=1, lam1_k=1600,
                 Cstar=2.0, dephasing_C=None):
    """Reference strict schedule: two frequency levels, one step.

    C0 is the formal constant matching eps_amp to the requested F0; the
    independently calibrated remainder constant is reported separately by
    the residual diagnostics.
    """
    C0 = eps_amp / math.sqrt(F0)
    lam = [TWO_PI * lam0_k, TWO_PI * lam1_k]
    F = [F0, F0 * r ** 2]
    # mollification scales inside the feasibility window
    d0 = 1e-4
    d1 = 9e-6
    if dephasing_C is not None:
        d1 = min(d1, 0.99 / (2.0 * dephasing_C * lam[1]))
    return ParamSchedule(eps_cond=eps_cond, eps_amp=eps_amp, r=r, c_q=c_q,
                         beta_cut=beta_cut, gamma_cut=gamma_cut, C0=C0,
                         Cstar=Cstar, lam=lam, delta=[d0, d1], F=F,
                         mode="strict", K=0, alpha0=F0)


def build_relaxed(n_levels=3, K=16, lam0_k=7, eps_cond=0.1, r=0.745,
                  c_q=0.2, beta_cut=0.5, gamma_cut=0.55, F0=3e-4,
                  eps_amp=0.001, Cstar=2.0, delta_slices=0.0):
    """Geometric-frequency schedule for multi-step demonstrations.

    delta_slices > 0 requests mollification scales of that many time steps
    (set by the driver once the grid is known); zero keeps point kernels.
    """
    C0 = eps_amp / math.sqrt(F0)
    lam = [TWO_PI * lam0_k * K ** n for n in range(n_levels + 1)]
    F = [F0 * r ** (2 * n) for n in range(n_levels + 1)]
    delta = [delta_slices for _ in lam]
    return ParamSchedule(eps_cond=eps_cond, eps_amp=eps_amp, r=r, c_q=c_q,
                         beta_cut=beta_cut, gamma_cut=gamma_cut, C0=C0,
                         Cstar=Cstar, lam=lam, delta=delta, F=F,
                         mode="relaxed", K=K, alpha0=F0)
