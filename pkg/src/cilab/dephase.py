"""Paired construction runs with shifted temporal phases.

Two trajectories share one schedule and grid; their phase functions are 0
and the pi-ramp psi.  Ancient slices (before the ramp) must agree to the
bit, while at the origin the level-1 oscillations arrive with opposite
sign, separating the trajectories by a definite multiple of sqrt(alpha0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cutoffs import make_psi, zero_phase
from .scheme import FAMILIES, MINUS, PLUS, ConstState, step_const


def dephasing_constant(sc):
    """Disk-size constant from the origin wave speeds."""
    sup = max(abs(sc.frame.lambda_plus), abs(sc.frame.lambda_minus))
    return 8.0 * (1.0 + sup) / math.pi


@dataclass
class LevelRecord:
    n: int
    disk_radius: float
    proj_min: dict    # {(traj, family sign): min over disk of <u, r_pm(0)>}
    proj_max: dict
    lower_bound: float
    upper_bound: float
    gap_origin: float
    gap_required: float

    def to_row(self):
        return {
            "n": self.n, "disk_radius": self.disk_radius,
            "proj1_plus_min": self.proj_min[(1, PLUS)],
            "proj1_minus_min": self.proj_min[(1, MINUS)],
            "proj2_plus_max": self.proj_max[(2, PLUS)],
            "proj2_minus_max": self.proj_max[(2, MINUS)],
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "gap_origin": self.gap_origin,
            "gap_required": self.gap_required,
            "pass": self.gap_origin >= self.gap_required,
        }


@dataclass
class PairRun:
    sched: object
    grid: object
    sc: object
    model: object
    states1: list = field(default_factory=list)
    states2: list = field(default_factory=list)
    reports1: list = field(default_factory=list)
    reports2: list = field(default_factory=list)
    records: list = field(default_factory=list)


def run_pair(model, sc, sched, grid, n_max=1):
    """Advance both trajectories from the flat subsolution to n_max."""
    alpha0 = sched.alpha0
    init = ConstState(n=0, u=np.zeros(2), E={PLUS: alpha0, MINUS: alpha0})
    pair = PairRun(sched=sched, grid=grid, sc=sc, model=model,
                   states1=[init], states2=[init])
    phases = (zero_phase(), make_psi())
    for n in range(n_max):
        for states, reports, P in ((pair.states1, pair.reports1, phases[0]),
                                   (pair.states2, pair.reports2, phases[1])):
            new_state, rep = step_const(states[-1], sched, grid, P, model, sc)
            states.append(new_state)
            reports.append(rep)
    C = dephasing_constant(sc)
    for n in range(1, n_max + 1):
        pair.records.append(_level_record(pair, n, C))
    return pair


def _disk_points(radius, n_radial=8, n_angular=16):
    pts = [(0.0, 0.0)]
    for i in range(1, n_radial + 1):
        rho = radius * i / n_radial
        for j in range(n_angular):
            ang = 2.0 * math.pi * j / n_angular
            pts.append((rho * math.cos(ang), rho * math.sin(ang)))
    return pts


def _level_record(pair, n, C):
    sched, sc = pair.sched, pair.sc
    lam_n = sched.lam[n]
    radius = 1.0 / (2.0 * C * lam_n)
    frame = sc.frame
    rdirs = {PLUS: frame.r_plus, MINUS: frame.r_minus}
    proj_min = {}
    proj_max = {}
    states = {1: pair.states1[n], 2: pair.states2[n]}
    for traj in (1, 2):
        vals = {PLUS: [], MINUS: []}
        for (t, xo) in _disk_points(radius):
            u = states[traj].eval_u(t, np.array([xo % 1.0]))
            for k in FAMILIES:
                vals[k].append(float(u[0] @ rdirs[k]))
        for k in FAMILIES:
            proj_min[(traj, k)] = min(vals[k])
            proj_max[(traj, k)] = max(vals[k])
    alpha = sched.alpha0
    tail = sum(2.0 * alpha * sched.r ** (j - 1) / sched.c_q + 1.0 / sched.lam[j]
               for j in range(1, n + 1))
    main = math.sqrt(alpha) * (1.0 + sc.p0)
    lower = main - C * tail
    upper = -main + C * tail
    u1 = states[1].eval_u(0.0, np.zeros(1))[0]
    u2 = states[2].eval_u(0.0, np.zeros(1))[0]
    gap = float((u1 - u2) @ frame.r_plus)
    return LevelRecord(n=n, disk_radius=float(radius), proj_min=proj_min,
                       proj_max=proj_max, lower_bound=float(lower),
                       upper_bound=float(upper), gap_origin=gap,
                       gap_required=float(math.sqrt(alpha) * (1.0 + sc.p0)))


@dataclass
class AgreementReport:
    levels: list  # per level: dict with region boundary, max difference, bitwise flag

    def passed(self, tol=1e-12):
        return all(lv["max_diff"] <= tol for lv in self.levels)


def agreement_check(pair):
    """Trajectories must coincide where both phase ramps are still flat.

    At level n the guaranteed region is t <= -1 - sum of the mollification
    scales consumed so far; the pipelines are deterministic, so agreement
    there is expected to be bitwise.
    """
    grid = pair.grid
    levels = []
    for n in range(1, len(pair.states1)):
        t_bound = -1.0 - sum(pair.sched.delta[:n])
        max_diff = 0.0
        bitwise = True
        count = 0
        lo, hi = grid.core
        for it in range(lo, hi + 1):
            t = grid.t[it]
            if t > t_bound:
                continue
            u1 = pair.states1[n].eval_u(t, grid.x)
            u2 = pair.states2[n].eval_u(t, grid.x)
            e1 = pair.states1[n].eval_E(t, grid.x)
            e2 = pair.states2[n].eval_E(t, grid.x)
            max_diff = max(max_diff, float(np.max(np.abs(u1 - u2))))
            for k in FAMILIES:
                max_diff = max(max_diff, float(np.max(np.abs(e1[k] - e2[k]))))
            bitwise = bitwise and np.array_equal(u1, u2)
            count += 1
        levels.append({"n": n, "t_boundary": t_bound, "max_diff": max_diff,
                       "bitwise": bitwise, "slices": count})
    return AgreementReport(levels=levels)


@dataclass
class SeparationReport:
    records: list
    C: float

    def passed(self):
        return all(r.gap_origin >= r.gap_required for r in self.records)

    def rows(self):
        return [r.to_row() for r in self.records]


def separation_check(pair):
    return SeparationReport(records=pair.records,
                            C=dephasing_constant(pair.sc))


def write_separation_csv(path, report):
    rows = report.rows()
    if not rows:
        return
    keys = list(rows[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(str(row[k]) for k in keys) + "\n")
