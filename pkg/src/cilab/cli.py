"""Command line driver.

Subcommands: analyze, schedule, run, dephase, verify, report.  Exit code 0
when every check passes, 2 when a check fails, 1 on usage or configuration
errors.  All randomness is seeded from the configuration; reruns with an
identical configuration produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import grid as gridmod
from .config import RunConfig
from .cutoffs import make_psi, zero_phase
from .dephase import (agreement_check, dephasing_constant, run_pair,
                      separation_check, write_separation_csv)
from .fluxcore import check_condition, structure_constants
from .fluxdsl import FluxParseError, load_flux
from .residual import assemble_remainders, pde_residual_check_const
from .schedule import all_satisfied, build_relaxed, build_strict, validate
from .scheme import MINUS, PLUS, ConstState, step_const
from .scheme_grid import materialize, run_relaxed
from .verify import make_bank, weak_test_field

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


def _load_model(args_or_cfg):
    flux = getattr(args_or_cfg, "flux", None) or args_or_cfg.flux
    radius = getattr(args_or_cfg, "radius", 1.0)
    return load_flux(flux, radius=radius)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, payload):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def cmd_analyze(args):
    model = load_flux(args.flux, radius=args.radius)
    sc = structure_constants(model)
    rep = check_condition(sc, args.eps)
    payload = {
        "flux": model.source,
        "delta_lambda": sc.delta_lambda, "area": sc.area, "p0": sc.p0,
        "kappa_plus": sc.kappa_plus, "kappa_minus": sc.kappa_minus,
        "b_plus": sc.b_plus.tolist(), "b_minus": sc.b_minus.tolist(),
        "d": sc.d.tolist(), "B_plus": sc.B_plus.tolist(),
        "B_minus": sc.B_minus.tolist(), "Dvec": sc.Dvec.tolist(),
        "alpha_plus": sc.alpha_plus, "alpha_minus": sc.alpha_minus,
        "beta_plus": sc.beta_plus, "beta_minus": sc.beta_minus,
        "lhs_plus": sc.lhs_plus, "lhs_minus": sc.lhs_minus,
        "eps_min": sc.eps_min, "det_b": sc.det_b,
        "condition": {"eps": rep.eps, "holds": rep.holds,
                      "margin_minus": rep.margin_minus,
                      "margin_plus": rep.margin_plus},
    }
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    if args.json:
        _write_json(args.json, payload)
    return EXIT_OK if rep.holds else EXIT_CHECK


def _schedule_from_config(cfg, sc=None):
    if cfg.mode == "strict":
        C = dephasing_constant(sc) if sc is not None else None
        return build_strict(eps_cond=cfg.eps_cond, r=cfg.r, c_q=cfg.c_q,
                            beta_cut=cfg.beta_cut, gamma_cut=cfg.gamma_cut,
                            F0=cfg.F0, eps_amp=cfg.eps_amp,
                            lam0_k=cfg.lam0_k, lam1_k=cfg.lam1_k,
                            dephasing_C=C)
    return build_relaxed(n_levels=max(cfg.n_steps, 1), K=cfg.K,
                         lam0_k=cfg.lam0_k, eps_cond=cfg.eps_cond, r=cfg.r,
                         c_q=cfg.c_q, beta_cut=cfg.beta_cut,
                         gamma_cut=cfg.gamma_cut, F0=cfg.F0,
                         eps_amp=cfg.eps_amp)


def cmd_schedule(args):
    cfg = _config_from_args(args)
    model = load_flux(cfg.flux, radius=cfg.radius)
    sc = structure_constants(model)
    sched = _schedule_from_config(cfg, sc)
    margins = validate(sched, delta_lambda=sc.delta_lambda,
                       dephasing_C=dephasing_constant(sc))
    print(f"mode={sched.mode}  r={sched.r}  eps_amp={sched.eps_amp}  "
          f"C0={sched.C0:.6g}")
    print(f"{'level':>5} {'lambda':>14} {'delta':>12} {'F':>12}")
    for n, lam in enumerate(sched.lam):
        print(f"{n:>5} {lam:>14.6g} {sched.delta[n]:>12.4g} {sched.F[n]:>12.6g}")
    print("constraints:")
    for c in margins:
        mark = "ok  " if c.satisfied else "FAIL"
        print(f"  [{mark}] {c.name}: {c.detail}")
    ok = all_satisfied(margins)
    if args.json:
        _write_json(args.json, {
            "schedule": sched.to_dict(),
            "constraints": [{"name": c.name, "satisfied": c.satisfied,
                             "detail": c.detail} for c in margins],
            "all_satisfied": ok})
    if sched.mode == "strict":
        return EXIT_OK if ok else EXIT_CHECK
    return EXIT_OK


def _config_from_args(args):
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig()
    for name in ("flux", "mode", "r", "eps", "K", "n", "outdir", "nx", "nt",
                 "phase", "F0"):
        val = getattr(args, name, None)
        if val is not None:
            if name == "eps":
                cfg.eps_cond = val
            elif name == "n":
                cfg.n_steps = val
            else:
                setattr(cfg, name, val)
    return cfg


def cmd_run(args):
    cfg = _config_from_args(args)
    model = load_flux(cfg.flux, radius=cfg.radius)
    sc = structure_constants(model)
    sched = _schedule_from_config(cfg, sc)
    grid = gridmod.SpaceTimeGrid(nx=cfg.nx, nt=cfg.nt, t0=cfg.t0, t1=cfg.t1,
                                 pad_t=cfg.pad_t)
    phase = make_psi() if cfg.phase == "psi" else zero_phase()
    os.makedirs(cfg.outdir, exist_ok=True)
    cfg.save(os.path.join(cfg.outdir, "config.json"))
    reports = []
    ok = True
    if cfg.mode == "strict":
        state0 = ConstState(n=0, u=np.zeros(2),
                            E={PLUS: sched.alpha0, MINUS: sched.alpha0})
        state1, rep = step_const(state0, sched, grid, phase, model, sc)
        reports.append(rep.to_dict())
        ledger = assemble_remainders(state1.kit, grid, stride=4)
        with open(os.path.join(cfg.outdir, "ledger.json"), "w") as fh:
            fh.write(ledger.to_json() + "\n")
        res = pde_residual_check_const(state1, sc, model, grid, stride=4)
        _write_json(os.path.join(cfg.outdir, "residual.json"), res.to_dict())
        gstate = materialize(state1, grid)
        gridmod.write_field(os.path.join(cfg.outdir, "u_1.field"), gstate.u, "u_1")
        ok = rep.band_ok and rep.positivity_ok and ledger.passed()
        states = [state0, gstate]
    else:
        states, reps, _ledgers = run_relaxed(model, sc, sched, grid, phase,
                                             cfg.n_steps)
        for rep in reps:
            reports.append(rep.to_dict())
            ok = ok and rep.band_ok and rep.positivity_ok
        for n, st in enumerate(states[1:], start=1):
            gridmod.write_field(os.path.join(cfg.outdir, f"u_{n}.field"),
                                st.u, f"u_{n}")
    _write_json(os.path.join(cfg.outdir, "reports.json"), reports)
    _write_band_csv(os.path.join(cfg.outdir, "bands.csv"), reports)
    print(json.dumps(reports, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK if ok else EXIT_CHECK


def _write_band_csv(path, reports):
    with open(path, "w") as fh:
        fh.write("n,F,band_lo,band_hi,Emin_plus,Emax_plus,Emin_minus,"
                 "Emax_minus,band_ok,positivity_ok\n")
        for rep in reports:
            fh.write(",".join(str(v) for v in (
                rep["n_next"], rep["F_next"], rep["band"][0], rep["band"][1],
                rep["E_min"]["1"], rep["E_max"]["1"],
                rep["E_min"]["-1"], rep["E_max"]["-1"],
                rep["band_ok"], rep["positivity_ok"])) + "\n")


def cmd_dephase(args):
    cfg = _config_from_args(args)
    model = load_flux(cfg.flux, radius=cfg.radius)
    sc = structure_constants(model)
    sched = _schedule_from_config(cfg, sc)
    grid = gridmod.SpaceTimeGrid(nx=cfg.nx, nt=cfg.nt, t0=cfg.t0, t1=cfg.t1,
                                 pad_t=cfg.pad_t)
    pair = run_pair(model, sc, sched, grid, n_max=cfg.n_steps)
    agree = agreement_check(pair)
    sep = separation_check(pair)
    os.makedirs(cfg.outdir, exist_ok=True)
    payload = {
        "agreement": agree.levels,
        "agreement_pass": agree.passed(),
        "separation": sep.rows(),
        "separation_pass": sep.passed(),
        "C": sep.C,
    }
    _write_json(os.path.join(cfg.outdir, "dephase.json"), payload)
    write_separation_csv(os.path.join(cfg.outdir, "separation.csv"), sep)
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK if agree.passed() and sep.passed() else EXIT_CHECK


def cmd_verify(args):
    model = load_flux(args.flux, radius=args.radius)
    fld, header = gridmod.read_field(args.field)
    bank = make_bank(fld.grid.t[fld.lo], fld.grid.t[fld.hi],
                     n=args.bank, seed=args.seed)
    u0_row = fld.values[fld.lo]

    def u0_fn(x):
        return u0_row

    rep = weak_test_field(fld, u0_fn, model, bank)
    payload = {"field": args.field, "max_residual": rep.max_residual,
               "tolerance": args.tol, "pass": rep.max_residual <= args.tol,
               "residuals": rep.residuals}
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    if args.json:
        _write_json(args.json, payload)
    return EXIT_OK if payload["pass"] else EXIT_CHECK


def cmd_report(args):
    summary = {}
    ok = True
    for name in ("reports.json", "dephase.json", "ledger.json",
                 "residual.json"):
        path = os.path.join(args.outdir, name)
        if not os.path.exists(path):
            continue
        with open(path) as fh:
            data = json.load(fh)
        summary[name] = data
        if name == "reports.json":
            for rep in data:
                ok = ok and rep["band_ok"] and rep["positivity_ok"]
        elif name == "dephase.json":
            ok = ok and data["agreement_pass"] and data["separation_pass"]
        elif name == "ledger.json":
            ok = ok and all(e["pass"] for e in data["entries"])
    summary["all_pass"] = ok
    _write_json(os.path.join(args.outdir, "summary.json"), summary)
    print(json.dumps({"all_pass": ok, "sections": sorted(summary)}, indent=2))
    return EXIT_OK if ok else EXIT_CHECK


def build_parser():
    p = argparse.ArgumentParser(prog="cilab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="structure constants and condition report")
    pa.add_argument("--flux", required=True)
    pa.add_argument("--eps", type=float, default=0.5)
    pa.add_argument("--radius", type=float, default=1.0)
    pa.add_argument("--json")
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("schedule", help="build and validate a schedule")
    _common_run_flags(ps)
    ps.add_argument("--json")
    ps.set_defaults(func=cmd_schedule)

    pr = sub.add_parser("run", help="iterate and dump fields + reports")
    _common_run_flags(pr)
    pr.set_defaults(func=cmd_run)

    pd = sub.add_parser("dephase", help="paired run + agreement/separation")
    _common_run_flags(pd)
    pd.set_defaults(func=cmd_dephase)

    pv = sub.add_parser("verify", help="weak-solution test on a dumped field")
    pv.add_argument("--flux", required=True)
    pv.add_argument("--field", required=True)
    pv.add_argument("--tol", type=float, default=1e-6)
    pv.add_argument("--bank", type=int, default=10)
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--radius", type=float, default=1.0)
    pv.add_argument("--json")
    pv.set_defaults(func=cmd_verify)

    pp = sub.add_parser("report", help="aggregate a run directory")
    pp.add_argument("--outdir", required=True)
    pp.set_defaults(func=cmd_report)
    return p


def _common_run_flags(sp):
    sp.add_argument("--config")
    sp.add_argument("--flux")
    sp.add_argument("--mode", choices=("strict", "relaxed"))
    sp.add_argument("--r", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--F0", type=float)
    sp.add_argument("--K", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--nx", type=int)
    sp.add_argument("--nt", type=int)
    sp.add_argument("--phase", choices=("zero", "psi"))
    sp.add_argument("--outdir")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (FluxParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
