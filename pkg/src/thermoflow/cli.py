"""Command-line front end.

Subcommands: run, verify, decay, degiorgi, stokes. Exit codes are the only
pass/fail channel: 0 success, 1 assertion/check failure, 2 usage or config
error. The environment variable THERMOFLOW_OUT_ROOT, when set, is prepended
to relative output directories.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from thermoflow import __version__
from thermoflow.config import Config, ConfigError, echo_config, load_config
from thermoflow.stepper import load_checkpoint, run, save_checkpoint

log = logging.getLogger("thermoflow")


def _outdir(cfg: Config) -> str:
    path = cfg.get("output", "outdir")
    root = os.environ.get("THERMOFLOW_OUT_ROOT", "")
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    return path


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _run_trajectory(cfg: Config, restart: str | None, outdir: str):
    c = cfg.build_coeffs()
    sc = cfg.build_step_config()
    if restart:
        state, _ = load_checkpoint(restart)
        project_initial = False
    else:
        state = cfg.build_state()
        project_initial = True
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "effective.cfg"), "w") as fh:
        fh.write(echo_config(cfg))
    traj = run(state, c, sc, outdir=outdir, project_initial=project_initial)
    ckpt = cfg.get("output", "checkpoint")
    if ckpt:
        save_checkpoint(os.path.join(outdir, ckpt), traj.final_state, echo_config(cfg))
    return traj


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    outdir = _outdir(cfg)
    traj = _run_trajectory(cfg, args.restart, outdir)
    last = traj.records[-1]
    _emit({"command": "run", "outdir": outdir, "t": last.t,
           "energy": last.energy, "steps_recorded": len(traj.records),
           "max_ledger_residual": max(r.ledger_residual for r in traj.records)})
    return 0


def _cmd_verify(args) -> int:
    from thermoflow import verify as vf
    from thermoflow.coefficients import coeff_set
    from thermoflow.grid import make_grid
    from thermoflow.stepper import StepConfig

    suites = ["mms", "energy", "decay", "uniqueness"] if args.suite == "all" else [args.suite]
    all_ok = True
    for suite in suites:
        if suite == "mms":
            case = vf.MMSCase(coeff_set("quad:1.0,1.0", "const:1.0", "quad:1.0,1.0"))
            rep = vf.mms_convergence(case, sizes=(16, 32, 64), t_end=0.02,
                                     dt_coarse=4.0e-4)
            ok = rep.min_order() >= 1.9 or rep.floor
            _emit({"suite": "mms", "passed": ok,
                   "orders_u": rep.orders_u, "orders_v": rep.orders_v,
                   "orders_theta": rep.orders_theta})
        elif suite == "energy":
            grid = make_grid(32, 32, 1.0, 1.0)
            c = coeff_set("quad:1.0,1.0", "const:1.0", "quad:1.0,0.5")
            sc = StepConfig(dt=5e-4, end_time=0.05, rel_tol=1e-12,
                            record_interval=1, snapshot_interval=0)
            traj = run(vf.default_state(grid, 0.2), c, sc)
            rep = vf.energy_identity_suite(traj)
            ok = rep.passed
            _emit({"suite": "energy", "passed": ok,
                   "max_ledger_residual": rep.max_ledger_residual,
                   "max_coupling_residual": rep.max_coupling_residual,
                   "dissipation_floor_ok": rep.dissipation_ok,
                   "monotone": rep.monotone_ok})
        elif suite == "decay":
            grid = make_grid(32, 32, 1.0, 1.0)
            c = coeff_set()
            sc = StepConfig(dt=5e-4, end_time=0.25, rel_tol=1e-12,
                            record_interval=1, snapshot_interval=0)
            traj = run(vf.default_state(grid, 0.05), c, sc)
            rep = vf.decay_experiment(traj)
            ok = rep.passed
            _emit({"suite": "decay", "passed": ok, "c_star": rep.c_star,
                   "alpha": rep.alpha, "envelope_ok": rep.envelope_ok,
                   "r2_h1": rep.h1_fit.r_squared, "r2_h2": rep.h2_fit.r_squared})
        elif suite == "uniqueness":
            grid = make_grid(32, 32, 1.0, 1.0)
            c = coeff_set()
            sc = StepConfig(dt=5e-4, end_time=0.1, rel_tol=1e-12)
            rep = vf.uniqueness_experiment(grid, c, sc, delta=1e-6)
            ok = rep.passed
            _emit({"suite": "uniqueness", "passed": ok,
                   "sup_diff_sq": rep.sup_diff_sq,
                   "stability_factor": rep.stability_factor,
                   "tail_decayed": rep.tail_decayed})
        else:
            raise ConfigError(f"unknown suite {suite!r}")
        all_ok = all_ok and ok
    return 0 if all_ok else 1


def _cmd_decay(args) -> int:
    from thermoflow import verify as vf
    from thermoflow.diagnostics import ledger_from_csv
    from thermoflow.stepper import Trajectory

    cfg = load_config(args.config)
    assert_decay = cfg.getbool("experiment", "assert_decay")
    outdir = _outdir(cfg)
    if args.ledger:
        grid, sigma, records = ledger_from_csv(args.ledger)
        traj = Trajectory(grid, sigma, records)
    else:
        traj = _run_trajectory(cfg, None, outdir)
    rep = vf.decay_experiment(traj, assert_decay=assert_decay)
    _emit({"command": "decay", "c_star": rep.c_star, "alpha": rep.alpha,
           "alpha_hat_energy": rep.energy_fit.alpha_hat,
           "r2_energy": rep.energy_fit.r_squared,
           "r2_h1": rep.h1_fit.r_squared, "r2_h2": rep.h2_fit.r_squared,
           "envelope_ok": rep.envelope_ok,
           "first_violation_t": rep.first_violation_t,
           "asserted": rep.asserted, "passed": rep.passed})
    return 0 if rep.passed else 1


def _cmd_degiorgi(args) -> int:
    from thermoflow.diagnostics import degiorgi_bound, degiorgi_monitor

    cfg = load_config(args.config)
    outdir = _outdir(cfg)
    traj = _run_trajectory(cfg, None, outdir)
    if len(traj.snapshots) < 2:
        raise ConfigError("the level-set monitor needs snapshot_interval > 0")
    theta0_linf = float(np.max(np.abs(traj.snapshots[0][1])))
    m, phi, phi_hat = degiorgi_bound(
        traj.records, theta0_linf,
        cfg.getfloat("experiment", "c1"), cfg.getfloat("experiment", "c2"))
    rep = degiorgi_monitor(traj.snapshots, traj.grid, m,
                           k_max=cfg.getint("experiment", "degiorgi_kmax"),
                           sigma=cfg.getfloat("coeffs", "sigma"))
    ok = rep.bounded and rep.a_seq[-1] < 1e-8 and rep.a_seq_neg[-1] < 1e-8
    _emit({"command": "degiorgi", "m": m, "phi": phi, "phi_hat": phi_hat,
           "sup_abs_theta": rep.sup_abs_theta, "bounded": rep.bounded,
           "a_final": rep.a_seq[-1], "a_final_neg": rep.a_seq_neg[-1],
           "passed": ok})
    return 0 if ok else 1


def _cmd_stokes(args) -> int:
    from thermoflow.verify import stokes_manufactured

    rep = stokes_manufactured(n=args.n, rel_tol=args.rel_tol)
    res = rep.result
    out = args.out
    root = os.environ.get("THERMOFLOW_OUT_ROOT", "")
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    with open(out, "w") as fh:
        fh.write("# manufactured variable-viscosity steady flow\n")
        fh.write("quantity,value\n")
        fh.write(f"err_u,{float(rep.err_u)!r}\n")
        fh.write(f"err_p,{float(rep.err_p)!r}\n")
        fh.write(f"mean_p,{float(rep.mean_p)!r}\n")
        fh.write(f"momentum_residual,{float(res.momentum_residual)!r}\n")
        fh.write(f"energy_gap,{float(res.energy_gap)!r}\n")
        fh.write(f"hminus1_ratio,{float(res.hminus1_ratio)!r}\n")
        fh.write(f"h2_ratio,{float(res.h2_ratio)!r}\n")
        for k, d in enumerate(res.div_history):
            fh.write(f"div_sweep_{k},{float(d)!r}\n")
    _emit({"command": "stokes", "out": out, "err_u": rep.err_u,
           "mean_p": rep.mean_p, "momentum_residual": res.momentum_residual,
           "energy_gap": res.energy_gap, "passed": rep.passed})
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="thermoflow",
        description="Finite-difference solver for a coupled two-mode "
                    "flow/temperature system with verification experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="time-step a configured problem")
    p.add_argument("--config", required=True)
    p.add_argument("--restart", default=None, help="checkpoint to resume from")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="built-in verification suites")
    p.add_argument("--suite", default="all",
                   choices=["mms", "energy", "decay", "uniqueness", "all"])
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("decay", help="decay-rate fits for a run or stored ledger")
    p.add_argument("--config", required=True)
    p.add_argument("--ledger", default=None, help="reuse a stored ledger CSV")
    p.set_defaults(func=_cmd_decay)

    p = sub.add_parser("degiorgi", help="level-set truncation monitor on a run")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_degiorgi)

    p = sub.add_parser("stokes", help="manufactured variable-viscosity flow check")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--rel-tol", type=float, default=1e-13, dest="rel_tol")
    p.add_argument("--out", default="stokes.csv")
    p.set_defaults(func=_cmd_stokes)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # checks that raise are reported as failures
        log.error("%s", exc)
        return 1


def entry() -> None:
    sys.exit(main())
