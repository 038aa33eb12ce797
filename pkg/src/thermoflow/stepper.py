"""Semi-implicit time integration of the coupled system.

Each step treats advection and the mode-coupling terms explicitly (they are
energy-neutral pairs under the skew/centered operators) and the diffusion
implicitly with coefficients lagged at the current temperature, so every
step is three SPD solves plus one projection:

    theta^{n+1}:  (I - dt div(kappa(theta^n) grad)) theta = theta^n + dt N_theta
    v^{n+1}:      (I - dt div(nu(theta^n) grad))    v     = v^n + dt N_v
    u*:           (I - dt div(mu(theta^n) grad))    u*    = u^n + dt N_u
    u^{n+1}, p:   projection of u* onto the discretely divergence-free space
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from thermoflow.coefficients import CoeffSet, eval_coeff_padded
from thermoflow.elliptic import SolverSpec, project_div_free, solve_helmholtz_var
from thermoflow.grid import (
    DIRICHLET,
    Grid,
    ScalarField,
    State,
    VectorField,
    save_snapshot_csv,
)
from thermoflow.operators import advect, convect, divergence, gradient, tensor_div

log = logging.getLogger(__name__)


@dataclass
class StepConfig:
    dt: float = 1e-3
    dt_policy: str = "fixed"          # "fixed" | "cfl"
    cfl_target: float = 0.5
    dt_min: float = 1e-8
    dt_max: float = 1e-2
    end_time: float = 1.0
    rel_tol: float = 1e-12
    max_iter: int = 50000
    advection_form: str = "skew"      # "convective" only as a negative control
    evolve_u: bool = True
    evolve_v: bool = True
    evolve_theta: bool = True
    f_u: Callable | None = None       # forcing (t, grid) -> VectorField
    f_v: Callable | None = None
    f_theta: Callable | None = None   # forcing (t, grid) -> ScalarField
    record_interval: int = 1
    snapshot_interval: int = 0        # 0 disables snapshots

    def __post_init__(self):
        if not (0.0 < self.cfl_target <= 1.0):
            raise ValueError(f"cfl_target must be in (0,1], got {self.cfl_target}")
        if self.end_time < 0.0:
            raise ValueError(f"end_time must be >= 0, got {self.end_time}")

    def solver_spec(self) -> SolverSpec:
        return SolverSpec(rel_tol=self.rel_tol, max_iter=self.max_iter)


@dataclass
class StepInternals:
    """Per-step data the energy ledger needs to close algebraically."""

    dt: float
    dissipation: float          # sum over fields of <a grad f, grad f> at t^{n+1}
    sigma_h1_floor: float       # (1/sigma) * sum of face H1 seminorms^2, same fields
    explicit_work: float        # sum <N_f, f^{n+1}> (u-part against u*)
    increment_sq: float         # sum ||f^{n+1} - f^n||^2 (u-part via u*)
    projection_sq: float        # ||grad phi||^2 removed by the projection
    coupling_residual: float    # explicit energy pairings at t^n (should vanish)
    forcing_work: float         # sum <forcing, f^{n+1}>


def compute_dt(s: State, sc: StepConfig, floor: float = 1e-12) -> float:
    """CFL-limited dt: cfl * min(h) / max pointwise speed, clamped."""
    if sc.dt_policy == "fixed":
        return sc.dt
    g = s.grid
    speed = float(
        np.max(
            np.abs(s.u.x.values) + np.abs(s.u.y.values)
            + np.abs(s.v.x.values) + np.abs(s.v.y.values)
        )
    )
    dt = sc.cfl_target * min(g.hx, g.hy) / max(speed, floor)
    return float(np.clip(dt, sc.dt_min, sc.dt_max))


def _diffuse(a_pad, dt, explicit: ScalarField, old: ScalarField,
             sigma_inv, spec) -> ScalarField:
    rhs = old.like(old.values + dt * explicit.values)
    out, _ = solve_helmholtz_var(a_pad, dt, rhs, spec, sigma_inv=sigma_inv,
                                 x0=old.values)
    return out


def step(s: State, c: CoeffSet, sc: StepConfig, dt: float | None = None,
         step_index: int | None = None,
         with_internals: bool = True) -> tuple[State, StepInternals | None]:
    """Advance one time step; returns the new state and ledger internals.

    ``with_internals=False`` skips the energy bookkeeping (roughly a third of
    the per-step cost) for callers that only need the state, e.g. the
    perturbation experiment's twin runs.
    """
    g = s.grid
    spec = sc.solver_spec()
    if dt is None:
        dt = compute_dt(s, sc)
    form = sc.advection_form
    si = c.sigma_inv

    mu_p = eval_coeff_padded(c.mu, s.theta, si)
    nu_p = eval_coeff_padded(c.nu, s.theta, si)
    kap_p = eval_coeff_padded(c.kappa, s.theta, si)

    grad_theta = gradient(s.theta, out_bc=DIRICHLET)
    div_v = divergence(s.v)

    # explicit right-hand sides at t^n
    n_theta = -advect(s.u, s.theta, form=form) - div_v
    n_v = -advect(s.u, s.v, form=form) - grad_theta - convect(s.v, s.u)
    n_u = -advect(s.u, s.u, form=form) - tensor_div(s.v)
    f_theta = sc.f_theta(s.t, g) if sc.f_theta is not None else None
    f_v = sc.f_v(s.t, g) if sc.f_v is not None else None
    f_u = sc.f_u(s.t, g) if sc.f_u is not None else None
    if f_theta is not None:
        n_theta = n_theta + f_theta
    if f_v is not None:
        n_v = n_v + f_v
    if f_u is not None:
        n_u = n_u + f_u

    theta_new = (
        _diffuse(kap_p, dt, n_theta, s.theta, si, spec)
        if sc.evolve_theta else s.theta.copy()
    )
    if sc.evolve_v:
        v_new = VectorField(
            _diffuse(nu_p, dt, n_v.x, s.v.x, si, spec),
            _diffuse(nu_p, dt, n_v.y, s.v.y, si, spec),
        )
    else:
        v_new = s.v.copy()
    if sc.evolve_u:
        u_star = VectorField(
            _diffuse(mu_p, dt, n_u.x, s.u.x, si, spec),
            _diffuse(mu_p, dt, n_u.y, s.u.y, si, spec),
        )
        u_new, phi, _ = project_div_free(u_star, spec, x0=dt * s.p.values)
        p_new = s.p.like(phi.values / dt)
    else:
        u_star = s.u.copy()
        u_new = s.u.copy()
        phi = s.p.like(np.zeros(g.shape))
        p_new = s.p.copy()

    new = State(u_new, v_new, theta_new, p_new, s.t + dt)
    new.check_finite(step_index)

    if not with_internals:
        return new, None
    internals = _ledger_internals(
        s, new, u_star, phi, dt,
        (mu_p, nu_p, kap_p), (n_u, n_v, n_theta), (f_u, f_v, f_theta), c, sc,
    )
    return new, internals


def _ledger_internals(old: State, new: State, u_star: VectorField,
                      phi: ScalarField, dt, coeff_pads, explicits, forcings,
                      c: CoeffSet, sc: StepConfig) -> StepInternals:
    from thermoflow.operators import dirichlet_energy, h1_seminorm_sq, inner

    mu_p, nu_p, kap_p = coeff_pads
    n_u, n_v, n_theta = explicits
    f_u, f_v, f_theta = forcings

    diss = 0.0
    floor = 0.0
    if sc.evolve_theta:
        diss += dirichlet_energy(kap_p, new.theta)
        floor += h1_seminorm_sq(new.theta)
    if sc.evolve_v:
        diss += dirichlet_energy(nu_p, new.v.x) + dirichlet_energy(nu_p, new.v.y)
        floor += h1_seminorm_sq(new.v)
    if sc.evolve_u:
        diss += dirichlet_energy(mu_p, u_star.x) + dirichlet_energy(mu_p, u_star.y)
        floor += h1_seminorm_sq(u_star)

    work = 0.0
    inc = 0.0
    if sc.evolve_theta:
        work += inner(n_theta, new.theta)
        d = new.theta - old.theta
        inc += inner(d, d)
    if sc.evolve_v:
        work += inner(n_v, new.v)
        d = new.v - old.v
        inc += inner(d, d)
    if sc.evolve_u:
        work += inner(n_u, u_star)
        d = u_star - old.u
        inc += inner(d, d)
    gphi = gradient(phi, out_bc=DIRICHLET)
    proj_sq = inner(gphi, gphi)

    fwork = 0.0
    if f_theta is not None:
        fwork += inner(f_theta, new.theta)
    if f_v is not None:
        fwork += inner(f_v, new.v)
    if f_u is not None:
        fwork += inner(f_u, u_star)

    coupling = (
        inner(tensor_div(old.v), old.u) + inner(convect(old.v, old.u), old.v)
        + inner(gradient(old.theta, out_bc=DIRICHLET), old.v)
        + inner(old.theta, divergence(old.v))
        + inner(advect(old.u, old.theta, form=sc.advection_form), old.theta)
        + inner(advect(old.u, old.v, form=sc.advection_form), old.v)
        + inner(advect(old.u, old.u, form=sc.advection_form), old.u)
    )
    return StepInternals(dt, diss, c.sigma_inv * floor, work, inc, proj_sq,
                         coupling, fwork)


# ---------------------------------------------------------------------------
# trajectory driver
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    grid: Grid
    sigma: float
    records: list = dc_field(default_factory=list)     # EnergyRecord
    snapshots: list = dc_field(default_factory=list)   # (t, theta interior array)
    final_state: State | None = None


def run(state: State, c: CoeffSet, sc: StepConfig,
        outdir: str | None = None,
        project_initial: bool = True) -> Trajectory:
    """Step to end_time, emitting records and theta snapshots.

    The initial barotropic velocity is projected so the State invariant holds
    from the first record; with end_time = 0 only the initial record is kept.
    """
    from thermoflow.diagnostics import energy_ledger

    spec = sc.solver_spec()
    if project_initial and sc.evolve_u:
        u0, _, _ = project_div_free(state.u, spec)
        state = State(u0, state.v, state.theta, state.p, state.t)
    traj = Trajectory(state.grid, c.sigma)
    traj.records.append(energy_ledger(state, state, 0.0, None, c))
    traj.snapshots.append((state.t, state.theta.values.copy()))
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        _write_snapshot(outdir, 0, state)

    n = 0
    t_end = state.t + sc.end_time
    try:
        while state.t < t_end - 1e-14:
            dt = compute_dt(state, sc)
            dt = min(dt, t_end - state.t)
            recording = bool(sc.record_interval) and (n + 1) % sc.record_interval == 0
            new_state, internals = step(state, c, sc, dt=dt, step_index=n + 1,
                                        with_internals=recording)
            n += 1
            if recording:
                traj.records.append(energy_ledger(state, new_state, dt, internals, c))
            if sc.snapshot_interval and n % sc.snapshot_interval == 0:
                traj.snapshots.append((new_state.t, new_state.theta.values.copy()))
                if outdir:
                    _write_snapshot(outdir, n, new_state)
            state = new_state
    except Exception:
        if outdir:
            _write_ledger(outdir, traj)
        raise
    traj.final_state = state
    if traj.snapshots[-1][0] < state.t:
        traj.snapshots.append((state.t, state.theta.values.copy()))
    if outdir:
        _write_ledger(outdir, traj)
    return traj


def _write_snapshot(outdir: str, n: int, s: State) -> None:
    save_snapshot_csv(os.path.join(outdir, f"theta_{n:06d}.csv"), s.theta, s.t)


def _write_ledger(outdir: str, traj: Trajectory) -> None:
    from thermoflow.diagnostics import ledger_to_csv

    ledger_to_csv(os.path.join(outdir, "ledger.csv"), traj)


# ---------------------------------------------------------------------------
# checkpointing: text header + raw row-major float64 dumps + config echo
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"THERMOFLOW-CKPT-1\n"
_FIELD_ORDER = ("u.x", "u.y", "v.x", "v.y", "theta", "p")


def save_checkpoint(path, s: State, config_echo: str = "") -> None:
    g = s.grid
    arrays = (s.u.x, s.u.y, s.v.x, s.v.y, s.theta, s.p)
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(f"{g.nx} {g.ny} {g.lx!r} {g.ly!r} {float(s.t)!r}\n".encode())
        fh.write(" ".join(f.bc for f in arrays).encode() + b"\n")
        for f in arrays:
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
        fh.write(b"\n[config-echo]\n")
        fh.write(config_echo.encode())


def load_checkpoint(path) -> tuple[State, str]:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        nx_s, ny_s, lx_s, ly_s, t_s = fh.readline().split()
        nx, ny = int(nx_s), int(ny_s)
        tags = fh.readline().decode().split()
        g = Grid(nx, ny, float(lx_s), float(ly_s))
        fields = []
        count = nx * ny
        for tag in tags:
            buf = fh.read(8 * count)
            vals = np.frombuffer(buf, dtype="<f8").reshape(nx, ny).copy()
            fields.append(ScalarField(g, vals, tag))
        rest = fh.read().decode()
    echo = rest.split("[config-echo]\n", 1)[-1]
    ux, uy, vx, vy, theta, p = fields
    return State(VectorField(ux, uy), VectorField(vx, vy), theta, p, float(t_s)), echo
