"""Norms, decay-rate fits, the Poincare constant and the level-set
truncation (De Giorgi-type) machinery evaluated on simulation data.

Conventions:
* H1 seminorms are the face-difference form (boundary faces included), the
  same quadratic form the flux-form diffusion dissipates, so the per-step
  inequality dissipation >= (1/sigma) * sum H1^2 is exact algebra.
* H2 seminorms are ||lap_h f||_L2 (mixed second differences at the boundary
  are noisy; the Laplacian bound is the standard elliptic surrogate).
* Time-integral norms over a trajectory use the trapezoidal rule on the
  record/snapshot times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, fields as dc_fields

import numpy as np

from thermoflow.elliptic import SolverSpec, SolverError, solve_poisson_dirichlet
from thermoflow.grid import DIRICHLET, Grid, ScalarField, State, VectorField
from thermoflow.operators import (
    divergence,
    h1_seminorm_sq,
    inner,
    l2_norm,
    laplacian,
)


# ---------------------------------------------------------------------------
# norm bundles
# ---------------------------------------------------------------------------

@dataclass
class NormBundle:
    l2: float
    l4: float
    l6: float
    lr: float
    linf: float
    h1: float          # face seminorm
    h2: float          # ||lap f||_L2

    def sobolev_h1(self) -> float:
        return math.sqrt(self.l2 ** 2 + self.h1 ** 2)


def _lp(mag_p, area, p) -> float:
    return float((area * np.sum(mag_p)) ** (1.0 / p))


def norms(f, r: float = 2.0) -> NormBundle:
    """Quadrature-weighted discrete L2/L4/L6/L^r/Linf/H1/H2 norms."""
    if isinstance(f, VectorField):
        area = f.grid.cell_area
        mag = np.sqrt(f.x.values ** 2 + f.y.values ** 2)
        h2 = math.sqrt(l2_norm(laplacian(f.x)) ** 2 + l2_norm(laplacian(f.y)) ** 2)
        return NormBundle(
            _lp(mag ** 2, area, 2), _lp(mag ** 4, area, 4), _lp(mag ** 6, area, 6),
            _lp(mag ** r, area, r), float(mag.max(initial=0.0)),
            math.sqrt(h1_seminorm_sq(f)), h2,
        )
    area = f.grid.cell_area
    mag = np.abs(f.values)
    return NormBundle(
        _lp(mag ** 2, area, 2), _lp(mag ** 4, area, 4), _lp(mag ** 6, area, 6),
        _lp(mag ** r, area, r), float(mag.max(initial=0.0)),
        math.sqrt(h1_seminorm_sq(f)), l2_norm(laplacian(f)),
    )


# ---------------------------------------------------------------------------
# Poincare constant via inverse power iteration
# ---------------------------------------------------------------------------

def poincare_constant(grid: Grid, spec: SolverSpec | None = None,
                      tol: float = 1e-12, max_iter: int = 200) -> float:
    """C* = 1/lambda_1 of the Dirichlet 5-point Laplacian.

    Inverse power iteration with the Poisson solver; every discrete Dirichlet
    field then satisfies ||f||^2 <= C* ||grad_h f||^2 exactly.
    """
    spec = spec or SolverSpec(rel_tol=1e-12, max_iter=100000)
    X, Y = grid.xy()
    f = ScalarField(grid, np.sin(np.pi * X / grid.lx) * np.sin(np.pi * Y / grid.ly),
                    DIRICHLET)
    lam_old = 0.0
    for _ in range(max_iter):
        f = f.like(f.values / l2_norm(f))
        g, _ = solve_poisson_dirichlet(f, spec, x0=f.values)
        lam = inner(f, f) / inner(g, f)   # Rayleigh quotient of the inverse
        if abs(lam - lam_old) <= tol * abs(lam):
            return 1.0 / lam
        lam_old = lam
        f = g
    raise SolverError(f"inverse power iteration stagnated (last lambda {lam:.8g})")


# ---------------------------------------------------------------------------
# decay-rate fitting
# ---------------------------------------------------------------------------

@dataclass
class DecayReport:
    alpha_hat: float          # fitted rate of the series as given
    alpha_pred: float         # (C* sigma)^{-1}; e^{-2 alpha t} for squared L2
    ratio: float
    r_squared: float
    window: tuple
    n_samples: int
    convention: str = "fits the series as given; squared norms decay at 2*alpha"


def fit_decay_rate(times, values, window: tuple | None = None,
                   alpha_pred: float = 1.0) -> DecayReport:
    """Least-squares slope of log(value) against t; alpha_hat = -slope."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is not None:
        mask = (t >= window[0]) & (t <= window[1])
        t, y = t[mask], y[mask]
    if len(t) < 10:
        raise ValueError(f"need >= 10 samples in the fit window, got {len(t)}")
    if np.any(y <= 0.0):
        raise ValueError("decay fit requires strictly positive values in the window")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    alpha_hat = -float(slope)
    return DecayReport(alpha_hat, alpha_pred,
                       alpha_hat / alpha_pred if alpha_pred else float("nan"),
                       min(r2, 1.0), (float(t[0]), float(t[-1])), len(t))


def tail_window(times) -> tuple:
    """Default fit window: the tail half of the record times."""
    t = np.asarray(times, dtype=float)
    return (float(t[0] + 0.5 * (t[-1] - t[0])), float(t[-1]))


# ---------------------------------------------------------------------------
# recurrence iteration (threshold A_0 <= a^{-1/(g-1)} b^{-1/(g-1)^2})
# ---------------------------------------------------------------------------

@dataclass
class RecurrenceReport:
    sequence: list
    threshold: float
    below_threshold: bool
    converged: bool


def iterate_lemma_sequence(a: float, b: float, gamma: float, a0: float,
                           k_max: int = 40) -> RecurrenceReport:
    """Iterate A_{k+1} = a b^k A_k^gamma and test the contraction threshold."""
    if a <= 0 or b <= 1 or gamma <= 1 or a0 < 0:
        raise ValueError(
            f"need a>0, b>1, gamma>1, A0>=0; got a={a}, b={b}, gamma={gamma}, A0={a0}"
        )
    threshold = a ** (-1.0 / (gamma - 1.0)) * b ** (-1.0 / (gamma - 1.0) ** 2)
    seq = [float(a0)]
    for k in range(k_max):
        try:
            nxt = a * b ** k * seq[-1] ** gamma
        except OverflowError:
            nxt = float("inf")
        if not np.isfinite(nxt):
            seq.append(float("inf"))
            break
        seq.append(float(nxt))
    converged = np.isfinite(seq[-1]) and seq[-1] < min(seq[0], 1.0) and seq[-1] < 1e-12
    if a0 == 0.0:
        converged = True
    return RecurrenceReport(seq, threshold, a0 <= threshold, converged)


# ---------------------------------------------------------------------------
# level-set truncation monitor and bound
# ---------------------------------------------------------------------------

@dataclass
class DeGiorgiReport:
    m: float
    levels: list                   # N_k = M (1 - 2^{-k-1})
    a_seq: list                    # A_k for +theta
    a_seq_neg: list                # A_k for -theta
    phi: float                     # L6_t L6 norm of v
    phi_hat: float                 # L4_t L4 norm of theta
    c1: float
    c2: float
    sup_abs_theta: float
    bounded: bool                  # sup |theta| <= M on the stored snapshots


def _truncation_a(snapshots, grid: Grid, level: float, sigma: float) -> float:
    """A_k = sup_t ||(theta-N)_+||^2 + (1/sigma) int ||grad (theta-N)_+||^2 dt."""
    sup_sq = 0.0
    grads = []
    times = []
    for t, vals in snapshots:
        trunc = ScalarField(grid, np.maximum(vals - level, 0.0), DIRICHLET)
        sup_sq = max(sup_sq, inner(trunc, trunc))
        grads.append(h1_seminorm_sq(trunc))
        times.append(t)
    integral = float(np.trapezoid(np.asarray(grads), np.asarray(times))) if len(times) > 1 else 0.0
    return sup_sq + integral / sigma


def degiorgi_monitor(snapshots, grid: Grid, m: float, k_max: int = 20,
                     sigma: float = 1.0) -> DeGiorgiReport:
    """Compute the truncation quantities A_k for levels N_k = M(1-2^{-k-1}),
    for +theta and -theta, and check sup |theta| against M."""
    if m <= 0:
        raise ValueError(f"level cap M must be positive, got {m}")
    levels = [m * (1.0 - 2.0 ** (-k - 1)) for k in range(k_max + 1)]
    a_seq = [_truncation_a(snapshots, grid, lv, sigma) for lv in levels]
    neg = [(t, -vals) for t, vals in snapshots]
    a_neg = [_truncation_a(neg, grid, lv, sigma) for lv in levels]
    sup_abs = max(float(np.max(np.abs(v))) for _, v in snapshots)
    return DeGiorgiReport(m, levels, a_seq, a_neg, float("nan"), float("nan"),
                          float("nan"), float("nan"), sup_abs, sup_abs <= m)


def _time_lp(times, values_p, p) -> float:
    arr = np.asarray(values_p, dtype=float)
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        return 0.0
    return float(np.trapezoid(arr, t) ** (1.0 / p))


def degiorgi_bound(records, theta0_linf: float, c1: float = 1.0,
                   c2: float = 1.0) -> tuple[float, float, float]:
    """Level cap M = 16 c1^{9/32} c2^{3/32} Phi^{3/4} PhiHat^{1/4}, floored at
    4 ||theta_0||_Linf; Phi and PhiHat are the L6_t L6 / L4_t L4 space-time
    norms of v and theta accumulated from the records.

    Returns (M, Phi, PhiHat).
    """
    if not records:
        raise ValueError("empty trajectory: no records to accumulate")
    if c1 <= 0 or c2 <= 0:
        raise ValueError(f"constants must be positive, got c1={c1}, c2={c2}")
    times = [r.t for r in records]
    phi = _time_lp(times, [r.l6_v ** 6 for r in records], 6)
    phi_hat = _time_lp(times, [r.l4_theta ** 4 for r in records], 4)
    m_formula = 16.0 * c1 ** (9.0 / 32.0) * c2 ** (3.0 / 32.0) * phi ** 0.75 * phi_hat ** 0.25
    return max(m_formula, 4.0 * theta0_linf), phi, phi_hat


def calibrate_truncation_constants(snapshots, grid: Grid, sigma: float = 1.0,
                                   levels=None, safety: float = 2.0) -> tuple[float, float]:
    """Empirical interpolation constants for the truncation recurrence.

    The constants pair the space-time L4 norm of a (truncated) field against
    sup_t L2 and the time-integrated gradient; the max observed ratio of
    ||f||_{L4_t L4}^{8/3} to (sup_t ||f||^{1/2} ||grad f||_{L2_t L2}^{1/2})^{8/3}
    over the run, times a safety factor, stands in for the non-constructive
    constants.
    """
    sup_abs = max(float(np.max(np.abs(v))) for _, v in snapshots)
    if levels is None:
        levels = [0.0, 0.25 * sup_abs, 0.5 * sup_abs]
    ratio_max = 0.0
    times = [t for t, _ in snapshots]
    for lv in levels:
        l4s, l2s, grads = [], [], []
        for _, vals in snapshots:
            trunc = ScalarField(grid, np.maximum(vals - lv, 0.0), DIRICHLET)
            nb = norms(trunc)
            l4s.append(nb.l4 ** 4)
            l2s.append(nb.l2)
            grads.append(nb.h1 ** 2)
        l4t = _time_lp(times, l4s, 4)
        supl2 = max(l2s)
        gradt = math.sqrt(max(float(np.trapezoid(np.asarray(grads), np.asarray(times))), 0.0))
        denom = (math.sqrt(supl2) * math.sqrt(gradt)) ** (8.0 / 3.0)
        if denom > 0:
            ratio_max = max(ratio_max, l4t ** (8.0 / 3.0) / denom)
    if ratio_max == 0.0:
        return 1.0, 1.0
    return safety * ratio_max, safety * ratio_max


# ---------------------------------------------------------------------------
# energy ledger
# ---------------------------------------------------------------------------

@dataclass
class EnergyRecord:
    t: float
    l2_u: float
    l2_v: float
    l2_theta: float
    h1_u: float
    h1_v: float
    h1_theta: float
    h2_u: float
    h2_v: float
    h2_theta: float
    energy: float               # ||u||^2 + ||v||^2 + ||theta||^2
    dissipation: float
    sigma_h1_floor: float
    ledger_residual: float      # closure defect of the per-step identity
    coupling_residual: float
    linf_theta: float
    l4_v: float
    l6_v: float
    l4_theta: float
    div_u: float
    dt: float = 0.0


def energy_ledger(s_prev: State, s_next: State, dt: float,
                  internals, c=None) -> EnergyRecord:
    """Per-step discrete energy budget.

    The implicit-Euler identity per diffused field f is
        ||f+||^2 - ||f||^2 = 2 dt <N + div(a grad f+), f+> - ||f+ - f||^2,
    and the projection removes exactly ||grad phi||^2, so the closure
        dE + 2 dt (dissipation - explicit_work) + increments + projection = 0
    holds up to linear-solve tolerance; the residual reports the defect
    relative to the energy scale.
    """
    nu_ = norms(s_next.u)
    nv = norms(s_next.v)
    nth = norms(s_next.theta)
    energy = nu_.l2 ** 2 + nv.l2 ** 2 + nth.l2 ** 2
    div_u = l2_norm(divergence(s_next.u))

    if internals is None or dt == 0.0:
        return EnergyRecord(
            s_next.t, nu_.l2, nv.l2, nth.l2, nu_.h1, nv.h1, nth.h1,
            nu_.h2, nv.h2, nth.h2, energy, 0.0, 0.0, 0.0, 0.0,
            nth.linf, nv.l4, nv.l6, nth.l4, div_u, 0.0,
        )

    e_prev = (l2_norm(s_prev.u.x) ** 2 + l2_norm(s_prev.u.y) ** 2
              + l2_norm(s_prev.v.x) ** 2 + l2_norm(s_prev.v.y) ** 2
              + l2_norm(s_prev.theta) ** 2)
    closure = (
        energy - e_prev
        + 2.0 * dt * (internals.dissipation - internals.explicit_work)
        + internals.increment_sq
        + internals.projection_sq
    )
    scale = max(energy, e_prev, 1e-300)
    coupling_rel = internals.coupling_residual / scale
    return EnergyRecord(
        s_next.t, nu_.l2, nv.l2, nth.l2, nu_.h1, nv.h1, nth.h1,
        nu_.h2, nv.h2, nth.h2, energy, internals.dissipation,
        internals.sigma_h1_floor, abs(closure) / scale, abs(coupling_rel),
        nth.linf, nv.l4, nv.l6, nth.l4, div_u, dt,
    )


# ---------------------------------------------------------------------------
# ledger CSV I/O
# ---------------------------------------------------------------------------

_LEDGER_FIELDS = [f.name for f in dc_fields(EnergyRecord)]


def ledger_to_csv(path, traj) -> None:
    with open(path, "w") as fh:
        fh.write(f"# grid {traj.grid.nx} {traj.grid.ny} {traj.grid.lx!r} "
                 f"{traj.grid.ly!r} sigma {float(traj.sigma)!r}\n")
        fh.write(",".join(_LEDGER_FIELDS) + "\n")
        for r in traj.records:
            fh.write(",".join(repr(float(getattr(r, k))) for k in _LEDGER_FIELDS) + "\n")


def ledger_from_csv(path):
    """Returns (grid, sigma, records)."""
    from thermoflow.grid import make_grid

    records = []
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "grid"]:
            raise ValueError(f"{path}: missing ledger header")
        nx, ny, lx, ly = int(header[2]), int(header[3]), float(header[4]), float(header[5])
        sigma = float(header[7])
        cols = fh.readline().strip().split(",")
        for line in fh:
            vals = dict(zip(cols, (float(x) for x in line.strip().split(","))))
            records.append(EnergyRecord(**vals))
    return make_grid(nx, ny, lx, ly), sigma, records
