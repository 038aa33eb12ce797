"""Matrix-free elliptic solvers: Poisson, variable-coefficient Helmholtz,
divergence-free projection and the variable-coefficient Stokes system.

All solves use conjugate gradients with a diagonal preconditioner on the
5-point (or composed centered) stencils; desk-scale grids converge quickly
and the matrix-free form keeps the operators identical to the ones the
diagnostics test.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from thermoflow.grid import DIRICHLET, Grid, ScalarField, VectorField, zero_scalar
from thermoflow.operators import (
    divergence,
    gradient,
    inner,
    l2_norm,
    var_diffuse,
    _face_coeffs,
)


class SolverError(RuntimeError):
    """Iteration cap exceeded or stagnation."""


@dataclass(frozen=True)
class SolverSpec:
    """Conjugate gradient with diagonal preconditioning."""

    rel_tol: float = 1e-10
    max_iter: int = 20000
    method: str = "pcg"

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-4):
            raise ValueError(f"rel_tol must be in (0, 1e-4], got {self.rel_tol}")
        if self.max_iter < 10:
            raise ValueError(f"max_iter must be >= 10, got {self.max_iter}")


@dataclass
class SolveInfo:
    iters: int
    residual: float
    rhs_norm: float
    history: list = dc_field(default_factory=list)


def _pcg(apply_op, b: np.ndarray, diag: np.ndarray | float, spec: SolverSpec,
         x0: np.ndarray | None = None, name: str = "pcg") -> tuple[np.ndarray, SolveInfo]:
    """Preconditioned CG on 2D arrays; returns (x, info) or raises SolverError."""
    b_norm = float(np.sqrt(np.sum(b * b)))
    if b_norm == 0.0:
        return np.zeros_like(b), SolveInfo(0, 0.0, 0.0)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_op(x)
    z = r / diag
    p = z.copy()
    rz = float(np.sum(r * z))
    tol = spec.rel_tol * b_norm
    history: list[float] = []
    for it in range(1, spec.max_iter + 1):
        Ap = apply_op(p)
        pAp = float(np.sum(p * Ap))
        if pAp <= 0.0:
            raise SolverError(f"{name}: operator lost positive definiteness (pAp={pAp:.3g})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = float(np.sqrt(np.sum(r * r)))
        history.append(res)
        if res <= tol:
            return x, SolveInfo(it, res, b_norm, history)
        z = r / diag
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"{name}: iteration cap {spec.max_iter} exceeded, final residual "
        f"{res:.3e} (target {tol:.3e})"
    )


# ---------------------------------------------------------------------------
# Poisson with homogeneous Dirichlet data
# ---------------------------------------------------------------------------

def solve_poisson_dirichlet(g: ScalarField, spec: SolverSpec,
                            x0: np.ndarray | None = None) -> tuple[ScalarField, SolveInfo]:
    """-lap f = g, f = 0 on the boundary (compact 5-point stencil)."""
    grid = g.grid

    def apply_op(x):
        return -var_diffuse(1.0, ScalarField(grid, x, DIRICHLET)).values

    diag = 2.0 / grid.hx ** 2 + 2.0 / grid.hy ** 2
    x, info = _pcg(apply_op, g.values, diag, spec, x0=x0, name="poisson")
    return ScalarField(grid, x, DIRICHLET), info


def poisson_regularity_ratio(f: ScalarField, g: ScalarField) -> float:
    """Observed ||f||_{H2_h} / ||g||_{L2} for a Poisson pair (reported only)."""
    from thermoflow.operators import h1_seminorm_sq, laplacian

    h2 = np.sqrt(
        inner(f, f) + h1_seminorm_sq(f) + inner(laplacian(f), laplacian(f))
    )
    gn = l2_norm(g)
    return h2 / gn if gn > 0 else 0.0


# ---------------------------------------------------------------------------
# variable-coefficient Helmholtz (implicit diffusion step)
# ---------------------------------------------------------------------------

def solve_helmholtz_var(a, lam: float, rhs: ScalarField, spec: SolverSpec,
                        sigma_inv: float | None = None,
                        x0: np.ndarray | None = None) -> tuple[ScalarField, SolveInfo]:
    """(I - lam * div(a grad .)) f = rhs with rhs's boundary tag."""
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    grid = rhs.grid
    bc = rhs.bc

    def apply_op(x):
        f = ScalarField(grid, x, bc)
        return x - lam * var_diffuse(a, f, sigma_inv=sigma_inv).values

    ax, ay = _face_coeffs(a, rhs)
    diag = 1.0 + lam * (
        (ax[1:, :] + ax[:-1, :]) / grid.hx ** 2 + (ay[:, 1:] + ay[:, :-1]) / grid.hy ** 2
    )
    x, info = _pcg(apply_op, rhs.values, diag, spec, x0=x0, name="helmholtz")
    return ScalarField(grid, x, bc), info


# ---------------------------------------------------------------------------
# divergence-free projection
# ---------------------------------------------------------------------------

def _proj_apply(grid: Grid, x: np.ndarray) -> np.ndarray:
    """G^T G phi, with G the centered Dirichlet gradient.

    Using the composition (rather than the compact Laplacian) makes the
    projected field divergence-free with respect to the same centered
    divergence the diagnostics measure.
    """
    phi = ScalarField(grid, x, DIRICHLET)
    return -divergence(gradient(phi, out_bc=DIRICHLET)).values


def project_div_free(u_star: VectorField, spec: SolverSpec,
                     x0: np.ndarray | None = None) -> tuple[VectorField, ScalarField, SolveInfo]:
    """Hodge projection: u = u_star - grad(phi) with G^T G phi = G^T u_star.

    The remaining divergence equals the CG residual directly, so it is
    driven to rel_tol * ||div u_star||.
    """
    grid = u_star.grid
    rhs = -divergence(u_star).values  # G^T u_star
    diag = 1.0 / (2.0 * grid.hx ** 2) + 1.0 / (2.0 * grid.hy ** 2)
    x, info = _pcg(lambda v: _proj_apply(grid, v), rhs, diag, spec, x0=x0,
                   name="projection")
    phi = ScalarField(grid, x, DIRICHLET)
    u = u_star - gradient(phi, out_bc=u_star.x.bc)
    return u, phi, info


# ---------------------------------------------------------------------------
# variable-coefficient Stokes via Uzawa iteration
# ---------------------------------------------------------------------------

@dataclass
class StokesResult:
    u: VectorField
    p: ScalarField
    outer_iters: int
    div_norm: float
    momentum_residual: float
    energy_gap: float          # |<mu grad u, grad u> - <f, u>| / |<f, u>|
    hminus1_ratio: float       # (||u||_H1 + ||p||_L2) / H^-1 proxy of f
    h2_ratio: float            # ||lap u||_L2 / ||f||_L2 (reported only)
    div_history: list


def _pressure_gradient(p: ScalarField) -> VectorField:
    # Dirichlet-style ghosts: with this convention the discrete duality
    # <grad p, w> = -<p, div w> is exact, the pressure has no constant
    # nullspace, and the Stokes energy identity closes to solver tolerance.
    return gradient(ScalarField(p.grid, p.values, DIRICHLET), out_bc=DIRICHLET)


def solve_stokes_var(mu, f: VectorField, spec: SolverSpec,
                     outer_max: int = 4000,
                     c_min: float | None = None) -> StokesResult:
    """Steady -div(mu grad u) + grad p = f, div u = 0, u|_bdry = 0.

    The pressure solves the Schur-complement system S p = -div(A^{-1} f)
    with S = -div(A^{-1} grad .) and A = -div(mu grad .), by outer CG; each
    application of S costs two inner A-solves. Plain Uzawa relaxation stalls
    here because the centered gradient nearly annihilates checkerboard
    pressure modes (S eigenvalues of order h^2); CG picks those modes up.
    The outer residual is the divergence of the associated velocity, so the
    iteration terminates exactly when the projection constraint is met.
    """
    grid = f.grid
    mu_field = mu if isinstance(mu, ScalarField) else ScalarField(
        grid, np.full(grid.shape, float(mu)), "neumann")
    if c_min is not None and float(mu_field.values.min()) < c_min:
        raise SolverError(
            f"viscosity minimum {float(mu_field.values.min()):.6g} below required {c_min:.6g}"
        )

    def apply_A(x):
        return -var_diffuse(mu_field, ScalarField(grid, x, DIRICHLET)).values

    ax, ay = _face_coeffs(mu_field, zero_scalar(grid))
    diag = (ax[1:, :] + ax[:-1, :]) / grid.hx ** 2 + (ay[:, 1:] + ay[:, :-1]) / grid.hy ** 2

    inner_spec = SolverSpec(rel_tol=min(spec.rel_tol, 1e-12), max_iter=spec.max_iter)
    warm = {"x": np.zeros(grid.shape), "y": np.zeros(grid.shape)}

    def solve_A(bx, by, key):
        x, _ = _pcg(apply_A, bx, diag, inner_spec, x0=warm[key + "x"] if key else None,
                    name="stokes-inner")
        y, _ = _pcg(apply_A, by, diag, inner_spec, x0=warm[key + "y"] if key else None,
                    name="stokes-inner")
        if key:
            warm[key + "x"], warm[key + "y"] = x, y
        return x, y

    warm["fx"], warm["fy"] = np.zeros(grid.shape), np.zeros(grid.shape)
    uf_x, uf_y = solve_A(f.x.values, f.y.values, "f")
    uf = VectorField(ScalarField(grid, uf_x, DIRICHLET), ScalarField(grid, uf_y, DIRICHLET))
    b = -divergence(uf).values  # right-hand side of the Schur system

    def apply_S(pv):
        gp = _pressure_gradient(ScalarField(grid, pv, DIRICHLET))
        wx, _ = _pcg(apply_A, gp.x.values, diag, inner_spec, name="stokes-inner")
        wy, _ = _pcg(apply_A, gp.y.values, diag, inner_spec, name="stokes-inner")
        w = VectorField(ScalarField(grid, wx, DIRICHLET), ScalarField(grid, wy, DIRICHLET))
        return -divergence(w).values

    schur_spec = SolverSpec(rel_tol=spec.rel_tol, max_iter=outer_max)
    p_vals, info = _pcg(apply_S, b, 1.0 / mu_field.values, schur_spec, name="stokes-schur")
    p = ScalarField(grid, p_vals, DIRICHLET)

    gp = _pressure_gradient(p)
    ux, uy = solve_A(f.x.values - gp.x.values, f.y.values - gp.y.values, None)
    u = VectorField(ScalarField(grid, ux, DIRICHLET), ScalarField(grid, uy, DIRICHLET))
    div_norm = l2_norm(divergence(u))
    div_history = list(info.history)
    div_history.append(div_norm)
    f_norm = max(np.sqrt(l2_norm(f.x) ** 2 + l2_norm(f.y) ** 2), 1e-300)
    outer = info.iters
    res_x = apply_A(ux) + gp.x.values - f.x.values
    res_y = apply_A(uy) + gp.y.values - f.y.values
    mom_res = np.sqrt(
        inner(ScalarField(grid, res_x, DIRICHLET), ScalarField(grid, res_x, DIRICHLET))
        + inner(ScalarField(grid, res_y, DIRICHLET), ScalarField(grid, res_y, DIRICHLET))
    ) / f_norm

    from thermoflow.operators import dirichlet_energy, h1_seminorm_sq, laplacian

    energy_lhs = dirichlet_energy(mu_field, u.x) + dirichlet_energy(mu_field, u.y)
    energy_rhs = inner(f, u)
    energy_gap = abs(energy_lhs - energy_rhs) / max(abs(energy_rhs), 1e-300)

    # H^-1 proxy: <f, (-lap)^{-1} f>^{1/2}, one Poisson solve per component
    fx_inv, _ = solve_poisson_dirichlet(f.x, spec)
    fy_inv, _ = solve_poisson_dirichlet(f.y, spec)
    hm1 = np.sqrt(max(inner(f.x, fx_inv) + inner(f.y, fy_inv), 0.0))
    u_h1 = np.sqrt(inner(u, u) + h1_seminorm_sq(u))
    hm1_ratio = (u_h1 + l2_norm(p)) / hm1 if hm1 > 0 else 0.0
    h2 = np.sqrt(l2_norm(laplacian(u.x)) ** 2 + l2_norm(laplacian(u.y)) ** 2)
    h2_ratio = h2 / f_norm

    return StokesResult(u, p, outer, div_history[-1], mom_res, energy_gap,
                        hm1_ratio, h2_ratio, div_history)
