"""Discrete differential operators with exact algebraic structure.

All operators are built from one centered-difference family on padded arrays
so that, for Dirichlet fields, the following hold to machine precision:

* duality          <grad f, w> = -<f, div w>
* skew-symmetry    <advect(u, f), f> = 0
* dissipativity    <var_diffuse(a, f), f> = -sum_faces a_face |df|^2
* cancellation     <tensor_div(v), u> + <convect(v, u), v> = 0

The variable-coefficient diffusion is in flux form with arithmetic face
averages, which keeps the operator symmetric and preserves the coefficient
lower bound on the discrete Dirichlet form.
"""

from __future__ import annotations

import numpy as np

from thermoflow.grid import (
    DIRICHLET,
    Grid,
    ScalarField,
    VectorField,
    pad_values,
)


# ---------------------------------------------------------------------------
# inner product
# ---------------------------------------------------------------------------

def inner(f, g) -> float:
    """Quadrature-weighted L2 inner product over interior nodes."""
    if isinstance(f, VectorField):
        return inner(f.x, g.x) + inner(f.y, g.y)
    a = f.values if isinstance(f, ScalarField) else np.asarray(f)
    b = g.values if isinstance(g, ScalarField) else np.asarray(g)
    grid = f.grid if isinstance(f, ScalarField) else g.grid
    return grid.cell_area * float(np.sum(a * b))


def l2_norm(f) -> float:
    return np.sqrt(max(inner(f, f), 0.0))


# ---------------------------------------------------------------------------
# centered first differences on padded arrays
# ---------------------------------------------------------------------------

def _dx(fp: np.ndarray, hx: float) -> np.ndarray:
    return (fp[2:, 1:-1] - fp[:-2, 1:-1]) / (2.0 * hx)


def _dy(fp: np.ndarray, hy: float) -> np.ndarray:
    return (fp[1:-1, 2:] - fp[1:-1, :-2]) / (2.0 * hy)


def gradient(f: ScalarField, out_bc: str = DIRICHLET) -> VectorField:
    """Centered gradient; ``out_bc`` tags the components for later padding.

    The Dirichlet default makes divergence(gradient(.)) the exact algebraic
    transpose-product used by the projection solver.
    """
    g = f.grid
    fp = f.padded()
    return VectorField(
        ScalarField(g, _dx(fp, g.hx), out_bc),
        ScalarField(g, _dy(fp, g.hy), out_bc),
    )


def divergence(w: VectorField) -> ScalarField:
    g = w.grid
    vals = _dx(w.x.padded(), g.hx) + _dy(w.y.padded(), g.hy)
    return ScalarField(g, vals, DIRICHLET)


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------

def _advect_scalar(u: VectorField, f: ScalarField, form: str) -> ScalarField:
    g = f.grid
    fp = f.padded()
    conv = u.x.values * _dx(fp, g.hx) + u.y.values * _dy(fp, g.hy)
    if form == "convective":
        return ScalarField(g, conv, f.bc)
    # skew-symmetric split: products are padded factorwise so a Dirichlet
    # factor zeroes the ghost ring and summation by parts is exact
    uxp = u.x.padded()
    uyp = u.y.padded()
    flux = _dx(uxp * fp, g.hx) + _dy(uyp * fp, g.hy)
    return ScalarField(g, 0.5 * (conv + flux), f.bc)


def advect(u: VectorField, f, form: str = "skew"):
    """Transport of f by u: 0.5 [u.grad f + div(u f)] (or pure convective).

    The convective form is a deliberately non-conservative fixture used as a
    negative control; production stepping always uses the skew form.
    """
    if isinstance(f, VectorField):
        return VectorField(
            _advect_scalar(u, f.x, form), _advect_scalar(u, f.y, form)
        )
    return _advect_scalar(u, f, form)


def convect(w: VectorField, f) :
    """Plain (w . grad) f, the partner of tensor_div in the energy pairing."""
    return advect(w, f, form="convective")


def tensor_div(v: VectorField) -> VectorField:
    """Divergence of the outer product v (x) v, centered stencils."""
    g = v.grid
    vxp = v.x.padded()
    vyp = v.y.padded()
    out_x = _dx(vxp * vxp, g.hx) + _dy(vyp * vxp, g.hy)
    out_y = _dx(vxp * vyp, g.hx) + _dy(vyp * vyp, g.hy)
    return VectorField(
        ScalarField(g, out_x, v.x.bc), ScalarField(g, out_y, v.y.bc)
    )


# ---------------------------------------------------------------------------
# variable-coefficient diffusion in flux form
# ---------------------------------------------------------------------------

class CoefficientBoundError(ValueError):
    """Diffusion coefficient dipped below the configured lower bound."""


def _coeff_padded(a, f: ScalarField) -> np.ndarray:
    if isinstance(a, np.ndarray):
        if a.shape == (f.grid.nx + 2, f.grid.ny + 2):
            return a
        return pad_values(np.asarray(a, dtype=float), "neumann")
    if isinstance(a, ScalarField):
        return a.padded()
    # scalar coefficient
    return np.full((f.grid.nx + 2, f.grid.ny + 2), float(a))


def _face_coeffs(a, f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    ap = _coeff_padded(a, f)
    ax = 0.5 * (ap[1:, 1:-1] + ap[:-1, 1:-1])     # (nx+1, ny) x-faces
    ay = 0.5 * (ap[1:-1, 1:] + ap[1:-1, :-1])     # (nx, ny+1) y-faces
    return ax, ay


def var_diffuse(a, f: ScalarField, sigma_inv: float | None = None) -> ScalarField:
    """div(a grad f) in flux form with arithmetic face averages.

    ``a`` may be a ScalarField, a pre-padded (nx+2, ny+2) array, an interior
    array, or a scalar. If ``sigma_inv`` is given, coefficients below it are
    rejected (the coefficient hypothesis is violated).
    """
    g = f.grid
    ax, ay = _face_coeffs(a, f)
    if sigma_inv is not None and (ax.min() < sigma_inv - 1e-12 or ay.min() < sigma_inv - 1e-12):
        raise CoefficientBoundError(
            f"coefficient minimum {min(ax.min(), ay.min()):.6g} below "
            f"required lower bound {sigma_inv:.6g}"
        )
    fp = f.padded()
    fx = (fp[1:, 1:-1] - fp[:-1, 1:-1]) / g.hx
    fy = (fp[1:-1, 1:] - fp[1:-1, :-1]) / g.hy
    flux_x = ax * fx
    flux_y = ay * fy
    vals = (flux_x[1:, :] - flux_x[:-1, :]) / g.hx + (flux_y[:, 1:] - flux_y[:, :-1]) / g.hy
    return ScalarField(g, vals, f.bc)


def laplacian(f: ScalarField) -> ScalarField:
    return var_diffuse(1.0, f)


def dirichlet_energy(a, f: ScalarField) -> float:
    """sum_faces a_face |df|^2, i.e. <-var_diffuse(a, f), f> evaluated exactly."""
    g = f.grid
    ax, ay = _face_coeffs(a, f)
    fp = f.padded()
    fx = (fp[1:, 1:-1] - fp[:-1, 1:-1]) / g.hx
    fy = (fp[1:-1, 1:] - fp[1:-1, :-1]) / g.hy
    return g.cell_area * float(np.sum(ax * fx * fx) + np.sum(ay * fy * fy))


def h1_seminorm_sq(f) -> float:
    """Face-difference H1 seminorm squared (boundary faces included)."""
    if isinstance(f, VectorField):
        return h1_seminorm_sq(f.x) + h1_seminorm_sq(f.y)
    return dirichlet_energy(1.0, f)
