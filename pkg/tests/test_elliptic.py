import numpy as np
import pytest

from thermoflow.elliptic import (
    SolverError,
    SolverSpec,
    project_div_free,
    solve_helmholtz_var,
    solve_poisson_dirichlet,
    solve_stokes_var,
)
from thermoflow.grid import DIRICHLET, NEUMANN, ScalarField, VectorField, make_grid
from thermoflow.operators import divergence, inner, l2_norm, laplacian, var_diffuse


SPEC = SolverSpec(rel_tol=1e-12, max_iter=100000)


def test_solver_spec_validation():
    with pytest.raises(ValueError):
        SolverSpec(rel_tol=1e-3)
    with pytest.raises(ValueError):
        SolverSpec(rel_tol=-1e-12)
    with pytest.raises(ValueError):
        SolverSpec(max_iter=5)


def test_poisson_eigenfunction():
    g = make_grid(64, 64, 1.0, 1.0)
    X, Y = g.xy()
    f_ex = ScalarField(g, np.sin(np.pi * X) * np.sin(np.pi * Y))
    rhs = ScalarField(g, -laplacian(f_ex).values)
    f, info = solve_poisson_dirichlet(rhs, SPEC)
    assert np.max(np.abs(f.values - f_ex.values)) < 1e-10
    assert info.residual <= 1e-12 * info.rhs_norm


def test_poisson_iteration_cap_raises():
    g = make_grid(64, 64, 1.0, 1.0)
    rng = np.random.default_rng(0)
    rhs = ScalarField(g, rng.standard_normal(g.shape))
    with pytest.raises(SolverError, match="cap"):
        solve_poisson_dirichlet(rhs, SolverSpec(rel_tol=1e-12, max_iter=10))


def test_poisson_solver_symmetry():
    # <A^{-1}f, g> = <f, A^{-1}g> for the SPD solve
    g = make_grid(32, 32, 1.0, 1.0)
    rng = np.random.default_rng(5)
    a = ScalarField(g, rng.standard_normal(g.shape))
    b = ScalarField(g, rng.standard_normal(g.shape))
    ia, _ = solve_poisson_dirichlet(a, SPEC)
    ib, _ = solve_poisson_dirichlet(b, SPEC)
    assert inner(ia, b) == pytest.approx(inner(a, ib), rel=1e-10, abs=1e-12)


def test_helmholtz_manufactured():
    g = make_grid(48, 48, 1.0, 1.0)
    rng = np.random.default_rng(7)
    f_ex = ScalarField(g, rng.standard_normal(g.shape))
    a = ScalarField(g, 1.0 + 0.5 * rng.random(g.shape), NEUMANN)
    lam = 0.01
    rhs = ScalarField(g, f_ex.values - lam * var_diffuse(a, f_ex).values)
    f, _ = solve_helmholtz_var(a, lam, rhs, SPEC)
    assert np.max(np.abs(f.values - f_ex.values)) < 1e-9


def test_helmholtz_rejects_negative_lam():
    g = make_grid(16, 16, 1.0, 1.0)
    rhs = ScalarField(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        solve_helmholtz_var(1.0, -0.1, rhs, SPEC)


def test_projection_reduces_divergence_six_orders():
    g = make_grid(64, 64, 1.0, 1.0)
    rng = np.random.default_rng(1)
    u = VectorField(ScalarField(g, rng.standard_normal(g.shape)),
                    ScalarField(g, rng.standard_normal(g.shape)))
    up, phi, _ = project_div_free(u, SPEC)
    before = l2_norm(divergence(u))
    after = l2_norm(divergence(up))
    assert after <= 1e-6 * before


def test_projection_idempotent_and_orthogonal():
    g = make_grid(64, 64, 1.0, 1.0)
    rng = np.random.default_rng(2)
    u = VectorField(ScalarField(g, rng.standard_normal(g.shape)),
                    ScalarField(g, rng.standard_normal(g.shape)))
    up, phi, _ = project_div_free(u, SPEC)
    up2, phi2, _ = project_div_free(up, SPEC)
    assert np.max(np.abs(up2.x.values - up.x.values)) < 1e-10
    # energy split: ||u||^2 = ||Pu||^2 + ||grad phi||^2
    from thermoflow.operators import gradient
    gphi = gradient(phi)
    lhs = inner(u, u)
    rhs = inner(up, up) + inner(gphi, gphi)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_projection_preserves_div_free_field():
    g = make_grid(32, 32, 1.0, 1.0)
    X, Y = g.xy()
    from thermoflow.verify import stream_velocity
    u, _, _ = project_div_free(stream_velocity(g, 1.0), SPEC)
    u2, _, _ = project_div_free(u, SPEC)
    assert np.max(np.abs(u2.x.values - u.x.values)) < 1e-10


def test_stokes_constant_viscosity():
    from thermoflow.verify import stream_velocity
    from thermoflow.elliptic import _pressure_gradient
    g = make_grid(32, 32, 1.0, 1.0)
    u_ex, _, _ = project_div_free(stream_velocity(g, 1.0), SPEC)
    mu = ScalarField(g, np.full(g.shape, 2.0), NEUMANN)
    X, Y = g.xy()
    p_vals = np.sin(np.pi * X) * np.cos(np.pi * Y)
    p_ex = ScalarField(g, p_vals - p_vals.mean(), DIRICHLET)
    gp = _pressure_gradient(p_ex)
    f = VectorField(-var_diffuse(mu, u_ex.x) + gp.x, -var_diffuse(mu, u_ex.y) + gp.y)
    res = solve_stokes_var(mu, f, SolverSpec(rel_tol=1e-13, max_iter=100000))
    du = res.u - u_ex
    assert np.sqrt(inner(du, du)) < 1e-9
    assert res.momentum_residual < 1e-9
    assert res.energy_gap < 1e-9


def test_stokes_rejects_low_viscosity():
    g = make_grid(16, 16, 1.0, 1.0)
    mu = ScalarField(g, np.full(g.shape, 0.4), NEUMANN)
    f = VectorField(ScalarField(g, np.ones(g.shape)), ScalarField(g, np.ones(g.shape)))
    with pytest.raises(SolverError, match="below"):
        solve_stokes_var(mu, f, SPEC, c_min=0.5)
