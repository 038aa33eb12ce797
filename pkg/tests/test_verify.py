import numpy as np
import pytest

from thermoflow.coefficients import coeff_set
from thermoflow.grid import make_grid
from thermoflow.operators import divergence, l2_norm
from thermoflow.stepper import StepConfig, run
from thermoflow.verify import (
    MMSCase,
    decay_experiment,
    default_state,
    energy_identity_suite,
    mms_convergence,
    perturbed_state,
    smooth_bump,
    stokes_manufactured,
    stream_velocity,
    uniqueness_experiment,
)


def test_stream_velocity_nearly_div_free():
    g = make_grid(64, 64, 1.0, 1.0)
    u = stream_velocity(g, 1.0)
    # analytically solenoidal; discretely O(h^2)
    assert l2_norm(divergence(u)) < 0.02


def test_smooth_bump_is_seeded_and_normalized():
    g = make_grid(32, 32, 1.0, 1.0)
    b1 = smooth_bump(g, seed=123)
    b2 = smooth_bump(g, seed=123)
    b3 = smooth_bump(g, seed=124)
    assert np.array_equal(b1.values, b2.values)
    assert not np.array_equal(b1.values, b3.values)
    assert l2_norm(b1) == pytest.approx(1.0, rel=1e-12)


def test_mms_exact_state_satisfies_forcing_balance():
    # at t=0 the forcing equals the full residual of the exact fields up to
    # discretization error, so one tiny step keeps the error at O(h^2 + dt)
    case = MMSCase(coeff_set("quad:1.0,0.5", "const:1.0", "quad:1.0,0.5"))
    g = make_grid(32, 32, 1.0, 1.0)
    s = case.exact_state(g, 0.0)
    assert np.max(np.abs(s.theta.values)) <= 1.0
    f_u, f_v, f_th = case.forcings()
    assert f_th(0.0, g).values.shape == g.shape
    assert f_u(0.0, g).x.values.shape == g.shape
    assert f_v(0.0, g).y.values.shape == g.shape


def test_mms_symbolic_rejects_affine_family():
    with pytest.raises(ValueError, match="symbolic"):
        MMSCase(coeff_set("affine:1.0,0.5,0.75", "const:1.0", "const:1.0"))


def test_mms_convergence_requires_three_grids():
    case = MMSCase(coeff_set())
    with pytest.raises(ValueError, match="three"):
        mms_convergence(case, sizes=(16, 32))


@pytest.mark.slow
def test_mms_small_grid_order():
    case = MMSCase(coeff_set("quad:1.0,1.0", "const:1.0", "quad:1.0,1.0"))
    rep = mms_convergence(case, sizes=(16, 32, 64), t_end=0.02, dt_coarse=8e-4)
    assert rep.min_order() >= 1.9


def test_energy_identity_suite_passes_on_clean_run():
    g = make_grid(24, 24, 1.0, 1.0)
    c = coeff_set("quad:1.0,1.0", "const:1.0", "quad:1.0,0.5")
    sc = StepConfig(dt=1e-3, end_time=0.01, rel_tol=1e-12)
    rep = energy_identity_suite(run(default_state(g, 0.2), c, sc))
    assert rep.passed
    assert rep.max_ledger_residual <= 1e-8
    assert rep.max_coupling_residual <= 1e-10
    assert rep.first_failing_step is None


def test_energy_identity_suite_fails_on_convective_advection():
    # negative control: the non-skew advection form leaks energy through the
    # coupling pairings
    g = make_grid(24, 24, 1.0, 1.0)
    c = coeff_set()
    sc = StepConfig(dt=1e-3, end_time=0.01, rel_tol=1e-12,
                    advection_form="convective")
    rep = energy_identity_suite(run(default_state(g, 0.4), c, sc))
    assert not rep.passed
    assert rep.max_coupling_residual > 1e-10


def test_decay_experiment_envelope_short_run():
    g = make_grid(32, 32, 1.0, 1.0)
    sc = StepConfig(dt=5e-4, end_time=0.2, rel_tol=1e-12)
    traj = run(default_state(g, 0.05), coeff_set(), sc)
    rep = decay_experiment(traj)
    assert rep.envelope_ok
    assert rep.passed
    assert rep.h1_fit.r_squared >= 0.99
    assert rep.h2_fit.r_squared >= 0.99
    # multi-mode data decays at least as fast as the base rate
    assert rep.energy_fit.alpha_hat >= 2.0 * rep.alpha * 0.99


def test_decay_experiment_report_only_mode():
    g = make_grid(32, 32, 1.0, 1.0)
    sc = StepConfig(dt=5e-4, end_time=0.2, rel_tol=1e-12)
    traj = run(default_state(g, 0.05), coeff_set(), sc)
    rep = decay_experiment(traj, assert_decay=False)
    assert rep.passed  # nothing asserted
    assert not rep.asserted


def test_perturbed_state_scales_linearly():
    g = make_grid(16, 16, 1.0, 1.0)
    base = default_state(g, 0.1)
    p1 = perturbed_state(base, 1e-3)
    p2 = perturbed_state(base, 2e-3)
    d1 = p1.theta.values - base.theta.values
    d2 = p2.theta.values - base.theta.values
    assert np.allclose(d2, 2.0 * d1)


def test_uniqueness_zero_delta_bitwise():
    g = make_grid(16, 16, 1.0, 1.0)
    sc = StepConfig(dt=1e-3, end_time=0.01, rel_tol=1e-12)
    rep = uniqueness_experiment(g, coeff_set(), sc, delta=0.0)
    assert rep.bitwise_identical
    assert rep.sup_diff_sq == 0.0
    assert rep.passed


def test_uniqueness_small_delta_controlled():
    g = make_grid(16, 16, 1.0, 1.0)
    sc = StepConfig(dt=1e-3, end_time=0.05, rel_tol=1e-12)
    rep = uniqueness_experiment(g, coeff_set(), sc, delta=1e-6)
    assert rep.sup_diff_sq <= 100.0 * (1e-6) ** 2
    assert rep.tail_decayed
    assert rep.passed


def test_uniqueness_rejects_adaptive_dt():
    g = make_grid(16, 16, 1.0, 1.0)
    sc = StepConfig(dt=1e-3, end_time=0.01, dt_policy="cfl")
    with pytest.raises(ValueError, match="fixed"):
        uniqueness_experiment(g, coeff_set(), sc, delta=1e-6)


@pytest.mark.slow
def test_stokes_manufactured_small():
    rep = stokes_manufactured(n=32)
    assert rep.passed
    assert rep.err_u <= 1e-8
    assert abs(rep.mean_p) <= 1e-12
