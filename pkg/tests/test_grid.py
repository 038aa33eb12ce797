import numpy as np
import pytest

from thermoflow.grid import (
    DIRICHLET,
    NEUMANN,
    Grid,
    GridError,
    ScalarField,
    State,
    VectorField,
    load_snapshot_csv,
    make_field,
    make_grid,
    pad_values,
    save_snapshot_csv,
    zero_scalar,
    zero_vector,
)


def test_grid_spacing_and_area():
    g = make_grid(15, 31, 1.0, 2.0)
    assert g.hx == pytest.approx(1.0 / 16)
    assert g.hy == pytest.approx(2.0 / 32)
    assert g.cell_area == pytest.approx(g.hx * g.hy)
    assert g.shape == (15, 31)


def test_grid_rejects_bad_sizes():
    with pytest.raises(GridError):
        make_grid(2, 8, 1.0, 1.0)
    with pytest.raises(GridError):
        make_grid(8, 8, -1.0, 1.0)
    with pytest.raises(GridError):
        Grid(8, 8, 1.0, 1.0, {"theta": "periodic"})


def test_grid_tags_default_dirichlet():
    g = make_grid(8, 8, 1.0, 1.0, {"theta": NEUMANN})
    assert g.tag("theta") == NEUMANN
    assert g.tag("u") == DIRICHLET


def test_xy_coordinates():
    g = make_grid(3, 3, 1.0, 1.0)
    X, Y = g.xy()
    assert X[0, 0] == pytest.approx(0.25)
    assert X[2, 0] == pytest.approx(0.75)
    assert Y[0, 2] == pytest.approx(0.75)


def test_pad_dirichlet_zero_ring():
    vals = np.arange(9.0).reshape(3, 3)
    p = pad_values(vals, DIRICHLET)
    assert p.shape == (5, 5)
    assert np.all(p[0] == 0) and np.all(p[-1] == 0)
    assert np.all(p[:, 0] == 0) and np.all(p[:, -1] == 0)
    assert np.array_equal(p[1:-1, 1:-1], vals)


def test_pad_neumann_mirrors_interior():
    vals = np.arange(9.0).reshape(3, 3)
    p = pad_values(vals, NEUMANN)
    assert np.array_equal(p[0, 1:-1], vals[0])
    assert np.array_equal(p[1:-1, -1], vals[:, -1])
    assert p[0, 0] == vals[0, 0]


def test_field_shape_mismatch():
    g = make_grid(4, 4, 1.0, 1.0)
    with pytest.raises(GridError):
        ScalarField(g, np.zeros((3, 4)))


def test_field_arithmetic_keeps_left_tag():
    g = make_grid(4, 4, 1.0, 1.0)
    a = ScalarField(g, np.ones(g.shape), DIRICHLET)
    b = ScalarField(g, 2 * np.ones(g.shape), NEUMANN)
    c = a + b
    assert c.bc == DIRICHLET
    assert np.all(c.values == 3.0)
    assert (2.0 * a).values[0, 0] == 2.0
    assert (-a).values[0, 0] == -1.0


def test_make_field_from_callable_and_constant():
    g = make_grid(8, 8, 1.0, 1.0)
    f = make_field(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    X, Y = g.xy()
    assert np.allclose(f.values, np.sin(np.pi * X) * np.sin(np.pi * Y))
    c = make_field(g, 3.5, bc=NEUMANN)
    assert np.all(c.values == 3.5)


def test_make_field_rejects_nonfinite():
    g = make_grid(8, 8, 1.0, 1.0)
    with pytest.raises(GridError, match="non-finite"):
        make_field(g, lambda x, y: 1.0 / (x - x))


def test_make_field_warns_on_nonzero_trace(caplog):
    g = make_grid(8, 8, 1.0, 1.0)
    with caplog.at_level("WARNING"):
        make_field(g, lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y))
    assert any("Dirichlet trace" in r.message for r in caplog.records)


def test_state_check_finite():
    g = make_grid(4, 4, 1.0, 1.0)
    s = State(zero_vector(g), zero_vector(g), zero_scalar(g), zero_scalar(g))
    s.check_finite()
    s.theta.values[1, 1] = np.nan
    with pytest.raises(FloatingPointError, match="theta"):
        s.check_finite(step=7)


def test_snapshot_roundtrip(tmp_path):
    g = make_grid(6, 4, 1.5, 1.0)
    rng = np.random.default_rng(3)
    f = ScalarField(g, rng.standard_normal(g.shape))
    path = tmp_path / "snap.csv"
    save_snapshot_csv(path, f, 0.125)
    g2, vals, t = load_snapshot_csv(path)
    assert (g2.nx, g2.ny, g2.lx, g2.ly) == (6, 4, 1.5, 1.0)
    assert t == 0.125
    assert np.array_equal(vals, f.values)  # full-precision repr round trip
