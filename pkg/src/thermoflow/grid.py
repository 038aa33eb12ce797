"""Uniform rectangular grid and discrete field containers.

Interior nodes sit at (i*hx, j*hy) for i=1..nx, j=1..ny with hx = lx/(nx+1),
so the boundary ring is implied rather than stored: a Dirichlet field reads
as 0 on the boundary, a Neumann field mirrors the adjacent interior value.
All arrays are indexed values[i, j] with i along x and j along y.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

log = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
_TAGS = (DIRICHLET, NEUMANN)


class GridError(ValueError):
    """Invalid grid or field construction."""


def _check_tag(tag: str) -> str:
    if tag not in _TAGS:
        raise GridError(f"unknown boundary tag {tag!r}, expected one of {_TAGS}")
    return tag


@dataclass(frozen=True)
class Grid:
    """Node-centered interior grid on [0, lx] x [0, ly].

    ``bc`` maps variable names ("u", "v", "theta", ...) to boundary tags;
    missing variables default to Dirichlet.
    """

    nx: int
    ny: int
    lx: float
    ly: float
    bc: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise GridError(f"need nx, ny >= 3, got {self.nx} x {self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise GridError(f"need positive side lengths, got {self.lx} x {self.ly}")
        for var, tag in self.bc.items():
            _check_tag(tag)

    @property
    def hx(self) -> float:
        return self.lx / (self.nx + 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny + 1)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def tag(self, var: str) -> str:
        return self.bc.get(var, DIRICHLET)

    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Interior node coordinates as (X, Y) meshgrids, 'ij' indexing."""
        x = self.hx * np.arange(1, self.nx + 1)
        y = self.hy * np.arange(1, self.ny + 1)
        return np.meshgrid(x, y, indexing="ij")


def make_grid(nx: int, ny: int, lx: float, ly: float, bc: dict | None = None) -> Grid:
    """Build a grid, rejecting nonpositive or undersized requests."""
    return Grid(int(nx), int(ny), float(lx), float(ly), dict(bc or {}))


def pad_values(values: np.ndarray, bc: str) -> np.ndarray:
    """Extend an interior array by one ghost ring according to its tag."""
    nx, ny = values.shape
    out = np.zeros((nx + 2, ny + 2), dtype=values.dtype)
    out[1:-1, 1:-1] = values
    if bc == NEUMANN:
        out[0, 1:-1] = values[0]
        out[-1, 1:-1] = values[-1]
        out[1:-1, 0] = values[:, 0]
        out[1:-1, -1] = values[:, -1]
        out[0, 0] = values[0, 0]
        out[0, -1] = values[0, -1]
        out[-1, 0] = values[-1, 0]
        out[-1, -1] = values[-1, -1]
    return out


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    bc: str = DIRICHLET

    def __post_init__(self):
        _check_tag(self.bc)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    def padded(self) -> np.ndarray:
        return pad_values(self.values, self.bc)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.bc)

    def like(self, values: np.ndarray, bc: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.bc if bc is None else bc)

    # arithmetic keeps the left operand's tag; products of Dirichlet fields
    # still vanish on the boundary, which is what the operators rely on
    def __add__(self, other):
        return self.like(self.values + _raw(other))

    def __sub__(self, other):
        return self.like(self.values - _raw(other))

    def __mul__(self, other):
        return self.like(self.values * _raw(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


def _raw(x):
    return x.values if isinstance(x, ScalarField) else x


@dataclass
class VectorField:
    x: ScalarField
    y: ScalarField

    @property
    def grid(self) -> Grid:
        return self.x.grid

    def copy(self) -> "VectorField":
        return VectorField(self.x.copy(), self.y.copy())

    def __add__(self, other):
        return VectorField(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return VectorField(self.x - other.x, self.y - other.y)

    def __mul__(self, s):
        return VectorField(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(-self.x, -self.y)


def zero_scalar(grid: Grid, bc: str = DIRICHLET) -> ScalarField:
    return ScalarField(grid, np.zeros(grid.shape), bc)


def zero_vector(grid: Grid, bc: str = DIRICHLET) -> VectorField:
    return VectorField(zero_scalar(grid, bc), zero_scalar(grid, bc))


def make_field(grid: Grid, init, bc: str = DIRICHLET) -> ScalarField:
    """Sample ``init(x, y)`` at the interior nodes.

    ``init`` may be a callable of meshgrid arrays or a constant. Non-finite
    samples raise with the offending node. Dirichlet fields whose boundary
    trace is visibly nonzero are allowed but logged (discontinuous data).
    """
    _check_tag(bc)
    X, Y = grid.xy()
    if callable(init):
        vals = np.asarray(init(X, Y), dtype=float)
        if vals.shape == ():
            vals = np.full(grid.shape, float(vals))
    else:
        vals = np.full(grid.shape, float(init))
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise GridError(
            f"non-finite sample {vals[i, j]} at node ({i + 1}, {j + 1}), "
            f"x={X[i, j]:.6g}, y={Y[i, j]:.6g}"
        )
    if bc == DIRICHLET and callable(init):
        trace = _boundary_trace_max(grid, init)
        if trace > 1e-12:
            log.warning(
                "initial data has nonzero Dirichlet trace (max |.| = %.3g); "
                "the discrete boundary value is forced to 0",
                trace,
            )
    return ScalarField(grid, vals, bc)


def _boundary_trace_max(grid: Grid, init) -> float:
    xs = np.linspace(0.0, grid.lx, 65)
    ys = np.linspace(0.0, grid.ly, 65)
    vals = [
        init(xs, np.zeros_like(xs)),
        init(xs, np.full_like(xs, grid.ly)),
        init(np.zeros_like(ys), ys),
        init(np.full_like(ys, grid.lx), ys),
    ]
    return float(max(np.max(np.abs(np.asarray(v, dtype=float))) for v in vals))


@dataclass
class State:
    """Full solution snapshot: both velocity modes, temperature, pressure."""

    u: VectorField
    v: VectorField
    theta: ScalarField
    p: ScalarField
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.theta.grid

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy(), self.theta.copy(), self.p.copy(), self.t)

    def check_finite(self, step: int | None = None) -> None:
        for name, arr in (
            ("u.x", self.u.x.values),
            ("u.y", self.u.y.values),
            ("v.x", self.v.x.values),
            ("v.y", self.v.y.values),
            ("theta", self.theta.values),
            ("p", self.p.values),
        ):
            if not np.all(np.isfinite(arr)):
                where = f" at step {step}" if step is not None else ""
                raise FloatingPointError(f"non-finite values in {name}{where}")


def save_snapshot_csv(path, f: ScalarField, t: float) -> None:
    """Write a field as CSV: header ``# nx ny lx ly t`` then i,j,value rows."""
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"# {g.nx} {g.ny} {g.lx!r} {g.ly!r} {float(t)!r}\n")
        for i in range(g.nx):
            for j in range(g.ny):
                fh.write(f"{i},{j},{float(f.values[i, j])!r}\n")


def load_snapshot_csv(path) -> tuple[Grid, np.ndarray, float]:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise GridError(f"{path}: missing snapshot header")
        nx_s, ny_s, lx_s, ly_s, t_s = header[1:].split()
        nx, ny = int(nx_s), int(ny_s)
        vals = np.zeros((nx, ny))
        for line in fh:
            i_s, j_s, v_s = line.strip().split(",")
            vals[int(i_s), int(j_s)] = float(v_s)
    return make_grid(nx, ny, float(lx_s), float(ly_s)), vals, float(t_s)
