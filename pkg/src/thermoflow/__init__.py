"""2D coupled flow/temperature solver with energy-exact discrete operators.

The package simulates a barotropic velocity, a baroclinic velocity and a
temperature field on a rectangle with temperature-dependent viscosities and
diffusivity, and ships a verification layer: operator-algebra identities,
energy ledgers, exponential decay fits, level-set truncation monitors and a
variable-coefficient Stokes solver.
"""

from thermoflow.grid import (
    DIRICHLET,
    NEUMANN,
    Grid,
    ScalarField,
    State,
    VectorField,
    make_field,
    make_grid,
)

__version__ = "0.1.0"

__all__ = [
    "DIRICHLET",
    "NEUMANN",
    "Grid",
    "ScalarField",
    "VectorField",
    "State",
    "make_grid",
    "make_field",
    "__version__",
]
