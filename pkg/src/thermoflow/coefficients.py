"""Temperature-dependent coefficient functions and the Kirchhoff transform.

Coefficients are chosen from a small closed family selected by config key
("const:c", "quad:a,b", "gauss:a,b", "affine:a,b,floor"), each carrying an
analytic derivative, second derivative and antiderivative. The transform
K(theta) = int_0^theta kappa(z) dz converts the variable-coefficient heat
operator into a plain Laplacian; K is strictly increasing with slope at
least 1/sigma, so its inverse is computed by a safeguarded Newton iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.special import erf

from thermoflow.grid import ScalarField
from thermoflow.operators import gradient


class CoefficientError(ValueError):
    """Coefficient specification or bound violation."""


SQRT_PI = np.sqrt(np.pi)


@dataclass(frozen=True)
class CoeffFunc:
    """A smooth scalar coefficient with analytic derivatives/antiderivative."""

    spec: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    antideriv: Callable[[np.ndarray], np.ndarray]

    def __call__(self, theta):
        return self.f(np.asarray(theta, dtype=float))


def parse_coeff(spec: str) -> CoeffFunc:
    """Build a coefficient function from a ``name:params`` config key."""
    name, _, rest = spec.partition(":")
    try:
        params = [float(p) for p in rest.split(",")] if rest else []
    except ValueError as exc:
        raise CoefficientError(f"bad coefficient parameters in {spec!r}") from exc

    if name == "const":
        (c,) = params or [1.0]
        return CoeffFunc(
            spec,
            lambda th: np.full_like(th, c, dtype=float),
            lambda th: np.zeros_like(th, dtype=float),
            lambda th: np.zeros_like(th, dtype=float),
            lambda th: c * th,
        )
    if name == "quad":
        # a + b * theta^2
        a, b = params
        return CoeffFunc(
            spec,
            lambda th: a + b * th * th,
            lambda th: 2.0 * b * th,
            lambda th: np.full_like(th, 2.0 * b, dtype=float),
            lambda th: a * th + b * th ** 3 / 3.0,
        )
    if name == "gauss":
        # a + b * exp(-theta^2)
        a, b = params
        return CoeffFunc(
            spec,
            lambda th: a + b * np.exp(-th * th),
            lambda th: -2.0 * b * th * np.exp(-th * th),
            lambda th: b * (4.0 * th * th - 2.0) * np.exp(-th * th),
            lambda th: a * th + b * (SQRT_PI / 2.0) * erf(th),
        )
    if name == "affine":
        # max(a + b * theta, floor); antiderivative is the matching piecewise
        # quadratic, continuous at the kink theta* = (floor - a)/b
        a, b, floor = params
        if b == 0.0:
            return parse_coeff(f"const:{max(a, floor)}")
        kink = (floor - a) / b

        def _f(th):
            return np.maximum(a + b * th, floor)

        def _df(th):
            lin = (a + b * th) > floor
            return np.where(lin, b, 0.0)

        def _d2f(th):
            return np.zeros_like(th, dtype=float)

        def _lin_anti(th):
            return a * th + 0.5 * b * th * th

        def _anti(th):
            lin = (a + b * th) > floor
            flat = floor * th + (_lin_anti(kink) - floor * kink)
            # pick the branch containing 0 so that K(0) = 0
            if a > floor:  # 0 is on the linear branch
                return np.where(lin, _lin_anti(th), flat)
            shift = _lin_anti(kink) - floor * kink
            return np.where(lin, _lin_anti(th) - shift, floor * th)

        return CoeffFunc(spec, _f, _df, _d2f, _anti)

    raise CoefficientError(f"unknown coefficient family {name!r} in {spec!r}")


@dataclass
class CoeffSet:
    """mu, nu, kappa with a common lower bound 1/sigma."""

    mu: CoeffFunc
    nu: CoeffFunc
    kappa: CoeffFunc
    sigma: float = 1.0
    _mtilde_cache: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.sigma <= 0:
            raise CoefficientError(f"sigma must be positive, got {self.sigma}")

    @property
    def sigma_inv(self) -> float:
        return 1.0 / self.sigma

    def check_lower_bound(self, theta_range: float) -> None:
        """Verify all three coefficients stay >= 1/sigma on a dense sample."""
        th = np.linspace(-theta_range, theta_range, 4097)
        for name, fn in (("mu", self.mu), ("nu", self.nu), ("kappa", self.kappa)):
            lo = float(np.min(fn(th)))
            if lo < self.sigma_inv - 1e-12:
                raise CoefficientError(
                    f"{name}={fn.spec!r} attains {lo:.6g} < 1/sigma = "
                    f"{self.sigma_inv:.6g} on |theta| <= {theta_range:.6g}"
                )

    def m_tilde(self, theta_max: float) -> float:
        """Sup of |f|, |f'|, |f''| over [-theta_max, theta_max] for all three
        coefficient functions, by dense sampling of the observed range."""
        key = round(float(theta_max), 12)
        if key not in self._mtilde_cache:
            th = np.linspace(-max(theta_max, 1e-30), max(theta_max, 1e-30), 4097)
            sup = 0.0
            for fn in (self.mu, self.nu, self.kappa):
                sup = max(
                    sup,
                    float(np.max(np.abs(fn.f(th)))),
                    float(np.max(np.abs(fn.df(th)))),
                    float(np.max(np.abs(fn.d2f(th)))),
                )
            self._mtilde_cache[key] = max(sup, self.sigma_inv)
        return self._mtilde_cache[key]


def coeff_set(mu: str = "const:1.0", nu: str = "const:1.0",
              kappa: str = "const:1.0", sigma: float = 1.0) -> CoeffSet:
    return CoeffSet(parse_coeff(mu), parse_coeff(nu), parse_coeff(kappa), sigma)


def eval_coeffs(c: CoeffSet, theta: ScalarField):
    """Pointwise coefficient fields at theta; rejects values below 1/sigma."""
    out = []
    for name, fn in (("mu", c.mu), ("nu", c.nu), ("kappa", c.kappa)):
        vals = fn(theta.values)
        lo = float(vals.min())
        if lo < c.sigma_inv - 1e-12:
            raise CoefficientError(
                f"{name}={fn.spec!r} evaluates to {lo:.6g} < 1/sigma = "
                f"{c.sigma_inv:.6g}; the coefficient hypothesis is violated"
            )
        out.append(theta.like(vals, bc="neumann"))
    return tuple(out)


def eval_coeff_padded(fn: CoeffFunc, theta: ScalarField, sigma_inv: float) -> np.ndarray:
    """Coefficient on the ghost-extended theta array (exact at the boundary)."""
    vals = fn(theta.padded())
    lo = float(vals.min())
    if lo < sigma_inv - 1e-12:
        raise CoefficientError(
            f"coefficient {fn.spec!r} evaluates to {lo:.6g} < {sigma_inv:.6g}"
        )
    return vals


def good_unknown(c: CoeffSet, theta: ScalarField) -> ScalarField:
    """K(theta) = int_0^theta kappa(z) dz, applied pointwise.

    Uses the closed-form antiderivative of the built-in family; K(0) = 0 so a
    Dirichlet trace is preserved.
    """
    vals = c.kappa.antideriv(theta.values) - c.kappa.antideriv(np.zeros(1))[0]
    if not np.all(np.isfinite(vals)):
        raise CoefficientError("good-unknown transform produced non-finite values")
    return theta.like(vals)


def inverse_good_unknown(c: CoeffSet, bigtheta: ScalarField,
                         tol: float = 1e-12, max_iter: int = 100) -> ScalarField:
    """Invert K nodewise by safeguarded Newton/bisection.

    K' = kappa >= 1/sigma makes the root simple and bracketable by
    |theta| <= sigma |K(theta)|.
    """
    b = bigtheta.values
    K0 = c.kappa.antideriv(np.zeros(1))[0]

    def K(x):
        return c.kappa.antideriv(x) - K0

    # K is strictly increasing, so a bracket can be grown by doubling; the
    # initial guess sigma |K| + 1 is only valid when kappa >= 1/sigma holds
    # globally, which callers are allowed to violate transiently
    span = c.sigma * np.abs(b) + 1.0
    lo, hi = -span, span.copy()
    for _ in range(64):
        grow = K(hi) < b
        if not grow.any():
            break
        hi = np.where(grow, 2.0 * hi, hi)
    for _ in range(64):
        grow = K(lo) > b
        if not grow.any():
            break
        lo = np.where(grow, 2.0 * lo, lo)
    x = b / max(float(c.kappa(np.zeros(1))[0]), c.sigma_inv)
    scale = max(float(np.max(np.abs(b))), 1.0)
    for _ in range(max_iter):
        r = K(x) - b
        if float(np.max(np.abs(r))) <= tol * scale:
            break
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        x_new = x - r / c.kappa(x)
        outside = (x_new <= lo) | (x_new >= hi)
        x = np.where(outside, 0.5 * (lo + hi), x_new)
    else:
        raise CoefficientError(
            f"good-unknown inversion did not converge in {max_iter} iterations "
            f"(residual {float(np.max(np.abs(K(x) - b))):.3g})"
        )
    return bigtheta.like(x)


@dataclass
class ComparisonReport:
    """Norm band check: (1/sigma)|grad theta|_q <= |grad K(theta)|_q <= Mt |grad theta|_q."""

    q: float
    grad_theta: float
    grad_bigtheta: float
    sigma_inv: float
    m_tilde: float
    passed: bool


def _grad_q_norm(f: ScalarField, q) -> float:
    g = gradient(f)
    mag = np.sqrt(g.x.values ** 2 + g.y.values ** 2)
    if q == np.inf:
        return float(mag.max())
    area = f.grid.cell_area
    return float((area * np.sum(mag ** q)) ** (1.0 / q))


def check_comparison(c: CoeffSet, theta: ScalarField, bigtheta: ScalarField,
                     q, rel_slack: float = 1e-8) -> ComparisonReport:
    """Evaluate the two-sided gradient comparison for one exponent q."""
    theta_max = float(np.max(np.abs(theta.values)))
    mt = c.m_tilde(theta_max)
    gt = _grad_q_norm(theta, q)
    gb = _grad_q_norm(bigtheta, q)
    slack = rel_slack * max(gt, gb, 1e-300)
    passed = (c.sigma_inv * gt <= gb + slack) and (gb <= mt * gt + slack)
    return ComparisonReport(q, gt, gb, c.sigma_inv, mt, passed)
