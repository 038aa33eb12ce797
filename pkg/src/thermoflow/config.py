"""INI run configuration: parsing, validation, defaults and the effective
config echo.

Every key is validated at parse time; unknown sections or keys are an error
(misspelled physics is worse than a crash). Defaults for physics-relevant
keys are logged loudly when they fill in. The effective configuration is
canonical: echoing it and re-parsing the echo yields the identical config.
"""

from __future__ import annotations

import configparser
import io
import logging
from dataclasses import dataclass

import numpy as np

from thermoflow.coefficients import CoeffSet, coeff_set, parse_coeff
from thermoflow.grid import (
    DIRICHLET,
    NEUMANN,
    Grid,
    ScalarField,
    State,
    VectorField,
    make_grid,
    zero_scalar,
    zero_vector,
)
from thermoflow.stepper import StepConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# schema: section -> key -> (kind, default-as-string, physics?)
_SCHEMA = {
    "grid": {
        "nx": ("int", "64", True),
        "ny": ("int", "64", True),
        "lx": ("float", "1.0", True),
        "ly": ("float", "1.0", True),
    },
    "bc": {
        "u": ("tag", DIRICHLET, True),
        "v": ("tag", DIRICHLET, True),
        "theta": ("tag", DIRICHLET, True),
    },
    "coeffs": {
        "mu": ("coeff", "const:1.0", True),
        "nu": ("coeff", "const:1.0", True),
        "kappa": ("coeff", "const:1.0", True),
        "sigma": ("float", "1.0", True),
    },
    "init": {
        "u": ("profile", "zero", True),
        "v": ("profile", "zero", True),
        "theta": ("profile", "zero", True),
    },
    "stepping": {
        "dt": ("float", "1e-3", True),
        "dt_policy": ("choice:fixed|cfl", "fixed", True),
        "cfl_target": ("float", "0.5", False),
        "dt_min": ("float", "1e-8", False),
        "dt_max": ("float", "1e-2", False),
        "end_time": ("float", "1.0", True),
        "rel_tol": ("float", "1e-12", False),
        "max_iter": ("int", "50000", False),
        "advection_form": ("choice:skew|convective", "skew", True),
        "record_interval": ("int", "1", False),
        "snapshot_interval": ("int", "0", False),
    },
    "output": {
        "outdir": ("str", "out", False),
        "checkpoint": ("str", "", False),
    },
    "experiment": {
        "assert_decay": ("bool", "false", False),
        "delta": ("float", "0.0", False),
        "c1": ("float", "1.0", False),
        "c2": ("float", "1.0", False),
        "degiorgi_kmax": ("int", "20", False),
        "seed": ("int", "20240817", False),
    },
}

_PROFILES = ("zero", "eigenmode", "modemix", "stream", "random")


def _canon(kind: str, raw: str, where: str) -> str:
    """Validate a raw value and return its canonical string form."""
    raw = raw.strip()
    try:
        if kind == "int":
            v = int(raw)
            return str(v)
        if kind == "float":
            return repr(float(raw))
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return "true"
            if raw.lower() in ("false", "0", "no", "off"):
                return "false"
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "tag":
            if raw not in (DIRICHLET, NEUMANN):
                raise ValueError(f"boundary tag must be dirichlet or neumann, got {raw!r}")
            return raw
        if kind == "coeff":
            parse_coeff(raw)  # raises on malformed specs
            return raw
        if kind == "profile":
            name, _, rest = raw.partition(":")
            if name not in _PROFILES:
                raise ValueError(f"unknown init profile {name!r}, expected one of {_PROFILES}")
            if name == "zero":
                if rest:
                    raise ValueError("profile 'zero' takes no parameters")
                return "zero"
            parts = [float(p) for p in rest.split(",")] if rest else []
            if name == "random":
                if len(parts) not in (1, 2):
                    raise ValueError("profile 'random' needs amp[,seed]")
            elif len(parts) != 1:
                raise ValueError(f"profile {name!r} needs exactly one amplitude")
            return raw
        if kind.startswith("choice:"):
            opts = kind.split(":", 1)[1].split("|")
            if raw not in opts:
                raise ValueError(f"expected one of {opts}, got {raw!r}")
            return raw
        if kind == "str":
            return raw
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unhandled kind {kind!r}")


@dataclass
class Config:
    """Fully validated configuration; ``data[section][key]`` is canonical."""

    data: dict

    # -- typed accessors ---------------------------------------------------

    def get(self, section: str, key: str) -> str:
        return self.data[section][key]

    def getint(self, section: str, key: str) -> int:
        return int(self.data[section][key])

    def getfloat(self, section: str, key: str) -> float:
        return float(self.data[section][key])

    def getbool(self, section: str, key: str) -> bool:
        return self.data[section][key] == "true"

    # -- builders ------------------------------------------------------------

    def build_grid(self) -> Grid:
        bc = {v: self.get("bc", v) for v in ("u", "v", "theta")}
        return make_grid(self.getint("grid", "nx"), self.getint("grid", "ny"),
                         self.getfloat("grid", "lx"), self.getfloat("grid", "ly"), bc)

    def build_coeffs(self) -> CoeffSet:
        return coeff_set(self.get("coeffs", "mu"), self.get("coeffs", "nu"),
                         self.get("coeffs", "kappa"), self.getfloat("coeffs", "sigma"))

    def build_step_config(self) -> StepConfig:
        s = self.data["stepping"]
        return StepConfig(
            dt=float(s["dt"]), dt_policy=s["dt_policy"],
            cfl_target=float(s["cfl_target"]), dt_min=float(s["dt_min"]),
            dt_max=float(s["dt_max"]), end_time=float(s["end_time"]),
            rel_tol=float(s["rel_tol"]), max_iter=int(s["max_iter"]),
            advection_form=s["advection_form"],
            record_interval=int(s["record_interval"]),
            snapshot_interval=int(s["snapshot_interval"]),
        )

    def build_state(self) -> State:
        grid = self.build_grid()
        u = _vector_profile(grid, self.get("init", "u"), grid.tag("u"),
                            self.getint("experiment", "seed"))
        v = _vector_profile(grid, self.get("init", "v"), grid.tag("v"),
                            self.getint("experiment", "seed") + 7)
        theta = _scalar_profile(grid, self.get("init", "theta"), grid.tag("theta"),
                                self.getint("experiment", "seed") + 13, variant=0)
        return State(u, v, theta, zero_scalar(grid), 0.0)


def _scalar_profile(grid: Grid, spec: str, tag: str, seed: int,
                    variant: int = 0) -> ScalarField:
    from thermoflow.verify import mode_mix, smooth_bump

    name, _, rest = spec.partition(":")
    if name == "zero":
        return zero_scalar(grid, tag)
    params = [float(p) for p in rest.split(",")] if rest else []
    if name == "eigenmode":
        X, Y = grid.xy()
        vals = params[0] * np.sin(np.pi * X / grid.lx) * np.sin(np.pi * Y / grid.ly)
        return ScalarField(grid, vals, tag)
    if name == "modemix":
        f = mode_mix(grid, params[0], variant)
        return ScalarField(grid, f.values, tag)
    if name == "random":
        amp = params[0]
        sd = int(params[1]) if len(params) > 1 else seed
        f = smooth_bump(grid, sd)
        return ScalarField(grid, amp * f.values, tag)
    if name == "stream":
        raise ConfigError("profile 'stream' is a velocity profile, not a scalar one")
    raise ConfigError(f"unknown profile {spec!r}")


def _vector_profile(grid: Grid, spec: str, tag: str, seed: int) -> VectorField:
    from thermoflow.verify import stream_velocity

    name = spec.partition(":")[0]
    if name == "zero":
        return zero_vector(grid, tag)
    if name == "stream":
        amp = float(spec.partition(":")[2])
        w = stream_velocity(grid, amp)
        return VectorField(ScalarField(grid, w.x.values, tag),
                           ScalarField(grid, w.y.values, tag))
    # component-wise scalar profiles with distinct variants/seeds
    return VectorField(
        _scalar_profile(grid, spec, tag, seed, variant=0),
        _scalar_profile(grid, spec, tag, seed + 1, variant=1),
    )


def _validate_consistency(data: dict) -> None:
    if data["experiment"]["assert_decay"] == "true":
        neu = [v for v in ("u", "v", "theta") if data["bc"][v] == NEUMANN]
        if neu:
            raise ConfigError(
                "decay-rate assertions require homogeneous Dirichlet data on "
                f"every evolved variable, but {', '.join(neu)} carry Neumann "
                "tags; disable assert_decay or change [bc]"
            )
    if float(data["coeffs"]["sigma"]) <= 0.0:
        raise ConfigError(f"sigma must be positive, got {data['coeffs']['sigma']}")
    if float(data["stepping"]["dt"]) <= 0.0:
        raise ConfigError(f"dt must be positive, got {data['stepping']['dt']}")
    if int(data["grid"]["nx"]) < 3 or int(data["grid"]["ny"]) < 3:
        raise ConfigError(
            f"grid must be at least 3x3, got {data['grid']['nx']}x{data['grid']['ny']}"
        )
    # the composed-gradient projection has a checkerboard null mode on grids
    # with an odd interior count; refuse rather than converge to the wrong field
    if int(data["grid"]["nx"]) % 2 or int(data["grid"]["ny"]) % 2:
        raise ConfigError(
            "interior counts nx, ny must be even (odd counts put a "
            "checkerboard mode in the projection nullspace); got "
            f"{data['grid']['nx']}x{data['grid']['ny']}"
        )


def parse_config(text: str, origin: str = "<string>") -> Config:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{origin}: unknown section [{section}]; "
                f"expected one of {sorted(_SCHEMA)}"
            )
        unknown = set(cp[section]) - set(_SCHEMA[section])
        if unknown:
            raise ConfigError(
                f"{origin}: unknown key(s) {sorted(unknown)} in [{section}]; "
                f"expected a subset of {sorted(_SCHEMA[section])}"
            )

    data = {}
    for section, keys in _SCHEMA.items():
        data[section] = {}
        for key, (kind, default, physics) in keys.items():
            if cp.has_option(section, key):
                data[section][key] = _canon(kind, cp.get(section, key),
                                            f"{origin}: [{section}] {key}")
            else:
                data[section][key] = _canon(kind, default, f"default [{section}] {key}")
                if physics:
                    log.warning("[%s] %s not set, defaulting to %r",
                                section, key, data[section][key])
    _validate_consistency(data)
    return Config(data)


def load_config(path: str) -> Config:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, origin=path)


def echo_config(cfg: Config) -> str:
    """Canonical INI text of the effective configuration (round-trips)."""
    cp = configparser.ConfigParser(interpolation=None)
    for section, keys in cfg.data.items():
        cp[section] = dict(keys)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
