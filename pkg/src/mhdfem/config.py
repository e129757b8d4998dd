"""Run configuration and its key=value file format."""

from __future__ import annotations

import configparser
import dataclasses
from io import StringIO
from dataclasses import dataclass
from fractions import Fraction

from .assembly import B_MIXED, B_NATURAL, B_TANGENTIAL, MEAN_ZERO, PIN_NODE, Coefficients
from .linsolve import METHODS, SolverConfig

CASES = ("hartmann", "mms2d", "mms3d", "cavity3d", "decay", "temporal2d")

# (section, key) for every field written to a config file
_SECTIONS = {
    "case": "case", "dimension": "case", "out_dir": "case",
    "M": "mesh",
    "tau": "time", "T": "time", "bdf2": "time", "steady_tol": "time",
    "Re": "physics", "Rm": "physics", "Sc": "physics", "coefficients": "physics", "alpha": "physics",
    "k": "elements", "k_hat": "elements",
    "b_mode": "boundary", "b_markers": "boundary", "pressure_mode": "boundary",
    "pin_point": "boundary", "pin_value": "boundary", "clean_divergence": "boundary",
    "solver": "solver", "solver_tol": "solver",
}


def _ratio(a: float, b: float) -> Fraction:
    return Fraction(a).limit_denominator(10**9) / Fraction(b).limit_denominator(10**9)


@dataclass
class ProblemConfig:
    case: str = "mms2d"
    dimension: int = 2
    M: int = 8
    tau: float = 1 / 64
    T: float = 0.25
    Re: float = 1.0
    Rm: float = 1.0
    Sc: float = 1.0
    coefficients: tuple | None = None  # (viscous, lorentz, diffusion, induction)
    k: int = 1
    k_hat: int = 1
    b_mode: str = B_TANGENTIAL
    b_markers: tuple = ()
    pressure_mode: str = MEAN_ZERO
    pin_point: tuple | None = None
    pin_value: float | None = None
    solver: str = "auto"
    solver_tol: float = 1e-12
    bdf2: bool = False
    alpha: float = 0.001
    clean_divergence: bool = False
    steady_tol: float | None = None
    out_dir: str | None = None

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    def validate(self) -> None:
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {', '.join(CASES)}")
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if not self.tau > 0 or not self.T > 0:
            raise ValueError("tau and T must be positive")
        if _ratio(self.T, self.tau).denominator != 1:
            raise ValueError(f"T/tau = {self.T / self.tau:g} is not an integer")
        for name in ("Re", "Rm", "Sc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.coefficients is not None:
            if len(self.coefficients) != 4 or not all(c > 0 for c in self.coefficients):
                raise ValueError("coefficients need four positive numbers")
        if self.k != 1:
            raise ValueError(f"unsupported element: only the P2/P1 velocity-pressure pair (k=1) is available, got k={self.k}")
        if self.k_hat not in (1, 2) or (self.dimension == 3 and self.k_hat == 2):
            raise ValueError(f"unsupported element: Nedelec order {self.k_hat} in {self.dimension}D")
        if self.b_mode not in (B_NATURAL, B_TANGENTIAL, B_MIXED):
            raise ValueError(f"unknown B boundary mode {self.b_mode!r}")
        if self.pressure_mode not in (MEAN_ZERO, PIN_NODE):
            raise ValueError(f"unknown pressure mode {self.pressure_mode!r}")
        if self.solver not in METHODS:
            raise ValueError(f"unknown solver {self.solver!r}")

    @property
    def n_steps(self) -> int:
        return int(_ratio(self.T, self.tau))

    @property
    def coeffs(self) -> Coefficients:
        if self.coefficients is not None:
            return Coefficients(*map(float, self.coefficients))
        return Coefficients.from_numbers(self.Re, self.Rm, self.Sc)

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(method=self.solver, relative_residual_tol=self.solver_tol)

    def replace(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, **changes)

    # ------------------------------------------------------------------
    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            sec = _SECTIONS[f.name]
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, f.name, _format(v))
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ProblemConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read_string(text)
        types = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                if key not in types:
                    raise ValueError(f"unknown config key {key!r} in section [{sec}]")
                kwargs[key] = _parse(key, raw)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ProblemConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


_INTS = {"dimension", "M", "k", "k_hat"}
_FLOATS = {"tau", "T", "Re", "Rm", "Sc", "solver_tol", "alpha"}
_BOOLS = {"bdf2", "clean_divergence"}


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _parse(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INTS:
            return int(raw)
        if key in _FLOATS:
            return float(raw)
        if key in _BOOLS:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if key in ("pin_value", "steady_tol"):
            return float(raw) if raw else None
        if key in ("coefficients", "pin_point"):
            return tuple(float(x) for x in raw.split(",")) if raw else None
        if key == "b_markers":
            return tuple(int(x) for x in raw.split(",")) if raw else ()
        if key == "out_dir":
            return raw or None
        return raw
    except ValueError:
        raise ValueError(f"invalid value {raw!r} for {key}") from None


CASE_DEFAULTS = {
    "hartmann": dict(dimension=2, M=32, tau=0.005, T=10.0, k_hat=2, b_mode=B_TANGENTIAL,
                     pressure_mode=PIN_NODE, pin_point=(0.0, 0.0)),
    "mms2d": dict(dimension=2, M=8, tau=1 / 64, T=0.25, k_hat=2, b_mode=B_TANGENTIAL),
    "mms3d": dict(dimension=3, M=4, tau=0.125, T=1.0, k_hat=1, b_mode=B_TANGENTIAL),
    "cavity3d": dict(dimension=3, M=8, tau=0.01, T=4.0, k_hat=1, b_mode=B_NATURAL,
                     coefficients=(0.01, 0.05, 0.005, 1.0)),
    "decay": dict(dimension=2, M=16, tau=0.01, T=2.0, k_hat=1, b_mode=B_NATURAL, Re=100.0, Rm=100.0,
                  clean_divergence=True),
    "temporal2d": dict(dimension=2, M=32, tau=0.1, T=1.0, k_hat=2, b_mode=B_TANGENTIAL, bdf2=True),
}


def default_config(case: str, **overrides) -> ProblemConfig:
    if case not in CASE_DEFAULTS:
        raise ValueError(f"unknown case {case!r}; expected one of {', '.join(CASES)}")
    kw = dict(CASE_DEFAULTS[case])
    kw.update(overrides)
    return ProblemConfig(case=case, **kw)
