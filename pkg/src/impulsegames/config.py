"""Sectioned ``key = value`` run configuration.

Sections: ``[game]``, ``[grid]``, ``[solver]``, ``[output]``, ``[sweep]``
and ``[reference]``.  ``#`` and ``;`` start comments.  Every error names
the offending line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .discretization import CONSTRAINED, UNCONSTRAINED, BoundaryData, build_grid, default_boundary
from .game_driver import DriverParams
from .game_model import CostFamily, GainFamily, GameSpec, PayoffFamily
from .impulse_solver import FPPI, HOWARD, SolverParams

DIAGNOSTIC_LEVELS = ("off", "basic", "full")


class ConfigError(ValueError):
    def __init__(self, line: int | None, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# key -> kind; kinds: real, int, bool, str, reals, choice tuples
_SCHEMA = {
    "game": {
        "drift_kappa": "real", "sigma0": "real", "rho": "real",
        "f_poly": "reals", "f_abs": "real",
        "c0": "real", "c1": "real", "c2": "real", "c_sqrt": "real",
        "g0": "real", "g1": "real", "symmetry_line": "real",
        "lbc": "real", "rbc": "real", "allow_nonpositive_cost": "bool",
    },
    "grid": {"x_max": "exact", "h": "exact", "impulse_mode": (CONSTRAINED, UNCONSTRAINED)},
    "solver": {
        "variant": (FPPI, HOWARD), "lambda": "real", "inner_tol": "real", "tol": "real",
        "scale": "real", "max_outer_iters": "int", "max_inner_iters": "int",
        "cycle_window": "int", "abs_denominator": "bool",
    },
    "output": {"dir": "str", "precision": "int", "diagnostics": DIAGNOSTIC_LEVELS},
    "sweep": {"h": "exacts"},
    "reference": {"boundary": "real", "target": "real"},
}


@dataclass
class RunConfig:
    spec: GameSpec
    x_max: str
    h: str
    impulse_mode: str = CONSTRAINED
    boundary: BoundaryData | None = None
    allow_nonpositive_cost: bool = False
    solver: SolverParams = field(default_factory=SolverParams)
    driver: DriverParams = field(default_factory=DriverParams)
    output_dir: str = "output"
    precision: int = 17
    diagnostics: str = "basic"
    sweep: list[str] = field(default_factory=list)
    reference: tuple[float, float] | None = None

    def grid(self, h: str | None = None):
        return build_grid(self.x_max, self.h if h is None else h)


def _convert(kind, raw: str, line: int, key: str):
    def real(text):
        try:
            value = float(Fraction(text.strip())) if "/" in text else float(text)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(line, f"{key}: invalid number {text.strip()!r}") from None
        if not math.isfinite(value):
            raise ConfigError(line, f"{key}: value must be finite")
        return value

    def exact(text):
        text = text.strip()
        try:
            Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(line, f"{key}: invalid number {text!r}") from None
        return text

    if isinstance(kind, tuple):
        if raw not in kind:
            raise ConfigError(line, f"{key}: expected one of {', '.join(kind)}, got {raw!r}")
        return raw
    if kind == "real":
        return real(raw)
    if kind == "reals":
        return tuple(real(t) for t in raw.split(",") if t.strip())
    if kind == "exact":
        return exact(raw)
    if kind == "exacts":
        return [exact(t) for t in raw.split(",") if t.strip()]
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(line, f"{key}: invalid integer {raw!r}") from None
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(line, f"{key}: invalid boolean {raw!r}")
    return raw


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict[str, tuple[object, int]]] = {s: {} for s in _SCHEMA}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(lineno, f"malformed section header {line!r}")
            section = line[1:-1].strip().lower()
            if section not in _SCHEMA:
                raise ConfigError(lineno, f"unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(lineno, f"expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(lineno, "key outside of any section")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.lower()
        if key not in _SCHEMA[section]:
            raise ConfigError(lineno, f"unknown key {key!r} in [{section}]")
        if key in values[section]:
            raise ConfigError(lineno, f"duplicate key {key!r} in [{section}]")
        values[section][key] = (_convert(_SCHEMA[section][key], value, lineno, key), lineno)
    return _build(values)


def _get(values, section, key, default=None):
    entry = values[section].get(key)
    return default if entry is None else entry[0]


def _line(values, section, key):
    entry = values[section].get(key)
    return None if entry is None else entry[1]


def _build(values) -> RunConfig:
    game = lambda k, d=0.0: _get(values, "game", k, d)
    try:
        spec = GameSpec(
            drift_kappa=game("drift_kappa"),
            sigma0=game("sigma0", 1.0),
            rho=game("rho", 0.1),
            running_payoff=PayoffFamily(game("f_poly", (0.0,)), game("f_abs")),
            cost=CostFamily(game("c0", 1.0), game("c1"), game("c2"), game("c_sqrt")),
            gain=GainFamily(game("g0"), game("g1")),
            symmetry_line=game("symmetry_line"),
        )
    except ValueError as exc:
        raise ConfigError(None, f"[game]: {exc}") from None

    bc = None
    if "lbc" in values["game"] or "rbc" in values["game"]:
        d = default_boundary(spec)
        bc = BoundaryData(game("lbc", d.lbc), game("rbc", d.rbc), heuristic=False)

    if "x_max" not in values["grid"] or "h" not in values["grid"]:
        raise ConfigError(None, "[grid] needs both x_max and h")
    x_max, h = _get(values, "grid", "x_max"), _get(values, "grid", "h")
    _check_grid(x_max, h, _line(values, "grid", "h"))
    sweep = _get(values, "sweep", "h", [])
    for hh in sweep:
        _check_grid(x_max, hh, _line(values, "sweep", "h"))

    solver = lambda k, d: _get(values, "solver", k, d)
    try:
        sp = SolverParams(
            lambda_=solver("lambda", 1.0),
            inner_tol=solver("inner_tol", 1e-15),
            max_inner_iters=solver("max_inner_iters", 10_000),
            variant=solver("variant", FPPI),
            scale=solver("scale", 1.0),
            abs_denominator=solver("abs_denominator", True),
        )
        dp = DriverParams(
            tol=solver("tol", 1e-10),
            scale=solver("scale", 1.0),
            max_outer_iters=solver("max_outer_iters", 500),
            cycle_window=solver("cycle_window", 8),
        )
    except ValueError as exc:
        raise ConfigError(None, f"[solver]: {exc}") from None

    ref = None
    if values["reference"]:
        if set(values["reference"]) != {"boundary", "target"}:
            raise ConfigError(None, "[reference] needs both boundary and target")
        ref = (_get(values, "reference", "boundary"), _get(values, "reference", "target"))

    precision = _get(values, "output", "precision", 17)
    if not 1 <= precision <= 17:
        raise ConfigError(_line(values, "output", "precision"), "precision must be between 1 and 17")
    return RunConfig(
        spec=spec,
        x_max=x_max,
        h=h,
        impulse_mode=_get(values, "grid", "impulse_mode", CONSTRAINED),
        boundary=bc,
        allow_nonpositive_cost=game("allow_nonpositive_cost", False),
        solver=sp,
        driver=dp,
        output_dir=_get(values, "output", "dir", "output"),
        precision=precision,
        diagnostics=_get(values, "output", "diagnostics", "basic"),
        sweep=sweep,
        reference=ref,
    )


def _check_grid(x_max: str, h: str, line: int | None) -> None:
    try:
        build_grid(x_max, h)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(line, f"h={h}: {exc}") from None
