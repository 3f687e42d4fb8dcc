"""
Run configuration: an INI-style file with [grid], [physics], [time],
[regularization], [sweep] and [run] sections, validated by ``RunConfig``.

Example:

    [grid]
    n_x1 = 64
    n_y = 65

    [physics]
    ell = 1.0
    a0 = 0.25

    [sweep]
    eps = 1e-2, 3e-3, 1e-3, 3e-4

Parse problems are reported with the line number of the offending entry.
"""

from __future__ import annotations

import configparser
import hashlib
from pathlib import Path
from typing import Any

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from .core_fields import MAX_DERIVATIVE_ORDER, WEIGHT_EXPONENT_LIMIT, Grid
from .errors import ConfigError
from .scenarios import SCENARIOS

SECTIONS: dict[str, tuple[str, ...]] = {
    "grid": ("n_x1", "n_y", "n_x3", "H", "L", "Y"),
    "physics": ("ell", "a0", "rho0", "tau", "C0", "m_max", "rho_floor"),
    "time": ("dt", "T"),
    "regularization": ("eps1", "eps1_schedule"),
    "sweep": ("eps",),
    "run": ("identity_tol", "scenario", "output_dir", "seed", "snapshot_every", "workers"),
}


def _split_floats(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(float(item) for item in value.replace(";", ",").split(",") if item.strip())
    return value


def _strictly_decreasing(values: tuple[float, ...]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


class RunConfig(BaseModel):
    """Every knob of a run. Grid, physics and time values feed the solvers directly."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # [grid]
    n_x1: int = Field(64, ge=8)
    n_y: int = Field(65, ge=5)
    n_x3: int = Field(65, ge=5)
    H: float = Field(8.0, gt=0)
    L: float = Field(10.0, gt=0)
    Y: float = Field(8.0, gt=0)

    # [physics]
    ell: float = Field(1.0, gt=0.5, le=1.0)
    a0: float = Field(0.25, gt=0)
    rho0: float = Field(1.0, gt=0)
    tau: float = Field(3.0, gt=0)
    C0: float = Field(1.0, ge=0)
    m_max: int = Field(8, ge=3, le=MAX_DERIVATIVE_ORDER)
    rho_floor: float = Field(1e-3, gt=0)

    # [time]
    dt: float = Field(1e-3, gt=0)
    T: float | None = Field(None, gt=0)

    # [regularization]
    eps1: float = Field(1e-3, gt=0)
    eps1_schedule: tuple[float, ...] = (1e-2, 1e-3, 1e-4)

    # [sweep]
    eps: tuple[float, ...] = (1e-2, 3e-3, 1e-3, 3e-4)

    # [run]
    identity_tol: float = Field(1e-6, gt=0)
    scenario: str = "small_data"
    output_dir: str = "rotbl_out"
    seed: int = Field(0, ge=0)
    snapshot_every: int = Field(10, ge=1)
    workers: int = Field(4, ge=1)

    @field_validator("eps1_schedule", "eps", mode="before")
    @classmethod
    def _parse_lists(cls, value: Any) -> Any:
        return _split_floats(value)

    @model_validator(mode="after")
    def _cross_field(self, info: ValidationInfo) -> RunConfig:
        # validate_config collects these itself
        if info.context and info.context.get("collect"):
            return self
        problems = self.cross_field_violations()
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def cross_field_violations(self) -> list[str]:
        problems = []
        if self.n_x1 & (self.n_x1 - 1):
            problems.append(f"n_x1 must be a power of two, got {self.n_x1}")
        if self.a0 * self.Y**2 > WEIGHT_EXPONENT_LIMIT:
            problems.append(
                f"a0*Y^2 = {self.a0 * self.Y**2:.1f} exceeds {WEIGHT_EXPONENT_LIMIT:.0f}"
            )
        rho_start = min(self.rho0 / 2.0, self.tau / 3.0)
        if not rho_start > self.rho_floor:
            problems.append(
                f"initial radius min(rho0/2, tau/3) = {rho_start:.3e} "
                f"is not above rho_floor = {self.rho_floor:.1e}"
            )
        for name in ("eps1_schedule", "eps"):
            values = getattr(self, name)
            if not values:
                problems.append(f"{name} is empty")
            elif any(v <= 0 for v in values):
                problems.append(f"{name} must be positive, got {values}")
            elif not _strictly_decreasing(values):
                problems.append(f"{name} must be strictly decreasing, got {values}")
        if len(self.eps1_schedule) < 3:
            problems.append(
                f"eps1_schedule needs at least 3 values, got {len(self.eps1_schedule)}"
            )
        if self.T is not None and self.T < self.dt:
            problems.append(f"T = {self.T} is shorter than one step dt = {self.dt}")
        if self.scenario not in SCENARIOS:
            problems.append(f"unknown scenario {self.scenario!r}, expected one of {sorted(SCENARIOS)}")
        return problems

    def outer_grid(self) -> Grid:
        """Half-plane grid: x3 in [0, H] with n_x3 nodes."""
        return Grid(self.n_x1, self.n_x3, self.L, self.H)

    def layer_grid(self) -> Grid:
        return Grid(self.n_x1, self.n_y, self.L, self.Y)

    def to_ini(self) -> str:
        values = self.model_dump()
        lines = []
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                value = values[key]
                if value is None:
                    continue
                if isinstance(value, tuple):
                    value = ", ".join(repr(v) for v in value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()


# ============================================================================
# Parsing
# ============================================================================


def _line_numbers(text: str) -> dict[str, int]:
    """Line of every `key = value` entry, keyed by option name."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;[":
            continue
        for sep in ("=", ":"):
            if sep in line:
                out[line.split(sep, 1)[0].strip()] = lineno
                break
    return out


def parse_config_text(text: str) -> tuple[dict[str, str], dict[str, int]]:
    """Raw option values and their line numbers.

    Raises:
        ConfigError: malformed syntax, unknown sections or unknown keys.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        raise ConfigError(f"cannot parse config: {exc.message.splitlines()[0]}", lineno) from exc

    linenos = _line_numbers(text)
    values: dict[str, str] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", _section_line(text, section))
        for key, value in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", linenos.get(key))
            values[key] = value
    return values, linenos


def _section_line(text: str, section: str) -> int | None:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.strip() == f"[{section}]":
            return lineno
    return None


def _describe(exc: ValidationError, linenos: dict[str, int]) -> list[str]:
    out = []
    for err in exc.errors():
        key = str(err["loc"][0]) if err["loc"] else ""
        prefix = f"line {linenos[key]}: " if key in linenos else ""
        label = f"{key}: " if key else ""
        out.append(f"{prefix}{label}{err['msg']}")
    return out


def load_config(
    path: str | Path | None = None,
    text: str | None = None,
    **overrides: Any,
) -> RunConfig:
    """Read, override and validate a configuration.

    Overrides with value None are ignored; the rest replace file values.

    Raises:
        ConfigError: parse error or any violated constraint.
    """
    if path is not None:
        text = Path(path).read_text()
    values, linenos = parse_config_text(text) if text else ({}, {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        loc = exc.errors()[0]["loc"]
        lineno = linenos.get(str(loc[0])) if loc else None
        raise ConfigError("; ".join(_describe(exc, {})), lineno) from exc


def validate_config_text(text: str) -> list[str]:
    """Every violated constraint of a configuration; empty when it is usable."""
    try:
        values, linenos = parse_config_text(text)
    except ConfigError as exc:
        return [str(exc)]
    try:
        cfg = RunConfig.model_validate(values, context={"collect": True})
    except ValidationError as exc:
        return _describe(exc, linenos)
    return cfg.cross_field_violations()
