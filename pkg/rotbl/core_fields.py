"""
Grids, fields and the discrete operators shared by every solver.

The tangential coordinate x1 lives on the periodic interval [-L, L) and is
differentiated with FFTs. The wall-normal coordinate (y in the layer, x3 in
the interior) is finite-difference on [0, Y] with y_nodes[0] = 0.

Fields are immutable values: every operator returns a new ``Field2D`` whose
array is read-only.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import (
    GridError,
    NonFiniteError,
    OperatorBoundsError,
    ParameterError,
    StateMismatchError,
    TruncationWarning,
    WeightOverflowError,
)

logger = logging.getLogger(__name__)

DEFAULT_L = 10.0
DEFAULT_Y = 8.0
DEFAULT_ELL = 1.0

# Highest tangential derivative order any operator will compute
MAX_DERIVATIVE_ORDER = 12

# Relative size of |f(-L, .)| above which the left edge counts as not decayed
DECAY_THRESHOLD = 1e-8

# a * Y**2 bound keeping exp(a y^2) well inside float64 range
WEIGHT_EXPONENT_LIMIT = 600.0


# ============================================================================
# Domain types
# ============================================================================


@dataclass(frozen=True)
class Grid:
    """Tensor grid: periodic x1 on [-L, L), uniform wall-normal nodes on [0, Y]."""

    n_x1: int
    n_y: int
    L: float = DEFAULT_L
    Y: float = DEFAULT_Y

    def __post_init__(self):
        if self.n_x1 < 8 or self.n_x1 & (self.n_x1 - 1):
            raise GridError(f"n_x1 must be a power of two >= 8, got {self.n_x1}")
        if self.n_y < 5:
            raise GridError(f"n_y must be >= 5, got {self.n_y}")
        if not (self.L > 0 and self.Y > 0):
            raise GridError(f"L and Y must be positive, got L={self.L}, Y={self.Y}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x1, self.n_y)

    @property
    def dx1(self) -> float:
        return 2.0 * self.L / self.n_x1

    @property
    def dy(self) -> float:
        return self.Y / (self.n_y - 1)

    @cached_property
    def x1_nodes(self) -> np.ndarray:
        nodes = -self.L + self.dx1 * np.arange(self.n_x1)
        nodes.setflags(write=False)
        return nodes

    @cached_property
    def y_nodes(self) -> np.ndarray:
        nodes = np.linspace(0.0, self.Y, self.n_y)
        nodes[0] = 0.0
        nodes.setflags(write=False)
        return nodes

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the real FFT along x1."""
        k = 2.0 * np.pi * np.fft.rfftfreq(self.n_x1, d=self.dx1)
        k.setflags(write=False)
        return k

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (X1, Y) coordinate arrays of shape (n_x1, n_y)."""
        return np.meshgrid(self.x1_nodes, self.y_nodes, indexing="ij")

    def with_sizes(self, n_x1: int | None = None, n_y: int | None = None) -> Grid:
        return Grid(n_x1 or self.n_x1, n_y or self.n_y, self.L, self.Y)


def _frozen_array(values, shape: tuple[int, ...], label: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise GridError(f"{label or 'field'}: shape {arr.shape} does not match grid {shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(label or "field")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Field2D:
    """Scalar unknown sampled on a Grid, indexed (i_x1, i_y)."""

    grid: Grid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, self.grid.shape, self.label))

    @classmethod
    def zeros(cls, grid: Grid, label: str = "") -> Field2D:
        return cls(grid, np.zeros(grid.shape), label)

    @classmethod
    def from_function(
        cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], label: str = ""
    ) -> Field2D:
        x1, y = grid.mesh()
        return cls(grid, np.broadcast_to(fn(x1, y), grid.shape), label)

    def with_values(self, values, label: str | None = None) -> Field2D:
        return Field2D(self.grid, values, self.label if label is None else label)

    def row(self, j: int = 0, label: str | None = None) -> TraceField:
        """Restriction to the wall-normal node j (j=0 is the wall trace)."""
        return TraceField(self.grid, self.values[:, j], label or f"{self.label}[y{j}]")

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path):
        """Write x1,y,value rows; returns the path."""
        from .artifacts import write_field_csv

        return write_field_csv(path, self)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field2D):
            require_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other) -> Field2D:
        return self.with_values(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> Field2D:
        return self.with_values(self.values - self._coerce(other))

    def __mul__(self, other) -> Field2D:
        return self.with_values(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self) -> Field2D:
        return self.with_values(-self.values)


@dataclass(frozen=True, eq=False)
class TraceField:
    """Boundary function of x1 only (an overlined quantity)."""

    grid: Grid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, (self.grid.n_x1,), self.label))

    @classmethod
    def zeros(cls, grid: Grid, label: str = "") -> TraceField:
        return cls(grid, np.zeros(grid.n_x1), label)

    def with_values(self, values, label: str | None = None) -> TraceField:
        return TraceField(self.grid, values, self.label if label is None else label)

    def broadcast(self) -> np.ndarray:
        """Values repeated along the wall-normal axis, shape (n_x1, n_y)."""
        return np.repeat(self.values[:, None], self.grid.n_y, axis=1)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class WeightParams:
    """Weight <x1>^ell exp(a y^2) of the layer norms."""

    ell: float = DEFAULT_ELL
    a: float = 0.25

    def __post_init__(self):
        if not 0.5 < self.ell <= 1.0:
            raise ParameterError(f"ell must lie in (1/2, 1], got {self.ell}")
        if not self.a > 0:
            raise ParameterError(f"a must be positive, got {self.a}")

    def check_overflow(self, Y: float) -> None:
        if self.a * Y**2 > WEIGHT_EXPONENT_LIMIT:
            raise WeightOverflowError(
                f"a*Y^2 = {self.a * Y**2:.1f} exceeds {WEIGHT_EXPONENT_LIMIT:.0f}"
            )


def require_same_grid(*items) -> Grid:
    grid = items[0].grid
    for item in items[1:]:
        if item.grid != grid:
            raise StateMismatchError(
                f"grid mismatch: {item.label or type(item).__name__} on {item.grid}, expected {grid}"
            )
    return grid


# ============================================================================
# Tangential (spectral) operators
# ============================================================================


def _x1_shape(grid: Grid, ndim: int) -> tuple[int, ...]:
    return (grid.n_x1,) + (1,) * (ndim - 1)


def spectral_derivative(values: np.ndarray, grid: Grid, order: int) -> np.ndarray:
    """Order-th x1 derivative of an array whose axis 0 is x1."""
    n = grid.n_x1
    coeffs = np.fft.rfft(values, axis=0)
    k = grid.wavenumbers.reshape(_x1_shape(grid, values.ndim))
    coeffs = coeffs * (1j * k) ** order
    if order % 2 == 1:
        coeffs[-1] = 0.0
    return np.fft.irfft(coeffs, n=n, axis=0)


def spectral_antiderivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Integral from -L along x1, exact for trigonometric data without a Nyquist mode.

    The zero mode is integrated as a linear ramp, so the result is not periodic
    when the tangential mean of ``values`` is nonzero.
    """
    n = grid.n_x1
    coeffs = np.fft.rfft(values, axis=0)
    mean = coeffs[0].real / n
    k = grid.wavenumbers.reshape(_x1_shape(grid, values.ndim))
    integrated = np.zeros_like(coeffs)
    integrated[1:] = coeffs[1:] / (1j * k[1:])
    integrated[-1] = 0.0
    periodic = np.fft.irfft(integrated, n=n, axis=0)
    ramp = (grid.x1_nodes + grid.L).reshape(_x1_shape(grid, values.ndim))
    return periodic - periodic[0] + mean * ramp


def ramp_derivative(values: np.ndarray, grid: Grid, slope) -> np.ndarray:
    """d_x1 of samples of (periodic + slope * (x1 + L)), as produced by ``spectral_antiderivative``.

    ``slope`` is a scalar or has the shape of ``values`` without axis 0.
    """
    slope = np.asarray(slope, dtype=float)
    ramp = (grid.x1_nodes + grid.L).reshape(_x1_shape(grid, values.ndim)) * slope
    return spectral_derivative(values - ramp, grid, 1) + slope


def tangential_mean(values: np.ndarray) -> np.ndarray:
    return np.mean(values, axis=0)


def d_x1(f: Field2D, order: int = 1, m_max: int = MAX_DERIVATIVE_ORDER) -> Field2D:
    """Tangential derivative of order ``order`` via FFT; exact for band-limited data."""
    if order < 1 or order > m_max:
        raise OperatorBoundsError(f"d_x1 order {order} outside [1, {m_max}]")
    return f.with_values(spectral_derivative(f.values, f.grid, order))


def d_x1_trace(t: TraceField, order: int = 1, m_max: int = MAX_DERIVATIVE_ORDER) -> TraceField:
    if order < 1 or order > m_max:
        raise OperatorBoundsError(f"d_x1 order {order} outside [1, {m_max}]")
    return t.with_values(spectral_derivative(t.values, t.grid, order))


def integrate_x1_from_left(
    f: Field2D, threshold: float = DECAY_THRESHOLD, method: str = "trapezoid"
) -> Field2D:
    """Cumulative integral along x1 starting at -L, where the result is 0.

    Args:
        f: field to integrate at every fixed y.
        threshold: decay check level relative to max|f|.
        method: ``"trapezoid"`` (cumulative trapezoid rule) or ``"spectral"``
            (exact inverse of ``d_x1`` on zero-mean data).
    """
    check_left_decay(f.values, threshold, f.label)
    if method == "trapezoid":
        out = cumulative_trapezoid(f.values, dx=f.grid.dx1, axis=0, initial=0.0)
    elif method == "spectral":
        out = spectral_antiderivative(f.values, f.grid)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    return f.with_values(out)


def check_left_decay(values: np.ndarray, threshold: float = DECAY_THRESHOLD, label: str = "") -> bool:
    """Warn when |f(-L, .)| is not small compared to max|f|. Returns True when decayed."""
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    edge = float(np.max(np.abs(values[0])))
    if peak > 0.0 and edge > threshold * peak:
        message = (
            f"{label or 'field'} does not decay at x1=-L (|f(-L)|/max|f| = {edge / peak:.2e}); "
            "truncation error is unbounded"
        )
        logger.warning(message)
        warnings.warn(message, TruncationWarning, stacklevel=3)
        return False
    return True


# ============================================================================
# Wall-normal (finite-difference) operators
# ============================================================================


def second_difference(values: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Second derivative: centered interior, second-order one-sided at both ends."""
    f = np.moveaxis(values, axis, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / h**2
    out[..., 0] = (2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]) / h**2
    out[..., -1] = (2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]) / h**2
    return np.moveaxis(out, -1, axis)


def d_y(f: Field2D, order: int = 1) -> Field2D:
    """Wall-normal derivative of order 1 or 2 (second-order accurate everywhere)."""
    if order == 1:
        out = np.gradient(f.values, f.grid.dy, axis=1, edge_order=2)
    elif order == 2:
        out = second_difference(f.values, f.grid.dy, axis=1)
    else:
        raise OperatorBoundsError(f"d_y supports order 1 or 2, got {order}")
    return f.with_values(out)


def wall_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """One-sided second-order first derivative at the wall row."""
    return (-3.0 * values[:, 0] + 4.0 * values[:, 1] - values[:, 2]) / (2.0 * h)


# ============================================================================
# Norms
# ============================================================================


def _x1_weight(grid: Grid, ell: float) -> np.ndarray:
    return (1.0 + grid.x1_nodes**2) ** (ell / 2.0)


def weighted_l2(f: Field2D, w: WeightParams) -> float:
    """Discrete L2 norm of <x1>^ell exp(a y^2) f, trapezoidal in both directions."""
    w.check_overflow(f.grid.Y)
    grid = f.grid
    weight = _x1_weight(grid, w.ell)[:, None] * np.exp(w.a * grid.y_nodes**2)[None, :]
    return _quadrature_norm(weight * f.values, grid)


def l2_norm(f: Field2D) -> float:
    """Unweighted discrete L2 norm with the same quadrature as ``weighted_l2``."""
    return _quadrature_norm(f.values, f.grid)


def weighted_l2_trace(t: TraceField, ell: float = DEFAULT_ELL) -> float:
    """L2 norm of <x1>^ell t along the periodic x1 grid."""
    weighted = _x1_weight(t.grid, ell) * t.values
    return float(np.sqrt(t.grid.dx1 * np.sum(weighted**2)))


def _quadrature_norm(values: np.ndarray, grid: Grid) -> float:
    # periodic trapezoid in x1 is the plain Riemann sum
    along_x1 = grid.dx1 * np.sum(values**2, axis=0)
    return float(np.sqrt(trapezoid(along_x1, dx=grid.dy)))

