"""
Outer flow: two-dimensional incompressible Euler on the half-plane.

The (u1, u3) components are advanced in vorticity-streamfunction form. The
state carries the streamfunction psi with u1 = d_y(psi), u3 = -d_x1(psi), so
the discrete divergence vanishes identically and u3 = 0 on the wall row
because psi is held at zero there (odd reflection across x3 = 0). The lid at
x3 = H is impermeable as well: psi is constant in x1 on the top row and its
tendency vanishes on both walls.

The transverse component u2 is a passive scalar advanced with a monotone
semi-Lagrangian step. Pressure comes from a Poisson problem with Neumann data
read off the x3 momentum balance.

Grids here use the ``Grid`` type with the wall-normal coordinate x3 in the
``y`` slot and the lid height H in the ``Y`` slot.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from .core_fields import (
    DEFAULT_ELL,
    Field2D,
    Grid,
    TraceField,
    d_x1,
    d_y,
    integrate_x1_from_left,
    l2_norm,
    require_same_grid,
    second_difference,
    spectral_derivative,
    wall_derivative,
    weighted_l2_trace,
)
from .errors import (
    CFLViolationError,
    CompatibilityWarning,
    GridError,
    NonFiniteError,
    StateMismatchError,
)

logger = logging.getLogger(__name__)

CFL_NUMBER = 0.5

# Williamson low-storage RK3
RK3_A = (0.0, -5.0 / 9.0, -153.0 / 128.0)
RK3_B = (1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0)
RK3_C = (0.0, 1.0 / 3.0, 3.0 / 4.0)

# Relative divergence above which a velocity pair is not a gradient-compatible field
COMPATIBILITY_TOLERANCE = 1e-8

# forcing(x1, x3, t) -> vorticity source on the grid
Forcing = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


# ============================================================================
# State types
# ============================================================================


@dataclass(frozen=True, eq=False)
class OuterState:
    """Interior velocity and pressure u^{I,0}, p^{I,0} on the half-plane grid."""

    u1: Field2D
    u2: Field2D
    u3: Field2D
    p: Field2D
    t: float = 0.0
    psi: Field2D | None = None

    def __post_init__(self):
        fields = [self.u1, self.u2, self.u3, self.p]
        if self.psi is not None:
            fields.append(self.psi)
        require_same_grid(*fields)

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> OuterState:
        return cls.from_streamfunction(Field2D.zeros(grid, "psi"), Field2D.zeros(grid, "u2"), t)

    @classmethod
    def from_streamfunction(cls, psi: Field2D, u2: Field2D, t: float = 0.0) -> OuterState:
        """Build the state from psi; the wall row of psi is set to zero."""
        grid = require_same_grid(psi, u2)
        values = np.array(psi.values)
        values[:, 0] = 0.0
        u1, u3 = velocity_from_streamfunction(values, grid)
        p = pressure_poisson(u1, u3, grid)
        return cls(
            u1=Field2D(grid, u1, "u1"),
            u2=u2.with_values(u2.values, "u2"),
            u3=Field2D(grid, u3, "u3"),
            p=Field2D(grid, p, "p"),
            t=t,
            psi=Field2D(grid, values, "psi"),
        )


@dataclass(frozen=True, eq=False)
class TraceSet:
    """Wall traces of the outer solution consumed by the layer."""

    u1_bar: TraceField
    u2_bar: TraceField
    u3_bar: TraceField
    d3u3_bar: TraceField
    d1d3u3_bar: TraceField
    d1p0_bar: TraceField
    d2p0_bar: TraceField
    t: float = 0.0
    d1u1_bar: TraceField | None = None
    d1u2_bar: TraceField | None = None
    d3p0_bar: TraceField | None = None

    def __post_init__(self):
        grid = self.u1_bar.grid
        # derived rows default from the primary ones
        if self.d1u1_bar is None:
            d1u1 = spectral_derivative(self.u1_bar.values, grid, 1)
            object.__setattr__(self, "d1u1_bar", TraceField(grid, d1u1, "d1u1_bar"))
        if self.d1u2_bar is None:
            d1u2 = spectral_derivative(self.u2_bar.values, grid, 1)
            object.__setattr__(self, "d1u2_bar", TraceField(grid, d1u2, "d1u2_bar"))
        if self.d3p0_bar is None:
            object.__setattr__(self, "d3p0_bar", TraceField.zeros(grid, "d3p0_bar"))

    @property
    def grid(self) -> Grid:
        return self.u1_bar.grid

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> TraceSet:
        z = {name: TraceField.zeros(grid, name) for name in TRACE_NAMES}
        return cls(**z, t=t)

    @classmethod
    def from_arrays(cls, grid: Grid, t: float = 0.0, **rows: np.ndarray) -> TraceSet:
        """Build a TraceSet from raw arrays; missing rows are zero."""
        unknown = set(rows) - set(TRACE_NAMES) - {"d1u1_bar", "d1u2_bar", "d3p0_bar"}
        if unknown:
            raise StateMismatchError(f"unknown trace rows: {sorted(unknown)}")
        built = {
            name: TraceField(grid, rows.get(name, np.zeros(grid.n_x1)), name) for name in TRACE_NAMES
        }
        extras = {
            name: TraceField(grid, rows[name], name)
            for name in ("d1u1_bar", "d1u2_bar", "d3p0_bar")
            if name in rows
        }
        return cls(**built, **extras, t=t)

    def on_grid(self, grid: Grid) -> TraceSet:
        """The same rows attached to another grid with identical x1 nodes (outer to layer)."""
        if (grid.n_x1, grid.L) != (self.grid.n_x1, self.grid.L):
            raise GridError(
                f"x1 nodes differ: ({grid.n_x1}, L={grid.L}) vs ({self.grid.n_x1}, L={self.grid.L})"
            )
        return TraceSet.from_arrays(grid, self.t, **self.as_rows())

    def as_rows(self) -> dict[str, np.ndarray]:
        names = TRACE_NAMES + ("d1u1_bar", "d1u2_bar", "d3p0_bar")
        return {name: getattr(self, name).values for name in names}


TRACE_NAMES = (
    "u1_bar",
    "u2_bar",
    "u3_bar",
    "d3u3_bar",
    "d1d3u3_bar",
    "d1p0_bar",
    "d2p0_bar",
)


# ============================================================================
# Streamfunction and Poisson machinery
# ============================================================================


def velocity_from_streamfunction(psi: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    u1 = np.gradient(psi, grid.dy, axis=1, edge_order=2)
    u3 = -spectral_derivative(psi, grid, 1)
    return u1, u3


def vorticity_from_streamfunction(psi: np.ndarray, grid: Grid) -> np.ndarray:
    return spectral_derivative(psi, grid, 2) + second_difference(psi, grid.dy, axis=1)


def _tridiagonal(n: int, h: float, k2: float) -> np.ndarray:
    ab = np.empty((3, n))
    ab[0, :] = 1.0 / h**2
    ab[1, :] = -2.0 / h**2 - k2
    ab[2, :] = 1.0 / h**2
    return ab


def _solve_real_imag(ab: np.ndarray, rhs: np.ndarray, bands=(1, 1)) -> np.ndarray:
    sol = solve_banded(bands, ab, np.column_stack([rhs.real, rhs.imag]))
    return sol[:, 0] + 1j * sol[:, 1]


def solve_dirichlet_modes(
    rhs: np.ndarray,
    grid: Grid,
    bottom: np.ndarray | None = None,
    top: np.ndarray | None = None,
) -> np.ndarray:
    """Solve (d_x1^2 + D_yy) q = rhs on interior rows with q given on both wall rows.

    D_yy is the three-point second difference; each tangential Fourier mode is
    an independent tridiagonal system.
    """
    n, m = grid.shape
    h = grid.dy
    rhs_hat = np.fft.rfft(rhs, axis=0)
    bottom_hat = np.fft.rfft(np.zeros(n) if bottom is None else bottom)
    top_hat = np.fft.rfft(np.zeros(n) if top is None else top)
    out_hat = np.zeros_like(rhs_hat)
    for i, k in enumerate(grid.wavenumbers):
        b = rhs_hat[i, 1:-1].copy()
        b[0] -= bottom_hat[i] / h**2
        b[-1] -= top_hat[i] / h**2
        out_hat[i, 1:-1] = _solve_real_imag(_tridiagonal(m - 2, h, k**2), b)
        out_hat[i, 0] = bottom_hat[i]
        out_hat[i, -1] = top_hat[i]
    return np.fft.irfft(out_hat, n=n, axis=0)


def solve_neumann_modes(
    rhs: np.ndarray,
    grid: Grid,
    flux_bottom: np.ndarray | None = None,
    flux_top: np.ndarray | None = None,
) -> np.ndarray:
    """Solve (d_x1^2 + D_yy) q = rhs with d_y q prescribed on both wall rows.

    Ghost values close the wall rows. The mean mode is singular; its wall value
    is pinned to zero and the caller fixes the gauge.
    """
    n, m = grid.shape
    h = grid.dy
    rhs_hat = np.fft.rfft(rhs, axis=0)
    gb = np.fft.rfft(np.zeros(n) if flux_bottom is None else flux_bottom)
    gt = np.fft.rfft(np.zeros(n) if flux_top is None else flux_top)
    out_hat = np.zeros_like(rhs_hat)
    for i, k in enumerate(grid.wavenumbers):
        ab = _tridiagonal(m, h, k**2)
        ab[0, 1] = 2.0 / h**2
        ab[2, -2] = 2.0 / h**2
        b = rhs_hat[i].copy()
        b[0] += 2.0 * gb[i] / h
        b[-1] -= 2.0 * gt[i] / h
        if i == 0:
            ab[1, 0] = 1.0
            ab[0, 1] = 0.0
            b[0] = 0.0
        out_hat[i] = _solve_real_imag(ab, b)
    return np.fft.irfft(out_hat, n=n, axis=0)


def pressure_poisson(
    u1: np.ndarray,
    u3: np.ndarray,
    grid: Grid,
    flux_bottom: np.ndarray | None = None,
    flux_top: np.ndarray | None = None,
) -> np.ndarray:
    """Pressure of a divergence-free (u1, u3) pair, gauge p(-L, 0) = 0."""
    d1u1 = spectral_derivative(u1, grid, 1)
    d1u3 = spectral_derivative(u3, grid, 1)
    d3u1 = np.gradient(u1, grid.dy, axis=1, edge_order=2)
    d3u3 = np.gradient(u3, grid.dy, axis=1, edge_order=2)
    rhs = -(d1u1**2 + 2.0 * d3u1 * d1u3 + d3u3**2)
    p = solve_neumann_modes(rhs, grid, flux_bottom, flux_top)
    return p - p[0, 0]


# ============================================================================
# Time stepping
# ============================================================================


def admissible_dt(u1: np.ndarray, u3: np.ndarray, grid: Grid, cfl: float = CFL_NUMBER) -> float:
    umax = max(float(np.max(np.abs(u1))), float(np.max(np.abs(u3))))
    if umax == 0.0:
        return float("inf")
    return cfl * min(grid.dx1, grid.dy) / umax


def check_cfl(dt: float, dt_max: float, where: str) -> None:
    if dt <= 0.0:
        raise CFLViolationError(dt, dt_max, where)
    if dt > dt_max * (1.0 + 1e-12):
        raise CFLViolationError(dt, dt_max, where)


def _vorticity_tendency(
    psi: np.ndarray, grid: Grid, t: float, forcing: Forcing | None
) -> np.ndarray:
    u1, u3 = velocity_from_streamfunction(psi, grid)
    omega = vorticity_from_streamfunction(psi, grid)
    d1w = spectral_derivative(omega, grid, 1)
    d3w = np.gradient(omega, grid.dy, axis=1, edge_order=2)
    rhs = -(u1 * d1w + u3 * d3w)
    if forcing is not None:
        x1, x3 = grid.mesh()
        rhs = rhs + forcing(x1, x3, t)
    return rhs


def rk3_streamfunction(
    psi: np.ndarray,
    grid: Grid,
    t: float,
    dt: float,
    tendency: Callable[[np.ndarray, float], np.ndarray],
) -> np.ndarray:
    """One low-storage RK3 step of d(psi)/dt = Lap^{-1}(tendency), psi_t = 0 on both walls."""
    psi = np.array(psi)
    dq = np.zeros_like(psi)
    for a, b, c in zip(RK3_A, RK3_B, RK3_C):
        psi_t = solve_dirichlet_modes(tendency(psi, t + c * dt), grid)
        dq = a * dq + dt * psi_t
        psi = psi + b * dq
    return psi


def semi_lagrangian(
    q: np.ndarray, u1: np.ndarray, u3: np.ndarray, grid: Grid, dt: float
) -> np.ndarray:
    """Linear-interpolation semi-Lagrangian transport; periodic in x1, clipped in x3."""
    x1, x3 = grid.mesh()
    xd = np.mod(x1 - dt * u1 + grid.L, 2.0 * grid.L) - grid.L
    zd = np.clip(x3 - dt * u3, 0.0, grid.Y)
    x_ext = np.append(grid.x1_nodes, grid.L)
    q_ext = np.vstack([q, q[:1]])
    interp = RegularGridInterpolator((x_ext, grid.y_nodes), q_ext, method="linear")
    return interp(np.stack([xd.ravel(), zd.ravel()], axis=-1)).reshape(grid.shape)


def step_outer(
    s: OuterState, dt: float, forcing: Forcing | None = None, cfl: float = CFL_NUMBER
) -> OuterState:
    """Advance the outer state by dt.

    Args:
        s: current state; must carry its streamfunction.
        dt: time increment, at most the CFL limit of max|u|.
        forcing: optional vorticity source f(x1, x3, t), used for manufactured solutions.
        cfl: Courant number of the limit.

    Returns:
        OuterState: the state at t + dt.

    Raises:
        CFLViolationError: if dt exceeds the admissible step.
        NonFiniteError: if the update produced NaN or Inf.
    """
    if s.psi is None:
        raise StateMismatchError("step_outer needs a state built from a streamfunction")
    grid = s.grid
    check_cfl(dt, admissible_dt(s.u1.values, s.u3.values, grid, cfl), "step_outer")

    psi = rk3_streamfunction(
        s.psi.values,
        grid,
        s.t,
        dt,
        lambda q, t: _vorticity_tendency(q, grid, t, forcing),
    )
    u2 = semi_lagrangian(s.u2.values, s.u1.values, s.u3.values, grid, dt)
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(u2))):
        raise NonFiniteError("step_outer")
    return OuterState.from_streamfunction(Field2D(grid, psi, "psi"), s.u2.with_values(u2), s.t + dt)


# ============================================================================
# Traces and diagnostics
# ============================================================================


def extract_traces(s: OuterState) -> TraceSet:
    """Wall traces and wall-normal derivatives at x3 = 0."""
    grid = s.grid
    u1, u2, u3, p = s.u1.values, s.u2.values, s.u3.values, s.p.values
    d3u3 = wall_derivative(u3, grid.dy)
    d1u3_row = spectral_derivative(u3[:, 0], grid, 1)
    # impermeable wall: d_t u3 = 0, so the x3 momentum balance gives d3 p directly
    d3p0 = -(u1[:, 0] * d1u3_row + u3[:, 0] * d3u3)
    return TraceSet(
        u1_bar=TraceField(grid, u1[:, 0], "u1_bar"),
        u2_bar=TraceField(grid, u2[:, 0], "u2_bar"),
        u3_bar=TraceField(grid, u3[:, 0], "u3_bar"),
        d3u3_bar=TraceField(grid, d3u3, "d3u3_bar"),
        d1d3u3_bar=TraceField(grid, spectral_derivative(d3u3, grid, 1), "d1d3u3_bar"),
        d1p0_bar=TraceField(grid, spectral_derivative(p[:, 0], grid, 1), "d1p0_bar"),
        d2p0_bar=TraceField.zeros(grid, "d2p0_bar"),
        t=s.t,
        d1u1_bar=TraceField(grid, spectral_derivative(u1[:, 0], grid, 1), "d1u1_bar"),
        d1u2_bar=TraceField(grid, spectral_derivative(u2[:, 0], grid, 1), "d1u2_bar"),
        d3p0_bar=TraceField(grid, d3p0, "d3p0_bar"),
    )


def trace_transport_u2(
    u2_bar: TraceField, u1_bar: TraceField, dt: float, cfl: float = 1.0
) -> TraceField:
    """Advance the wall trace of u2 by transport with u1_bar (monotone, linear interpolation)."""
    grid = require_same_grid(u2_bar, u1_bar)
    umax = u1_bar.max_abs()
    dt_max = float("inf") if umax == 0.0 else cfl * grid.dx1 / umax
    check_cfl(dt, dt_max, "trace_transport_u2")
    departure = grid.x1_nodes - dt * u1_bar.values
    values = np.interp(departure, grid.x1_nodes, u2_bar.values, period=2.0 * grid.L)
    return u2_bar.with_values(values)


def bernoulli_residual(previous: TraceSet, current: TraceSet, ell: float = DEFAULT_ELL) -> float:
    """Weighted L2 norm of the wall transport law for u1_bar and u2_bar.

    The time derivative is the difference quotient of the two trace sets; the
    remaining terms are evaluated at the midpoint average.
    """
    require_same_grid(previous.u1_bar, current.u1_bar)
    dt = current.t - previous.t
    if dt <= 0.0:
        raise StateMismatchError(
            f"bernoulli_residual needs increasing times, got {previous.t} then {current.t}"
        )
    grid = current.grid

    def mid(name: str) -> np.ndarray:
        return 0.5 * (getattr(previous, name).values + getattr(current, name).values)

    u1m, u2m = mid("u1_bar"), mid("u2_bar")
    r1 = (
        (current.u1_bar.values - previous.u1_bar.values) / dt
        + u1m * spectral_derivative(u1m, grid, 1)
        + mid("d1p0_bar")
    )
    r2 = (current.u2_bar.values - previous.u2_bar.values) / dt + u1m * spectral_derivative(
        u2m, grid, 1
    )
    n1 = weighted_l2_trace(TraceField(grid, r1), ell)
    n2 = weighted_l2_trace(TraceField(grid, r2), ell)
    return float(np.hypot(n1, n2))


def path_integrate(
    g1: np.ndarray, g3: np.ndarray, grid: Grid, first: str = "x3"
) -> np.ndarray:
    """Potential q with d_x1 q = g1, d_x3 q = g3 and q(-L, 0) = 0.

    ``first="x3"`` integrates g3 up the left column and then g1 along x1 with
    the spectral antiderivative; ``first="x1"`` integrates g1 along the wall
    and then g3 up every column with the trapezoid rule.
    """
    if first == "x3":
        column = cumulative_trapezoid(g3[0], dx=grid.dy, initial=0.0)
        along = integrate_x1_from_left(Field2D(grid, g1), method="spectral").values
        return column[None, :] + along
    if first == "x1":
        wall = integrate_x1_from_left(Field2D(grid, g1), method="spectral").values[:, 0]
        columns = cumulative_trapezoid(g3, dx=grid.dy, axis=1, initial=0.0)
        return wall[:, None] + columns
    raise ValueError(f"unknown path order {first!r}")


def compatibility_residual(u1: Field2D, u3: Field2D) -> float:
    """Relative divergence of (u1, u3); zero for a gradient-compatible potential pair."""
    div = d_x1(u1) + d_y(u3)
    scale = l2_norm(d_x1(u1)) + l2_norm(d_y(u3))
    return 0.0 if scale == 0.0 else l2_norm(div) / scale


def reconstruct_p_minus2(s: OuterState, first: str = "x3") -> Field2D:
    """Pressure p^{I,-2} from d_x1 p = -u3, d_x3 p = u1, anchored at the corner (-L, 0)."""
    _warn_if_incompatible(s.u1, s.u3, "p_Im2")
    p = path_integrate(-s.u3.values, s.u1.values, s.grid, first)
    return Field2D(s.grid, p, "p_Im2")


def _warn_if_incompatible(u1: Field2D, u3: Field2D, label: str) -> None:
    residual = compatibility_residual(u1, u3)
    if residual > COMPATIBILITY_TOLERANCE:
        message = f"{label}: gradient field incompatible (relative divergence {residual:.2e})"
        logger.warning(message)
        warnings.warn(message, CompatibilityWarning, stacklevel=3)


def divergence(s: OuterState) -> Field2D:
    div = d_x1(s.u1) + d_y(s.u3)
    return div.with_values(div.values, "div")


def kinetic_energy(s: OuterState) -> float:
    """Half the squared L2 norm of (u1, u3)."""
    return 0.5 * (l2_norm(s.u1) ** 2 + l2_norm(s.u3) ** 2)


def enstrophy(s: OuterState) -> float:
    if s.psi is None:
        omega = (d_y(s.u1) - d_x1(s.u3)).values
    else:
        omega = vorticity_from_streamfunction(s.psi.values, s.grid)
    return 0.5 * l2_norm(Field2D(s.grid, omega)) ** 2
