"""
Linearized Euler correction u^{I,1} driven by the boundary layer.

The correction is advected by the outer flow and stretched by its gradient.
Its wall-normal velocity on the wall is not zero but equal to minus the
layer's wall value u^{B,1}_3(t, x1, 0), supplied after every layer step.

The state keeps a streamfunction whose wall row carries the boundary data,
plus a uniform wall-normal velocity ``w_mean`` for the tangential mean of the
datum (a mean wall flux cannot be written as d_x1 of a periodic function):

    u1 = d_y(psi),   u3 = -d_x1(psi) - w_mean

Each step advances psi with Dirichlet-zero tendencies, then lifts the wall
row to the new datum with a discretely harmonic extension that vanishes on
the lid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import factorial

import numpy as np

from .core_fields import (
    DEFAULT_ELL,
    Field2D,
    Grid,
    TraceField,
    require_same_grid,
    spectral_derivative,
    wall_derivative,
    weighted_l2_trace,
)
from .errors import NonFiniteError, StateMismatchError
from .outer_euler import (
    CFL_NUMBER,
    OuterState,
    _warn_if_incompatible,
    admissible_dt,
    check_cfl,
    path_integrate,
    rk3_streamfunction,
    semi_lagrangian,
    solve_dirichlet_modes,
    solve_neumann_modes,
    vorticity_from_streamfunction,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LinOuterState:
    """Interior correction u^{I,1}, p^{I,1} on the half-plane grid."""

    u1: Field2D
    u2: Field2D
    u3: Field2D
    p: Field2D
    t: float = 0.0
    psi: Field2D | None = None
    w_mean: float = 0.0

    def __post_init__(self):
        fields = [self.u1, self.u2, self.u3, self.p]
        if self.psi is not None:
            fields.append(self.psi)
        require_same_grid(*fields)

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    @property
    def wall_u3(self) -> TraceField:
        return self.u3.row(0, "u3_I1_bar")

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> LinOuterState:
        return cls.from_streamfunction(Field2D.zeros(grid), Field2D.zeros(grid), t=t)

    @classmethod
    def from_streamfunction(
        cls,
        psi: Field2D,
        u2: Field2D,
        w_mean: float = 0.0,
        t: float = 0.0,
        p: Field2D | None = None,
    ) -> LinOuterState:
        grid = require_same_grid(psi, u2)
        u1, u3 = linear_velocity(psi.values, w_mean, grid)
        return cls(
            u1=Field2D(grid, u1, "u1_I1"),
            u2=u2.with_values(u2.values, "u2_I1"),
            u3=Field2D(grid, u3, "u3_I1"),
            p=Field2D.zeros(grid, "p_I1") if p is None else p.with_values(p.values, "p_I1"),
            t=t,
            psi=psi.with_values(psi.values, "psi_I1"),
            w_mean=float(w_mean),
        )

    @classmethod
    def with_boundary(
        cls, psi_interior: Field2D, u2: Field2D, bl_trace: TraceField, t: float = 0.0
    ) -> LinOuterState:
        """Initial state compatible with the layer: u3 on the wall equals -bl_trace."""
        grid = require_same_grid(psi_interior, u2, bl_trace)
        values = np.array(psi_interior.values)
        values[:, 0] = 0.0
        values, w_mean = apply_boundary_lift(values, 0.0, bl_trace.values, grid)
        return cls.from_streamfunction(Field2D(grid, values), u2, w_mean, t)


def linear_velocity(psi: np.ndarray, w_mean: float, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    u1 = np.gradient(psi, grid.dy, axis=1, edge_order=2)
    u3 = -spectral_derivative(psi, grid, 1) - w_mean
    return u1, u3


def _periodic_antiderivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero-mean antiderivative of the zero-mean, non-Nyquist part of a row."""
    coeffs = np.fft.rfft(values)
    out = np.zeros_like(coeffs)
    out[1:] = coeffs[1:] / (1j * grid.wavenumbers[1:])
    out[-1] = 0.0
    return np.fft.irfft(out, n=grid.n_x1)


def apply_boundary_lift(
    psi: np.ndarray, w_mean: float, delta: np.ndarray, grid: Grid
) -> tuple[np.ndarray, float]:
    """Shift the wall value of u3 by -delta.

    The tangential mean of delta goes into the uniform wall-normal flow; the
    rest moves the wall row of psi, extended into the interior by a discretely
    harmonic field vanishing on the lid.
    """
    mean = float(np.mean(delta))
    chi_wall = _periodic_antiderivative(delta - mean, grid)
    lift = solve_dirichlet_modes(np.zeros(grid.shape), grid, bottom=chi_wall)
    return psi + lift, w_mean + mean


def _linear_tendency(psi: np.ndarray, w_mean: float, background: OuterState) -> np.ndarray:
    grid = background.grid
    u1, u3 = linear_velocity(psi, w_mean, grid)
    omega = vorticity_from_streamfunction(psi, grid)
    big_omega = vorticity_from_streamfunction(background.psi.values, grid)
    U1, U3 = background.u1.values, background.u3.values
    return -(
        U1 * spectral_derivative(omega, grid, 1)
        + U3 * np.gradient(omega, grid.dy, axis=1, edge_order=2)
        + u1 * spectral_derivative(big_omega, grid, 1)
        + u3 * np.gradient(big_omega, grid.dy, axis=1, edge_order=2)
    )


def linear_pressure(
    ls_u1: np.ndarray,
    ls_u3: np.ndarray,
    background: OuterState,
    wall_rate: np.ndarray,
    lid_rate: np.ndarray,
) -> np.ndarray:
    """Pressure p^{I,1} of the linearized system, gauge p(-L, 0) = 0.

    ``wall_rate`` and ``lid_rate`` are d_t u3 on the two walls.
    """
    grid = background.grid
    U1, U3 = background.u1.values, background.u3.values

    def d1(q):
        return spectral_derivative(q, grid, 1)

    def d3(q):
        return np.gradient(q, grid.dy, axis=1, edge_order=2)

    rhs = -2.0 * (
        d1(U1) * d1(ls_u1) + d1(U3) * d3(ls_u1) + d3(U1) * d1(ls_u3) + d3(U3) * d3(ls_u3)
    )
    d1u3 = d1(ls_u3)
    d3U3 = d3(U3)
    flux_bottom = -(wall_rate + U1[:, 0] * d1u3[:, 0] + ls_u3[:, 0] * d3U3[:, 0])
    flux_top = -(lid_rate + U1[:, -1] * d1u3[:, -1] + ls_u3[:, -1] * d3U3[:, -1])
    p = solve_neumann_modes(rhs, grid, flux_bottom, flux_top)
    return p - p[0, 0]


def step_linearized(
    ls: LinOuterState,
    s: OuterState,
    bl_trace: TraceField,
    dt: float,
    cfl: float = CFL_NUMBER,
) -> LinOuterState:
    """Advance u^{I,1} by dt with the wall datum u3 = -bl_trace at the new time.

    Args:
        ls: current correction; must carry its streamfunction.
        s: outer state at the same time (frozen over the step).
        bl_trace: u^{B,1}_3(t + dt, x1, 0) from the latest layer step.
        dt: time increment.
        cfl: Courant number for the advection by ``s``.

    Raises:
        StateMismatchError: grids or times differ.
        CFLViolationError: dt above the advective limit.
        NonFiniteError: NaN or Inf after the update.
    """
    grid = require_same_grid(ls.u1, s.u1, bl_trace)
    if ls.psi is None or s.psi is None:
        raise StateMismatchError("step_linearized needs streamfunction-carrying states")
    if not np.isclose(ls.t, s.t, rtol=0.0, atol=1e-12 * max(1.0, abs(s.t))):
        raise StateMismatchError(f"time mismatch: correction at {ls.t}, outer state at {s.t}")
    check_cfl(dt, admissible_dt(s.u1.values, s.u3.values, grid, cfl), "step_linearized")

    psi = rk3_streamfunction(
        ls.psi.values, grid, ls.t, dt, lambda q, t: _linear_tendency(q, ls.w_mean, s)
    )
    old_row = ls.u3.values[:, 0]
    delta = bl_trace.values + old_row
    psi, w_mean = apply_boundary_lift(psi, ls.w_mean, delta, grid)

    U2 = s.u2.values
    u2 = semi_lagrangian(ls.u2.values, s.u1.values, s.u3.values, grid, dt)
    u2 = u2 - dt * (
        ls.u1.values * spectral_derivative(U2, grid, 1)
        + ls.u3.values * np.gradient(U2, grid.dy, axis=1, edge_order=2)
    )
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(u2))):
        raise NonFiniteError("step_linearized")

    u1_new, u3_new = linear_velocity(psi, w_mean, grid)
    wall_rate = (u3_new[:, 0] - old_row) / dt
    lid_rate = np.full(grid.n_x1, -(w_mean - ls.w_mean) / dt)
    p = linear_pressure(u1_new, u3_new, s, wall_rate, lid_rate)
    return LinOuterState.from_streamfunction(
        Field2D(grid, psi), Field2D(grid, u2), w_mean, ls.t + dt, Field2D(grid, p)
    )


def reconstruct_p_minus1(ls: LinOuterState, first: str = "x3") -> Field2D:
    """Pressure p^{I,-1} from d_x1 p = -u3, d_x3 p = u1 of the correction, p(-L, 0) = 0."""
    _warn_if_incompatible(ls.u1, ls.u3, "p_Im1")
    p = path_integrate(-ls.u3.values, ls.u1.values, ls.grid, first)
    return Field2D(ls.grid, p, "p_Im1")


def boundary_datum_norm(
    bl_trace: TraceField, tau: float, ell: float = DEFAULT_ELL, m_max: int = 8
) -> float:
    """Truncated analytic size sum_m tau^m/m! |<x1>^ell d_x1^m b| of the wall datum."""
    total = weighted_l2_trace(bl_trace, ell)
    for m in range(1, m_max + 1):
        dm = bl_trace.with_values(spectral_derivative(bl_trace.values, bl_trace.grid, m))
        total += tau**m / factorial(m) * weighted_l2_trace(dm, ell)
    return float(total)


def wall_normal_gradient(ls: LinOuterState) -> TraceField:
    """Trace of d_x3 u3^{I,1} on the wall."""
    return TraceField(ls.grid, wall_derivative(ls.u3.values, ls.grid.dy), "d3u3_I1_bar")
