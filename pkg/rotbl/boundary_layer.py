"""
Prandtl-like boundary layer in the stretched variable y = x3 / sqrt(eps).

Only u = u^{B,1}_3 is advanced. The tangential velocity of the layer follows
from incompressibility,

    v(x1, y) = -int_{-L}^{x1} d_y u(z, y) dz,

and every other layer quantity (U1, U3, the pressure gradient) is assembled
from u and the outer traces. The regularized equation carries an artificial
tangential viscosity eps1 * d_x1^2 u:

    u_t = eps1 u_11 + u_yy - d3u3_bar y u_y - (v + u1_bar) u_1 - (u - u|y=0) u_y
          - d3u3_bar u - (d_1 u|y=0 + y d1d3u3_bar) v

with d_y u = d1u1_bar on the wall and u = 0 on the artificial top y = Y.

The second layer problem for u^{B,0}_2 is solved through the substituted
variable w = u2B + exp(-2 a0 y^2) u2_bar, which vanishes at both ends.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .analytic_norms import NormParams, x_norm
from .core_fields import (
    Field2D,
    Grid,
    TraceField,
    d_y,
    integrate_x1_from_left,
    ramp_derivative,
    require_same_grid,
    spectral_derivative,
    tangential_mean,
    wall_derivative,
    weighted_l2_trace,
)
from .errors import CFLViolationError, NonFiniteError, ParameterError, RotblError
from .outer_euler import TraceSet, check_cfl, trace_transport_u2

logger = logging.getLogger(__name__)

CFL_NUMBER = 0.5

# source(x1, y, t) -> extra right-hand side, used for manufactured solutions
Source = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


# ============================================================================
# State types
# ============================================================================


@dataclass(frozen=True)
class RegularizationParams:
    """Tangential viscosity eps1 and the schedule of a convergence sweep."""

    eps1: float
    schedule: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.eps1 > 0:
            raise ParameterError(f"eps1 must be positive, got {self.eps1}")
        schedule = tuple(float(e) for e in self.schedule)
        if any(e <= 0 for e in schedule):
            raise ParameterError(f"eps1 schedule must be positive, got {schedule}")
        if any(b >= a for a, b in zip(schedule, schedule[1:])):
            raise ParameterError(f"eps1 schedule must be strictly decreasing, got {schedule}")
        object.__setattr__(self, "schedule", schedule)


@dataclass(frozen=True, eq=False)
class BLState:
    """Layer unknown u = u^{B,1}_3 and the fields assembled from it.

    u^{B,0}_3 vanishes identically and is not stored; u^{B,0}_1 is U1 - u1_bar.
    """

    u: Field2D
    v: Field2D
    U1: Field2D
    U3: Field2D
    u2B: Field2D
    d1pB0: Field2D
    t: float = 0.0

    def __post_init__(self):
        require_same_grid(self.u, self.v, self.U1, self.U3, self.u2B, self.d1pB0)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @classmethod
    def assemble(
        cls,
        u: Field2D,
        traces: TraceSet,
        u3_lin_bar: TraceField,
        u2B: Field2D,
        d1pB0: Field2D | None = None,
        t: float | None = None,
    ) -> BLState:
        v = reconstruct_v(u)
        return cls(
            u=u.with_values(u.values, "u_B13"),
            v=v,
            U1=_U1_from_v(v, traces),
            U3=assemble_U3(u, u3_lin_bar, traces),
            u2B=u2B.with_values(u2B.values, "u_B02"),
            d1pB0=Field2D.zeros(u.grid, "d1p_B0") if d1pB0 is None else d1pB0,
            t=traces.t if t is None else t,
        )


# ============================================================================
# Reconstruction from u
# ============================================================================


def reconstruct_v(u: Field2D) -> Field2D:
    """v = -int_{-L}^{x1} d_y u dz, with v(-L, .) = 0."""
    dyu = d_y(u)
    dyu = dyu.with_values(dyu.values, f"d_y({u.label or 'u'})")
    v = integrate_x1_from_left(dyu, method="spectral")
    return Field2D(u.grid, -v.values, "v")


def tangential_derivative_v(u: Field2D) -> np.ndarray:
    """d_x1 of v = reconstruct_v(u), with the linear ramp of the tangential mean handled exactly."""
    g = np.gradient(u.values, u.grid.dy, axis=1, edge_order=2)
    return ramp_derivative(reconstruct_v(u).values, u.grid, -tangential_mean(g))


def _U1_from_v(v: Field2D, traces: TraceSet) -> Field2D:
    require_same_grid(v, traces.u1_bar)
    return Field2D(v.grid, v.values + traces.u1_bar.broadcast(), "U_p01")


def assemble_U1(u: Field2D, traces: TraceSet) -> Field2D:
    """U1 = v + u1_bar, the tangential layer velocity including the outer trace."""
    return _U1_from_v(reconstruct_v(u), traces)


def assemble_U3(u: Field2D, traces_lin: TraceField, traces: TraceSet) -> Field2D:
    """U3 = u + u3^{I,1}_bar + y d3u3_bar."""
    grid = require_same_grid(u, traces_lin, traces.d3u3_bar)
    y = grid.y_nodes[None, :]
    values = u.values + traces_lin.broadcast() + y * traces.d3u3_bar.values[:, None]
    return Field2D(grid, values, "U_p13")


def tangential_derivative_U1(u: Field2D, traces: TraceSet) -> Field2D:
    return Field2D(u.grid, tangential_derivative_v(u) + traces.d1u1_bar.broadcast(), "d1U_p01")


def fluctuation_divergence(u: Field2D) -> Field2D:
    """d_x1 u^{B,0}_1 + d_y u^{B,1}_3; zero up to the Nyquist content of d_y u."""
    dyu = np.gradient(u.values, u.grid.dy, axis=1, edge_order=2)
    return Field2D(u.grid, tangential_derivative_v(u) + dyu, "div_B")


def coupling_divergence(bl: BLState, traces: TraceSet) -> Field2D:
    """d_x1 U1 + d_y U3; reduces to d1u1_bar + d3u3_bar when the layer is consistent."""
    d1U1 = tangential_derivative_U1(bl.u, traces).values
    dyU3 = np.gradient(bl.U3.values, bl.grid.dy, axis=1, edge_order=2)
    return Field2D(bl.grid, d1U1 + dyU3, "div_p")


def wall_velocity_residual(U1: Field2D, ell: float = 1.0) -> float:
    """Weighted norm of U1 on the wall row."""
    return weighted_l2_trace(U1.row(0), ell)


def neumann_mismatch(traces: TraceSet, ell: float = 1.0) -> float:
    """Distance between the two wall data d1u1_bar and -d3u3_bar."""
    diff = traces.d1u1_bar.values + traces.d3u3_bar.values
    return weighted_l2_trace(TraceField(traces.grid, diff), ell)


# ============================================================================
# Layer time stepping
# ============================================================================


def _layer_matrix(grid: Grid, dt: float) -> np.ndarray:
    """Banded (l=1, u=2) Crank-Nicolson matrix with the one-sided Neumann wall row."""
    n = grid.n_y
    r = 0.5 * dt / grid.dy**2
    ab = np.zeros((4, n))
    ab[2, 0] = -3.0
    ab[1, 1] = 4.0
    ab[0, 2] = -1.0
    ab[3, : n - 2] = -r
    ab[2, 1 : n - 1] = 1.0 + 2.0 * r
    ab[1, 2:n] = -r
    ab[2, n - 1] = 1.0
    return ab


def layer_dt_limit(
    u: Field2D,
    v: np.ndarray,
    traces: TraceSet,
    eps1: float,
    nonlinear: bool = True,
    cfl: float = CFL_NUMBER,
) -> float:
    """Admissible step of the explicit part: advection plus tangential viscosity."""
    grid = u.grid
    y = grid.y_nodes[None, :]
    along = np.abs(traces.u1_bar.values[:, None] + (v if nonlinear else 0.0))
    normal = np.abs(traces.d3u3_bar.values[:, None] * y)
    if nonlinear:
        normal = normal + np.abs(u.values - u.values[:, :1])
    rate = float(np.max(along)) / grid.dx1 + float(np.max(normal)) / grid.dy
    limit = float("inf") if rate == 0.0 else cfl / rate
    if eps1 > 0:
        limit = min(limit, 1.0 / (eps1 * float(grid.wavenumbers[-1]) ** 2))
    return limit


def _explicit_terms(
    u: np.ndarray,
    v: np.ndarray,
    traces: TraceSet,
    eps1: float,
    grid: Grid,
    nonlinear: bool,
) -> np.ndarray:
    y = grid.y_nodes[None, :]
    d3 = traces.d3u3_bar.values[:, None]
    d1u = spectral_derivative(u, grid, 1)
    dyu = np.gradient(u, grid.dy, axis=1, edge_order=2)
    rhs = (
        eps1 * spectral_derivative(u, grid, 2)
        - d3 * y * dyu
        - traces.u1_bar.values[:, None] * d1u
        - d3 * u
        - y * traces.d1d3u3_bar.values[:, None] * v
    )
    if nonlinear:
        rhs -= v * d1u + (u - u[:, :1]) * dyu + d1u[:, :1] * v
    return rhs


def step_bl(
    u: Field2D,
    traces: TraceSet,
    reg: RegularizationParams,
    dt: float,
    *,
    next_traces: TraceSet | None = None,
    nonlinear: bool = True,
    source: Source | None = None,
    cfl: float = CFL_NUMBER,
    step: int | None = None,
) -> Field2D:
    """Advance the regularized layer equation by one IMEX step.

    Wall-normal diffusion is Crank-Nicolson; everything else is explicit.
    The wall row closes d_y u = d1u1_bar with the one-sided second-order
    stencil, so the wall derivative of the result matches the datum exactly.

    Args:
        u: current u^{B,1}_3.
        traces: outer traces at the current time.
        reg: regularization, only ``eps1`` is used.
        dt: time increment.
        next_traces: traces at t + dt; the Neumann datum is read from them when given.
        nonlinear: False drops the three quadratic terms.
        source: optional forcing f(x1, y, t) added to the explicit part.
        cfl: Courant number of the explicit advection.
        step: step index reported when the update is not finite.

    Returns:
        Field2D: u at t + dt.
    """
    grid = require_same_grid(u, traces.u1_bar)
    v = reconstruct_v(u).values
    check_cfl(dt, layer_dt_limit(u, v, traces, reg.eps1, nonlinear, cfl), "step_bl")

    rhs = _explicit_terms(u.values, v, traces, reg.eps1, grid, nonlinear)
    if source is not None:
        x1, y = grid.mesh()
        rhs = rhs + source(x1, y, traces.t)

    r = 0.5 * dt / grid.dy**2
    q = u.values
    b = np.empty_like(q)
    b[:, 1:-1] = q[:, 1:-1] + r * (q[:, 2:] - 2.0 * q[:, 1:-1] + q[:, :-2]) + dt * rhs[:, 1:-1]
    neumann = (next_traces or traces).d1u1_bar.values
    b[:, 0] = 2.0 * grid.dy * neumann
    b[:, -1] = 0.0
    out = solve_banded((1, 2), _layer_matrix(grid, dt), b.T).T
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("step_bl", step)
    return u.with_values(out)


def wall_neumann_residual(u: Field2D, traces: TraceSet) -> float:
    """max |d_y u(x1, 0) - d1u1_bar|."""
    return float(np.max(np.abs(wall_derivative(u.values, u.grid.dy) - traces.d1u1_bar.values)))


# ============================================================================
# Pressure and the second layer problem
# ============================================================================


def recover_pressure_gradient(
    U1_hist: tuple[Field2D, Field2D],
    U3: Field2D,
    traces: TraceSet,
    dt: float,
    d1U1: Field2D | None = None,
) -> Field2D:
    """d_x1 p^{B,0} = -d_t U1 + d_y^2 U1 - U1 d_x1 U1 - U3 d_y U1 - d1p0_bar.

    ``d1U1`` overrides the spectral tangential derivative of U1; pass
    ``tangential_derivative_U1`` when U1 carries a non-periodic ramp.
    """
    if dt == 0:
        raise ParameterError("recover_pressure_gradient needs dt != 0")
    U1_prev, U1 = U1_hist
    grid = require_same_grid(U1_prev, U1, U3, traces.d1p0_bar)
    dU1 = spectral_derivative(U1.values, grid, 1) if d1U1 is None else d1U1.values
    values = (
        -(U1.values - U1_prev.values) / dt
        + d_y(U1, 2).values
        - U1.values * dU1
        - U3.values * d_y(U1).values
        - traces.d1p0_bar.broadcast()
    )
    return Field2D(grid, values, "d1p_B0")


def substituted_u2(u2B: Field2D, u2_bar: TraceField, a0: float) -> Field2D:
    """w = u2B + exp(-2 a0 y^2) u2_bar, zero on the wall when u2B = -u2_bar there."""
    g = np.exp(-2.0 * a0 * u2B.grid.y_nodes**2)[None, :]
    return u2B.with_values(u2B.values + g * u2_bar.values[:, None], "w_B02")


def u2_source(
    U1: Field2D, U3: Field2D, traces: TraceSet, a0: float
) -> np.ndarray:
    """Source R of the substituted u2 equation (uses the wall transport law of u2_bar)."""
    grid = U1.grid
    y = grid.y_nodes[None, :]
    g = np.exp(-2.0 * a0 * y**2)
    u2 = traces.u2_bar.values[:, None]
    u1B = U1.values - traces.u1_bar.values[:, None]
    return (
        (16.0 * a0**2 * y**2 - 4.0 * a0) * g * u2
        + 4.0 * a0 * U3.values * y * g * u2
        + (1.0 - g) * traces.d1u2_bar.values[:, None] * u1B
    )


def _upwind_advection(q: np.ndarray, A: np.ndarray, B: np.ndarray, grid: Grid) -> np.ndarray:
    back1 = (q - np.roll(q, 1, axis=0)) / grid.dx1
    fwd1 = (np.roll(q, -1, axis=0) - q) / grid.dx1
    out = np.where(A > 0, A * back1, A * fwd1)
    inner = B[:, 1:-1]
    back3 = (q[:, 1:-1] - q[:, :-2]) / grid.dy
    fwd3 = (q[:, 2:] - q[:, 1:-1]) / grid.dy
    out[:, 1:-1] += np.where(inner > 0, inner * back3, inner * fwd3)
    return out


def step_u2_bl(
    u2B: Field2D,
    U1: Field2D,
    U3: Field2D,
    traces: TraceSet,
    a0: float,
    dt: float,
    *,
    next_traces: TraceSet | None = None,
    cfl: float = 1.0,
) -> Field2D:
    """Advance u^{B,0}_2 by dt through its substituted variable.

    Upwind explicit advection by (U1, U3) and the source R, then backward-Euler
    wall-normal diffusion with w = 0 on both ends. Without the source the
    update is monotone. Back-substitution uses u2_bar at the new time, so
    u2B = -u2_bar holds on the wall after every step.
    """
    grid = require_same_grid(u2B, U1, U3, traces.u2_bar)
    rate = U1.max_abs() / grid.dx1 + U3.max_abs() / grid.dy
    dt_max = float("inf") if rate == 0.0 else cfl / rate
    if dt <= 0.0 or dt > dt_max * (1.0 + 1e-12):
        raise CFLViolationError(dt, dt_max, "step_u2_bl")

    w = np.array(substituted_u2(u2B, traces.u2_bar, a0).values)
    w[:, 0] = 0.0
    w[:, -1] = 0.0
    explicit = w - dt * (
        _upwind_advection(w, U1.values, U3.values, grid) + u2_source(U1, U3, traces, a0)
    )

    m = grid.n_y - 2
    r = dt / grid.dy**2
    ab = np.empty((3, m))
    ab[0, :] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :] = -r
    w_new = np.zeros_like(w)
    w_new[:, 1:-1] = solve_banded((1, 1), ab, explicit[:, 1:-1].T).T
    if not np.all(np.isfinite(w_new)):
        raise NonFiniteError("step_u2_bl")

    if next_traces is not None:
        u2_bar_new = next_traces.u2_bar
    else:
        u2_bar_new = trace_transport_u2(traces.u2_bar, traces.u1_bar, dt)
    g = np.exp(-2.0 * a0 * grid.y_nodes**2)[None, :]
    return u2B.with_values(w_new - g * u2_bar_new.values[:, None])


# ============================================================================
# Regularization sweep
# ============================================================================


@dataclass(frozen=True, eq=False)
class SweepReport:
    """Successive X-norm differences of final layer states across an eps1 schedule."""

    eps1: tuple[float, ...]
    differences: tuple[float, ...]
    failures: dict[float, str] = field(default_factory=dict)
    finals: dict[float, Field2D] = field(default_factory=dict, repr=False)

    @property
    def monotone(self) -> bool:
        d = np.asarray(self.differences)
        return bool(np.all(np.isfinite(d)) and np.all(np.diff(d) < 0))

    def rows(self) -> list[dict]:
        return [
            {"eps1_k": a, "eps1_k1": b, "x_diff": d}
            for a, b, d in zip(self.eps1, self.eps1[1:], self.differences)
        ]


def run_regularized(
    u0: Field2D,
    trace_history: Sequence[TraceSet],
    eps1: float,
    dt: float,
    nonlinear: bool = True,
) -> Field2D:
    """Integrate the regularized layer over a precomputed trace history."""
    reg = RegularizationParams(eps1)
    u = u0
    for n in range(len(trace_history) - 1):
        u = step_bl(
            u,
            trace_history[n],
            reg,
            dt,
            next_traces=trace_history[n + 1],
            nonlinear=nonlinear,
            step=n,
        )
    return u


def regularization_sweep(
    u0: Field2D,
    trace_history: Sequence[TraceSet],
    reg: RegularizationParams,
    dt: float,
    params: NormParams,
    nonlinear: bool = True,
) -> SweepReport:
    """Solve the regularized layer for every eps1 of the schedule and compare neighbours.

    The outer problem does not depend on eps1, so one trace history serves
    every run. A failing run is recorded and the sweep continues; differences
    touching it are NaN.
    """
    if len(reg.schedule) < 3:
        raise ParameterError(f"sweep needs at least 3 eps1 values, got {len(reg.schedule)}")
    finals: dict[float, Field2D] = {}
    failures: dict[float, str] = {}
    for eps1 in reg.schedule:
        try:
            finals[eps1] = run_regularized(u0, trace_history, eps1, dt, nonlinear)
        except RotblError as exc:
            logger.error(f"eps1={eps1:.1e} failed: {exc.code}: {exc}")
            failures[eps1] = f"{exc.code}: {exc}"

    diffs = []
    for a, b in zip(reg.schedule, reg.schedule[1:]):
        if a in finals and b in finals:
            diffs.append(x_norm(finals[a] - finals[b], params).X)
        else:
            diffs.append(float("nan"))
    report = SweepReport(reg.schedule, tuple(diffs), failures, finals)
    if not report.monotone:
        logger.warning(
            f"regularization differences are not strictly decreasing: {report.differences}"
        )
    return report
