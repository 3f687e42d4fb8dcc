"""
Two-term composite approximation and its verification.

The composite velocity on the (x1, x3) half-plane is

    u = u^{I,0} + u^{B,0}(x3/sqrt(eps)) + sqrt(eps) (u^{I,1} + u^{B,1}(x3/sqrt(eps)))

with u^{B,0} = (U1 - u1_bar, u2B, 0) and u^{B,1} = (0, 0, u). The pressure
collects the orders eps^-1, eps^-1/2 and eps^0. Layer fields are mapped to
x3 by cubic interpolation in y and extended by zero above y = Y.

``order_identity_check`` verifies the order-by-order balances on one
ExpansionState; ``nsc_residual`` measures how well two consecutive
composites satisfy the rotating Navier-Stokes system with nu = eps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import floor, sqrt

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import CubicSpline

from .boundary_layer import BLState, tangential_derivative_v
from .core_fields import (
    DEFAULT_ELL,
    Field2D,
    Grid,
    TraceField,
    integrate_x1_from_left,
    l2_norm,
    ramp_derivative,
    second_difference,
    spectral_derivative,
    tangential_mean,
)
from .errors import ParameterError, ResolutionError, StateMismatchError
from .outer_euler import OuterState, TraceSet, reconstruct_p_minus2
from .outer_euler_lin import LinOuterState, reconstruct_p_minus1

logger = logging.getLogger(__name__)

# x3 spacing must stay below this multiple of the layer spacing sqrt(eps) * dy
RESOLUTION_FACTOR = 5.0

# near-wall measurement window is x3 <= WINDOW_FACTOR * sqrt(eps)
WINDOW_FACTOR = 10.0

DEFAULT_REL_TOL = 1e-6

COMPONENTS = ("x1", "x2", "x3", "div")


# ============================================================================
# Expansion state
# ============================================================================


@dataclass(frozen=True, eq=False)
class ExpansionState:
    """Every retained term of the expansion at one time.

    ``traces`` are the outer wall traces on the layer grid. u^{B,0}_3 is
    identically zero and has no field here.
    """

    outer: OuterState
    lin_outer: LinOuterState
    bl: BLState
    traces: TraceSet
    p_Im2: Field2D
    p_Im1: Field2D
    P_pm1: Field2D
    t: float

    @classmethod
    def build(
        cls,
        outer: OuterState,
        lin_outer: LinOuterState,
        bl: BLState,
        traces: TraceSet,
    ) -> ExpansionState:
        """Reconstruct the low-order pressures and check that all parts agree in time and x1."""
        times = (outer.t, lin_outer.t, bl.t, traces.t)
        if max(times) - min(times) > 1e-12 * max(1.0, abs(outer.t)):
            raise StateMismatchError(f"expansion parts at different times: {times}")
        layer_traces = traces.on_grid(bl.grid)
        p_Im2 = reconstruct_p_minus2(outer)
        p_Im1 = reconstruct_p_minus1(lin_outer)
        P_pm1 = layer_pressure_minus1(bl, p_Im1.row(0).values)
        return cls(outer, lin_outer, bl, layer_traces, p_Im2, p_Im1, P_pm1, outer.t)

    @property
    def lin_trace(self) -> TraceField:
        """u3^{I,1} on the wall, on the layer grid."""
        return TraceField(self.bl.grid, self.lin_outer.u3.values[:, 0], "u3_I1_bar")


def layer_pressure_minus1(bl: BLState, p_Im1_bar: np.ndarray) -> Field2D:
    """P^{p,-1} = p^{I,-1}_bar + int_0^y U1 - int_0^Y v, so that d_y P = U1 and P -> p_bar + y u1_bar."""
    grid = bl.grid
    column = cumulative_trapezoid(bl.U1.values, dx=grid.dy, axis=1, initial=0.0)
    far = trapezoid(bl.v.values, dx=grid.dy, axis=1)
    return Field2D(grid, p_Im1_bar[:, None] + column - far[:, None], "P_pm1")


def _pressure_minus1_slope(e: ExpansionState) -> np.ndarray:
    """Tangential mean slope of P^{p,-1} per y, from the means of its integrands."""
    grid = e.bl.grid
    wall = -float(np.mean(e.lin_trace.values))
    dyu = np.gradient(e.bl.u.values, grid.dy, axis=1, edge_order=2)
    m = -tangential_mean(dyu)
    return wall + cumulative_trapezoid(m, dx=grid.dy, initial=0.0) - trapezoid(m, dx=grid.dy)


# ============================================================================
# Composite grid and interpolation
# ============================================================================


def required_n_x3(H: float, layer_grid: Grid, eps: float) -> int:
    return int(floor(H / (RESOLUTION_FACTOR * sqrt(eps) * layer_grid.dy))) + 2


def composite_grid(outer_grid: Grid, layer_grid: Grid, eps: float) -> Grid:
    """Grid on [0, H] fine enough to carry the layer at this eps."""
    n = max(outer_grid.n_y, required_n_x3(outer_grid.Y, layer_grid, eps))
    return outer_grid.with_sizes(n_y=n)


def check_resolution(grid: Grid, layer_grid: Grid, eps: float) -> None:
    limit = RESOLUTION_FACTOR * sqrt(eps) * layer_grid.dy
    if grid.dy >= limit:
        raise ResolutionError(
            f"x3 spacing {grid.dy:.3e} does not resolve the layer at eps={eps:.1e} "
            f"(needs < {limit:.3e})",
            suggested={"n_x3": required_n_x3(grid.Y, layer_grid, eps)},
        )


@dataclass(frozen=True)
class _Lift:
    grid: Grid
    outer_grid: Grid
    layer_grid: Grid
    eps: float

    def outer(self, values: np.ndarray) -> np.ndarray:
        spline = CubicSpline(self.outer_grid.y_nodes, values, axis=1)
        return spline(self.grid.y_nodes)

    def layer(self, values: np.ndarray) -> np.ndarray:
        y = self.grid.y_nodes / sqrt(self.eps)
        inside = y <= self.layer_grid.Y
        out = np.zeros((self.grid.n_x1, self.grid.n_y))
        spline = CubicSpline(self.layer_grid.y_nodes, values, axis=1)
        out[:, inside] = spline(y[inside])
        return out


@dataclass(frozen=True)
class _Derivatives:
    """A composite scalar and its x1 and x3 derivatives on the composite grid."""

    value: np.ndarray
    d1: np.ndarray
    d3: np.ndarray
    d11: np.ndarray
    d33: np.ndarray

    def __add__(self, other: _Derivatives) -> _Derivatives:
        return _Derivatives(*(a + b for a, b in zip(self._parts(), other._parts())))

    def scaled(self, c: float) -> _Derivatives:
        return _Derivatives(*(c * a for a in self._parts()))

    def _parts(self):
        return (self.value, self.d1, self.d3, self.d11, self.d33)


def _outer_part(values: np.ndarray, lift: _Lift) -> _Derivatives:
    g = lift.outer_grid
    d1 = spectral_derivative(values, g, 1)
    return _Derivatives(
        lift.outer(values),
        lift.outer(d1),
        lift.outer(np.gradient(values, g.dy, axis=1, edge_order=2)),
        lift.outer(spectral_derivative(values, g, 2)),
        lift.outer(second_difference(values, g.dy, axis=1)),
    )


def _layer_part(values: np.ndarray, lift: _Lift, d1: np.ndarray | None = None) -> _Derivatives:
    g = lift.layer_grid
    s = sqrt(lift.eps)
    d1 = spectral_derivative(values, g, 1) if d1 is None else d1
    return _Derivatives(
        lift.layer(values),
        lift.layer(d1),
        lift.layer(np.gradient(values, g.dy, axis=1, edge_order=2)) / s,
        lift.layer(spectral_derivative(d1, g, 1)),
        lift.layer(second_difference(values, g.dy, axis=1)) / lift.eps,
    )


# ============================================================================
# Composition
# ============================================================================


@dataclass(frozen=True, eq=False)
class Composite:
    """Composite velocity with its derivatives, and the composite pressure.

    ``p_ramp`` is the x1 slope per x3 node of the linear part of ``p``; the
    rest of ``p`` is periodic in x1.
    """

    grid: Grid
    eps: float
    t: float
    u: tuple[_Derivatives, _Derivatives, _Derivatives]
    p: np.ndarray
    p_ramp: np.ndarray

    def velocity(self) -> tuple[Field2D, Field2D, Field2D]:
        return tuple(Field2D(self.grid, c.value, f"u{k}") for c, k in zip(self.u, (1, 2, 3)))

    def pressure(self) -> Field2D:
        return Field2D(self.grid, self.p, "p")

    def pressure_gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """(d_x1 p, d_x3 p) of the composed pressure samples."""
        d1p = ramp_derivative(self.p, self.grid, self.p_ramp)
        d3p = np.gradient(self.p, self.grid.dy, axis=1, edge_order=2)
        return d1p, d3p


def _pressure_ramp(e: ExpansionState, lift: _Lift) -> np.ndarray:
    """x1 slope of the composed pressure per x3 node.

    Each potential is integrated along x1 with the spectral antiderivative,
    so its ramp is the tangential mean of the gradient it integrates.
    """
    eps, s = lift.eps, sqrt(lift.eps)
    interior = -lift.outer(e.outer.u3.values) / eps - lift.outer(e.lin_outer.u3.values) / s
    # p^{B,-1} = P^{p,-1} - p^{I,-1}_bar - y u1_bar loses the wall ramp of p^{I,-1}
    layer_B1 = _pressure_minus1_slope(e) + float(np.mean(e.lin_trace.values))
    layer = lift.layer(np.broadcast_to(layer_B1, e.bl.grid.shape))[0] / s
    return tangential_mean(interior + lift.layer(e.bl.d1pB0.values)) + layer


def compose(e: ExpansionState, eps: float, grid: Grid | None = None) -> Composite:
    """Evaluate velocity, pressure and the velocity derivatives of the expansion on a composite grid.

    Raises:
        ResolutionError: the x3 spacing of ``grid`` does not resolve the layer.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    outer_grid, layer_grid = e.outer.grid, e.bl.grid
    grid = composite_grid(outer_grid, layer_grid, eps) if grid is None else grid
    if (grid.n_x1, grid.L, grid.Y) != (outer_grid.n_x1, outer_grid.L, outer_grid.Y):
        raise StateMismatchError("composite grid must share x1 nodes and height with the outer grid")
    check_resolution(grid, layer_grid, eps)
    lift = _Lift(grid, outer_grid, layer_grid, eps)
    s = sqrt(eps)
    o, lo, bl = e.outer, e.lin_outer, e.bl

    u1 = (
        _outer_part(o.u1.values, lift)
        + _outer_part(lo.u1.values, lift).scaled(s)
        + _layer_part(bl.v.values, lift, d1=tangential_derivative_v(bl.u))
    )
    u2 = (
        _outer_part(o.u2.values, lift)
        + _outer_part(lo.u2.values, lift).scaled(s)
        + _layer_part(bl.u2B.values, lift)
    )
    u3 = (
        _outer_part(o.u3.values, lift)
        + _outer_part(lo.u3.values, lift).scaled(s)
        + _layer_part(bl.u.values, lift).scaled(s)
    )

    # layer pressures: p^{B,-1} from P^{p,-1}, p^{B,0} from its recovered x1 derivative
    y = layer_grid.y_nodes[None, :]
    p_B1 = e.P_pm1.values - e.p_Im1.values[:, :1] - y * e.traces.u1_bar.values[:, None]
    p_B0 = integrate_x1_from_left(bl.d1pB0, method="spectral").values

    p = (
        lift.outer(e.p_Im2.values) / eps
        + lift.outer(e.p_Im1.values) / s
        + lift.outer(o.p.values)
        + s * lift.outer(lo.p.values)
        + lift.layer(p_B1) / s
        + lift.layer(p_B0)
    )
    return Composite(grid, eps, e.t, (u1, u2, u3), p - p[0, 0], _pressure_ramp(e, lift))


def compose_velocity(
    e: ExpansionState, eps: float, grid: Grid | None = None
) -> tuple[Field2D, Field2D, Field2D]:
    return compose(e, eps, grid).velocity()


def compose_pressure(e: ExpansionState, eps: float, grid: Grid | None = None) -> Field2D:
    """Composite pressure through order eps^0, zero at the corner (-L, 0)."""
    return compose(e, eps, grid).pressure()


# ============================================================================
# Residual of the rotating Navier-Stokes system
# ============================================================================


def _window_norm(values: np.ndarray, grid: Grid, mask: np.ndarray, ell: float) -> float:
    cols = np.flatnonzero(mask)
    if cols.size == 0:
        return 0.0
    weighted = (1.0 + grid.x1_nodes[:, None] ** 2) ** (ell / 2.0) * values[:, cols]
    along = grid.dx1 * np.sum(weighted**2, axis=0)
    if cols.size == 1:
        return float(np.sqrt(along[0] * grid.dy))
    return float(np.sqrt(trapezoid(along, dx=grid.dy)))


def nsc_residual(
    previous: Composite, current: Composite, ell: float = DEFAULT_ELL
) -> dict[tuple[str, str], float]:
    """Weighted L2 residual per component, near the wall and in the bulk.

    Evaluates d_t u + u.grad u - eps Lap u + e2 x u / eps + grad p and div u
    on ``current``, with d_t from the difference quotient of the two composites
    and grad p differentiated from the composed pressure.
    """
    if previous.eps != current.eps:
        raise StateMismatchError(f"composites at different eps: {previous.eps} vs {current.eps}")
    if previous.grid != current.grid:
        raise StateMismatchError("composites on different grids")
    dt = current.t - previous.t
    if dt <= 0:
        raise StateMismatchError(f"composites must be in time order, got dt={dt}")
    eps = current.eps
    u1, u2, u3 = current.u
    d1p, d3p = current.pressure_gradient()

    def momentum(k: int, coriolis: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
        c = current.u[k]
        return (
            (c.value - previous.u[k].value) / dt
            + u1.value * c.d1
            + u3.value * c.d3
            - eps * (c.d11 + c.d33)
            + coriolis / eps
            + grad_p
        )

    rows = {
        "x1": momentum(0, u3.value, d1p),
        "x2": momentum(1, np.zeros_like(u2.value), np.zeros_like(u2.value)),
        "x3": momentum(2, -u1.value, d3p),
        "div": u1.d1 + u3.d3,
    }
    near = current.grid.y_nodes <= WINDOW_FACTOR * sqrt(eps)
    out = {}
    for name, values in rows.items():
        out[(name, "wall")] = _window_norm(values, current.grid, near, ell)
        out[(name, "bulk")] = _window_norm(values, current.grid, ~near, ell)
    return out


@dataclass(frozen=True)
class ResidualReport:
    """Composite residuals across an eps sweep and the fitted log-log slope."""

    eps: tuple[float, ...]
    residual_norms: dict[float, dict[tuple[str, str], float]]
    fitted_slope: float

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ParameterError(f"eps must be strictly decreasing, got {self.eps}")

    def totals(self) -> np.ndarray:
        return np.array([_total(self.residual_norms[e]) for e in self.eps])

    def rows(self) -> list[dict]:
        return [
            {"eps": e, "component": comp, "window": window, "residual": value}
            for e in self.eps
            for (comp, window), value in self.residual_norms[e].items()
        ]

    def summary(self) -> str:
        lines = ["composite residual", f"  fitted slope : {self.fitted_slope:.4f}"]
        for e, total in zip(self.eps, self.totals()):
            lines.append(f"  eps={e:.1e} total={total:.6e}")
        return "\n".join(lines) + "\n"


def _total(entry: dict[tuple[str, str], float]) -> float:
    return float(np.sqrt(sum(v**2 for v in entry.values())))


def fit_residual_slope(
    residuals: dict[float, dict[tuple[str, str], float]],
) -> ResidualReport:
    """Fit log(total residual) against log(eps) over the sweep."""
    eps = tuple(sorted(residuals, reverse=True))
    totals = np.array([_total(residuals[e]) for e in eps])
    if len(eps) >= 2 and np.all(totals > 0):
        slope = float(np.polyfit(np.log(eps), np.log(totals), 1)[0])
    else:
        slope = float("nan")
    return ResidualReport(eps, dict(residuals), slope)


# ============================================================================
# Order-by-order identities
# ============================================================================


@dataclass(frozen=True)
class IdentityRow:
    name: str
    residual: float
    scale: float
    tolerance: float

    @property
    def relative(self) -> float:
        if self.scale == 0.0:
            return 0.0 if self.residual == 0.0 else float("inf")
        return self.residual / self.scale

    @property
    def passed(self) -> bool:
        return self.relative <= self.tolerance


@dataclass(frozen=True)
class IdentityReport:
    rows: tuple[IdentityRow, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def row(self, name: str) -> IdentityRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"{'identity':<14} {'residual':>12} {'relative':>12} {'tolerance':>12}  status"]
        for r in self.rows:
            status = "pass" if r.passed else "FAIL"
            lines.append(
                f"{r.name:<14} {r.residual:12.4e} {r.relative:12.4e} {r.tolerance:12.4e}  {status}"
            )
        return "\n".join(lines) + "\n"


def _norm(grid: Grid, values: np.ndarray) -> float:
    return l2_norm(Field2D(grid, values))


def _trace_norm(grid: Grid, values: np.ndarray) -> float:
    return float(np.sqrt(grid.dx1 * np.sum(np.asarray(values) ** 2)))


def order_identity_check(
    e: ExpansionState, rel_tol: float = DEFAULT_REL_TOL, c: float = 1.0
) -> IdentityReport:
    """Residuals of the order-by-order identities, relative to the terms that balance.

    Rows that pair a wall-normal integral with a wall-normal difference are
    only exact to truncation order and use ``rel_tol + c * h^2``. Every field is
    a function of (x1, x3) only, so the x2 balance d_x2 P^{p,-1} = 0 holds
    identically and has no row.
    """
    og, lg = e.outer.grid, e.bl.grid
    o, bl, tr = e.outer, e.bl, e.traces
    rows = []

    # geostrophic balance of the interior: grad p^{I,-2} = (-u3, u1)
    d1p = spectral_derivative(e.p_Im2.values, og, 1)
    rows.append(
        IdentityRow(
            "p_Im2_x1",
            _norm(og, d1p + o.u3.values),
            _norm(og, d1p) + _norm(og, o.u3.values),
            rel_tol,
        )
    )
    d3p = np.gradient(e.p_Im2.values, og.dy, axis=1, edge_order=2)
    rows.append(
        IdentityRow(
            "p_Im2_x3",
            _norm(og, d3p - o.u1.values),
            _norm(og, d3p) + _norm(og, o.u1.values),
            rel_tol + c * og.dy**2,
        )
    )

    # d_y P^{p,-1} = U1, paired as forward difference against the trapezoid average
    P = e.P_pm1.values
    fwd = np.diff(P, axis=1) / lg.dy
    avg = 0.5 * (bl.U1.values[:, 1:] + bl.U1.values[:, :-1])
    rows.append(
        IdentityRow(
            "P_pm1_y",
            _norm_stag(lg, fwd - avg),
            _norm_stag(lg, fwd) + _norm_stag(lg, avg),
            rel_tol,
        )
    )

    # U3 + d_x1 P^{p,-1} = 0
    d1P = ramp_derivative(P, lg, _pressure_minus1_slope(e))
    rows.append(
        IdentityRow(
            "P_pm1_x1",
            _norm(lg, bl.U3.values + d1P),
            _norm(lg, bl.U3.values) + _norm(lg, d1P),
            rel_tol + c * lg.dy**2,
        )
    )

    # incompressibility of the layer fluctuation
    d1v = tangential_derivative_v(bl.u)
    dyu = np.gradient(bl.u.values, lg.dy, axis=1, edge_order=2)
    rows.append(
        IdentityRow("div_B", _norm(lg, d1v + dyu), _norm(lg, d1v) + _norm(lg, dyu), rel_tol)
    )

    # wall-normal pressure gradient of the interior vanishes on the wall
    d3p0 = tr.d3p0_bar.values
    u1b = tr.u1_bar.values
    scale = _trace_norm(lg, u1b * spectral_derivative(o.u3.values[:, 0], og, 1)) + _trace_norm(
        lg, o.u3.values[:, 0] * tr.d3u3_bar.values
    )
    rows.append(IdentityRow("d3p0_bar", _trace_norm(lg, d3p0), scale, rel_tol))

    # wall conditions of the layer
    rows.append(
        IdentityRow(
            "U1_wall",
            _trace_norm(lg, bl.U1.values[:, 0]),
            _trace_norm(lg, u1b),
            rel_tol,
        )
    )
    lin = e.lin_trace.values
    rows.append(
        IdentityRow(
            "U3_wall",
            _trace_norm(lg, bl.U3.values[:, 0]),
            _trace_norm(lg, bl.u.values[:, 0]) + _trace_norm(lg, lin),
            rel_tol,
        )
    )
    rows.append(
        IdentityRow(
            "u2B_wall",
            _trace_norm(lg, bl.u2B.values[:, 0] + tr.u2_bar.values),
            _trace_norm(lg, bl.u2B.values[:, 0]) + _trace_norm(lg, tr.u2_bar.values),
            rel_tol,
        )
    )
    report = IdentityReport(tuple(rows))
    for r in report.rows:
        if not r.passed:
            logger.warning(f"identity {r.name} fails: relative residual {r.relative:.3e}")
    return report


def _norm_stag(grid: Grid, values: np.ndarray) -> float:
    """L2 norm of values living on the n_y - 1 midpoints in y."""
    along = grid.dx1 * np.sum(values**2, axis=0)
    return float(np.sqrt(grid.dy * np.sum(along)))
