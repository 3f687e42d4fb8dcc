"""
Weighted analytic norms of layer fields and the analyticity-radius bookkeeping.

Every norm here is a truncated, factorially weighted sum of

    n(m, j) = |<x1>^ell exp(a y^2) d_x1^m d_y^j u|_L2

over derivative orders m <= m_max. The weights are

    c_m = 1                      for m <= 2
    c_m = rho^(m-1) / (m-3)!     for m >= 3

and the three norms differ in how they group the j terms:

    X^2 = sum_m sum_{j=0,1} c_m^2 n(m, j)^2
    Y^2 = sum_m (sum_{j=0,1} s_m c_m n(m, j))^2,  s_m = sqrt((m-1)/rho) for m >= 3, else 1
    Z^2 = sum_m (sum_{j=1,2} c_m n(m, j))^2

The radius rho(t) shrinks at the rate |u|_Z while the Gaussian weight
coefficient follows the linear schedule a(t) = a0 - (2 a0^2 + C0) t.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from math import factorial
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .core_fields import (
    DEFAULT_ELL,
    Field2D,
    Grid,
    WeightParams,
    l2_norm,
    second_difference,
    spectral_derivative,
    weighted_l2,
)
from .errors import ParameterError, ResolutionWarning

logger = logging.getLogger(__name__)

DEFAULT_M_MAX = 8

# Relative size of the upper quarter of the x1 spectrum that counts as resolved
SPECTRAL_TAIL_TOLERANCE = 1e-8


# ============================================================================
# Parameters and reports
# ============================================================================


@dataclass(frozen=True)
class NormParams:
    """Radius, weight and truncation of the X, Y, Z norms."""

    rho: float
    a: float = 0.25
    ell: float = DEFAULT_ELL
    m_max: int = DEFAULT_M_MAX

    def __post_init__(self):
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if self.m_max < 3:
            raise ParameterError(f"m_max must be at least 3, got {self.m_max}")
        # validates ell and a
        self.weight()

    def weight(self) -> WeightParams:
        return WeightParams(ell=self.ell, a=self.a)

    def coefficient(self, m: int) -> float:
        if m <= 2:
            return 1.0
        return self.rho ** (m - 1) / factorial(m - 3)


@dataclass(frozen=True)
class NormReport:
    """Norm values of one field; ``per_m[(m, j)]`` holds c_m^2 n(m, j)^2 of X."""

    X: float | None = None
    Y: float | None = None
    Z: float | None = None
    per_m: dict[tuple[int, int], float] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def as_row(self) -> dict[str, float | None]:
        return {"X": self.X, "Y": self.Y, "Z": self.Z}


def _check_spectral_tail(u: Field2D) -> str | None:
    coeffs = np.abs(np.fft.rfft(u.values, axis=0))
    peak = float(np.max(coeffs))
    if peak == 0.0:
        return None
    start = (3 * coeffs.shape[0]) // 4
    tail = float(np.max(coeffs[start:])) / peak
    if tail <= SPECTRAL_TAIL_TOLERANCE:
        return None
    message = (
        f"{u.label or 'field'}: x1 spectral tail {tail:.1e} above {SPECTRAL_TAIL_TOLERANCE:.0e}, "
        "high tangential derivatives are not resolved"
    )
    logger.warning(message)
    warnings.warn(message, ResolutionWarning, stacklevel=3)
    return message


def _y_derivative(values: np.ndarray, grid: Grid, j: int) -> np.ndarray:
    if j == 0:
        return values
    if j == 1:
        return np.gradient(values, grid.dy, axis=1, edge_order=2)
    return second_difference(values, grid.dy, axis=1)


def derivative_norms(u: Field2D, p: NormParams, js: Sequence[int]) -> dict[tuple[int, int], float]:
    """n(m, j) for m = 0..m_max and the requested wall-normal orders."""
    w = p.weight()
    out = {}
    for j in js:
        base = _y_derivative(u.values, u.grid, j)
        for m in range(p.m_max + 1):
            dm = base if m == 0 else spectral_derivative(base, u.grid, m)
            out[(m, j)] = weighted_l2(u.with_values(dm), w)
    return out


# ============================================================================
# X, Y, Z norms
# ============================================================================


def x_norm(u: Field2D, p: NormParams) -> NormReport:
    """|u|_X with its per-(m, j) contributions."""
    note = _check_spectral_tail(u)
    n = derivative_norms(u, p, (0, 1))
    per_m = {key: (p.coefficient(key[0]) * value) ** 2 for key, value in n.items()}
    return NormReport(
        X=float(np.sqrt(sum(per_m.values()))),
        per_m=per_m,
        warnings=(note,) if note else (),
    )


def _grouped_norm(n: dict[tuple[int, int], float], p: NormParams, js, extra) -> float:
    total = 0.0
    for m in range(p.m_max + 1):
        scale = p.coefficient(m) * extra(m)
        total += (scale * sum(n[(m, j)] for j in js)) ** 2
    return float(np.sqrt(total))


def _y_factor(p: NormParams):
    return lambda m: 1.0 if m <= 2 else np.sqrt((m - 1) / p.rho)


def y_norm(u: Field2D, p: NormParams) -> float:
    _check_spectral_tail(u)
    return _grouped_norm(derivative_norms(u, p, (0, 1)), p, (0, 1), _y_factor(p))


def z_norm(u: Field2D, p: NormParams) -> float:
    _check_spectral_tail(u)
    return _grouped_norm(derivative_norms(u, p, (1, 2)), p, (1, 2), lambda m: 1.0)


def norm_report(u: Field2D, p: NormParams) -> NormReport:
    """X, Y and Z of one field, sharing the derivative norms."""
    note = _check_spectral_tail(u)
    n = derivative_norms(u, p, (0, 1, 2))
    per_m = {(m, j): (p.coefficient(m) * n[(m, j)]) ** 2 for m in range(p.m_max + 1) for j in (0, 1)}
    return NormReport(
        X=float(np.sqrt(sum(per_m.values()))),
        Y=_grouped_norm(n, p, (0, 1), _y_factor(p)),
        Z=_grouped_norm(n, p, (1, 2), lambda m: 1.0),
        per_m=per_m,
        warnings=(note,) if note else (),
    )


def a_tau_estimate(
    f: Field2D, tau: float, ell: float = DEFAULT_ELL, alpha_max: int = 6
) -> tuple[float, tuple[int, int]]:
    """Truncated sup over |alpha| <= alpha_max of tau^|alpha|/|alpha|! |<z>^ell d^alpha f|.

    ``f`` lives on the half-plane grid, z = (x1, x3). Returns the value and the
    maximizing multi-index (alpha1, alpha3).
    """
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    _check_spectral_tail(f)
    grid = f.grid
    x1, x3 = grid.mesh()
    weight = (1.0 + x1**2 + x3**2) ** (ell / 2.0)
    best, best_alpha = 0.0, (0, 0)
    d3 = f.values
    for a3 in range(alpha_max + 1):
        if a3 > 0:
            d3 = np.gradient(d3, grid.dy, axis=1, edge_order=2)
        for a1 in range(alpha_max - a3 + 1):
            d = d3 if a1 == 0 else spectral_derivative(d3, grid, a1)
            order = a1 + a3
            value = tau**order / factorial(order) * l2_norm(f.with_values(weight * d))
            if value > best:
                best, best_alpha = value, (a1, a3)
    return float(best), best_alpha


def phi_stack(u: Field2D, p: NormParams) -> tuple[list[Field2D], list[Field2D]]:
    """Weighted tangential derivatives of d_y u (phi_m) and of u (psi_m), m = 0..m_max."""
    grid = u.grid
    x1, y = grid.mesh()
    w = (1.0 + x1**2) ** (p.ell / 2.0) * np.exp(p.a * y**2)
    p.weight().check_overflow(grid.Y)
    omega = np.gradient(u.values, grid.dy, axis=1, edge_order=2)
    phis, psis = [], []
    for m in range(p.m_max + 1):
        dw = omega if m == 0 else spectral_derivative(omega, grid, m)
        du = u.values if m == 0 else spectral_derivative(u.values, grid, m)
        phis.append(Field2D(grid, w * dw, f"phi_{m}"))
        psis.append(Field2D(grid, w * du, f"psi_{m}"))
    return phis, psis


# ============================================================================
# Radius and weight schedule
# ============================================================================


@dataclass(frozen=True)
class RadiusTracker:
    """History of (t, rho, a) driven by rho' = -|u|_Z."""

    rho_t: tuple[float, ...]
    a_t: tuple[float, ...]
    times: tuple[float, ...]
    a0: float
    C0: float = 1.0
    rho_floor: float = 1e-3
    z_t: tuple[float, ...] = ()
    aborted: bool = False

    @classmethod
    def start(
        cls,
        rho0: float,
        tau: float,
        a0: float,
        C0: float = 1.0,
        rho_floor: float = 1e-3,
        z0: float | None = None,
    ) -> RadiusTracker:
        """Initial radius min(rho0/2, tau/3); ``z0`` is |u|_Z at t = 0 when known."""
        rho = min(rho0 / 2.0, tau / 3.0)
        if not rho > rho_floor:
            raise ParameterError(f"initial radius {rho:.3e} is not above rho_floor={rho_floor:.1e}")
        return cls(
            rho_t=(rho,),
            a_t=(a0,),
            times=(0.0,),
            a0=a0,
            C0=C0,
            rho_floor=rho_floor,
            z_t=() if z0 is None else (float(z0),),
        )

    @property
    def rho(self) -> float:
        return self.rho_t[-1]

    @property
    def a(self) -> float:
        return self.a_t[-1]

    @property
    def t(self) -> float:
        return self.times[-1]

    def a_at(self, t: float) -> float:
        return self.a0 - (2.0 * self.a0**2 + self.C0) * t

    def norm_params(self, ell: float = DEFAULT_ELL, m_max: int = DEFAULT_M_MAX) -> NormParams:
        return NormParams(rho=self.rho, a=self.a, ell=ell, m_max=m_max)


def evolve_radius(tracker: RadiusTracker, z_value: float, dt: float) -> RadiusTracker:
    """Advance rho by dt given |u|_Z at the new time.

    With a stored previous sample the step is the trapezoidal rule, otherwise
    explicit Euler; both are exact for constant z. Sets ``aborted`` once rho
    drops below the floor or a(t) stops being positive; an aborted tracker no
    longer moves.
    """
    if z_value < 0:
        raise ParameterError(f"z_value must be nonnegative, got {z_value}")
    if tracker.aborted:
        return tracker
    if tracker.z_t:
        rate = 0.5 * (tracker.z_t[-1] + z_value)
    else:
        rate = z_value
    rho = tracker.rho - dt * rate
    t = tracker.t + dt
    a = tracker.a_at(t)
    aborted = rho < tracker.rho_floor or a <= 0.0
    if aborted:
        logger.warning(
            f"radius tracking stopped at t={t:.4g}: rho={rho:.3e}, a={a:.3e} (floor {tracker.rho_floor:.1e})"
        )
    return replace(
        tracker,
        rho_t=tracker.rho_t + (rho,),
        a_t=tracker.a_t + (a,),
        times=tracker.times + (t,),
        z_t=tracker.z_t + (float(z_value),),
        aborted=aborted,
    )


def lifespan_estimate(x0: float, rho0: float, tau: float) -> float:
    """T* = (3 x0^2 + x0^4)^-1 min(rho0/2, tau/3)^2 / 4, infinite for x0 = 0."""
    if x0 < 0:
        raise ParameterError(f"x0 must be nonnegative, got {x0}")
    if x0 == 0:
        return float("inf")
    return 0.25 * min(rho0 / 2.0, tau / 3.0) ** 2 / (3.0 * x0**2 + x0**4)


# ============================================================================
# Energy budget
# ============================================================================


@dataclass(frozen=True)
class BudgetReport:
    times: np.ndarray
    lhs: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    x0_sq: float
    fitted_C: float

    def to_text(self) -> str:
        lines = [
            "energy budget",
            f"  samples      : {len(self.times)}",
            f"  |u0|_X^2     : {self.x0_sq:.6e}",
            f"  LHS(T)       : {self.lhs[-1]:.6e}",
            f"  S1(T)        : {self.s1[-1]:.6e}",
            f"  S2(T)        : {self.s2[-1]:.6e}",
            f"  fitted C     : {self.fitted_C:.6e}",
        ]
        return "\n".join(lines) + "\n"


def energy_budget(
    u_hist: Sequence[Field2D],
    tracker: RadiusTracker,
    ell: float = DEFAULT_ELL,
    m_max: int = DEFAULT_M_MAX,
) -> BudgetReport:
    """Smallest C for which the energy inequality holds on a sampled trajectory.

    LHS(t) = |u(t)|_X^2 + int |u|_Z^2 - int rho' |u|_Y^2 is compared with
    |u0|_X^2 + C (S1 + S2), where S1 = int (|rho'| rho^-2 |u|_X + |u|_X^2 + |u|_X^4)
    and S2 = int |u|_Z |u|_Y^2. Norms use the tracker's (rho, a) at each sample.
    """
    if len(u_hist) < 3:
        raise ParameterError(f"energy_budget needs at least 3 samples, got {len(u_hist)}")
    if len(u_hist) != len(tracker.times):
        raise ParameterError(
            f"trajectory has {len(u_hist)} samples, tracker has {len(tracker.times)}"
        )
    times = np.asarray(tracker.times)
    rho = np.asarray(tracker.rho_t)
    X, Y, Z = (np.empty(len(times)) for _ in range(3))
    for k, u in enumerate(u_hist):
        params = NormParams(rho=rho[k], a=max(tracker.a_t[k], 1e-12), ell=ell, m_max=m_max)
        report = norm_report(u, params)
        X[k], Y[k], Z[k] = report.X, report.Y, report.Z
    if len(tracker.z_t) == len(times):
        drho = -np.asarray(tracker.z_t)
    else:
        drho = np.gradient(rho, times)

    lhs = X**2 + cumulative_trapezoid(Z**2 - drho * Y**2, times, initial=0.0)
    s1 = cumulative_trapezoid(np.abs(drho) / rho**2 * X + X**2 + X**4, times, initial=0.0)
    s2 = cumulative_trapezoid(Z * Y**2, times, initial=0.0)
    x0_sq = float(X[0] ** 2)
    denom = s1 + s2
    ok = denom[1:] > 0.0
    ratios = (lhs[1:][ok] - x0_sq) / denom[1:][ok]
    fitted = max(0.0, float(np.max(ratios))) if ratios.size else 0.0
    return BudgetReport(times, lhs, s1, s2, x0_sq, fitted)
