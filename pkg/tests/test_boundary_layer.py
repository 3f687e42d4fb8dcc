"""
Tests for the layer solvers: step_bl, the second layer problem and the eps1 sweep.

Run with: pytest tests/test_boundary_layer.py -v
"""

import numpy as np
import pytest
from scipy.special import erf

from rotbl.analytic_norms import NormParams, lifespan_estimate
from rotbl.boundary_layer import (
    BLState,
    RegularizationParams,
    assemble_U1,
    assemble_U3,
    coupling_divergence,
    fluctuation_divergence,
    reconstruct_v,
    recover_pressure_gradient,
    regularization_sweep,
    step_bl,
    step_u2_bl,
    tangential_derivative_v,
    wall_neumann_residual,
    wall_velocity_residual,
)
from rotbl.config import load_config
from rotbl.core_fields import (
    Field2D,
    Grid,
    TraceField,
    d_y,
    l2_norm,
    spectral_derivative,
    weighted_l2_trace,
)
from rotbl.errors import CFLViolationError, ParameterError
from rotbl.outer_euler import TraceSet, trace_transport_u2
from rotbl.pipeline import simulate
from rotbl.scenarios import SCENARIOS, build_initial_data


@pytest.fixture(scope="module")
def small_data():
    """Consistent initial data of the small_data scenario on a 64 x 33 layer grid."""
    og, lg = Grid(64, 33, 10.0, 8.0), Grid(64, 33, 10.0, 8.0)
    return build_initial_data(SCENARIOS["small_data"], og, lg, a0=0.25, seed=0)


def _dense_heat_step(u: np.ndarray, grid: Grid, eps1: float, dt: float) -> np.ndarray:
    """Column-by-column Crank-Nicolson with a dense matrix, zero Neumann wall, zero top."""
    n, h = grid.n_y, grid.dy
    r = 0.5 * dt / h**2
    A = np.zeros((n, n))
    A[0, :3] = (-3.0, 4.0, -1.0)
    for j in range(1, n - 1):
        A[j, j - 1 : j + 2] = (-r, 1.0 + 2.0 * r, -r)
    A[-1, -1] = 1.0
    b = np.zeros_like(u)
    b[:, 1:-1] = (
        u[:, 1:-1]
        + r * (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2])
        + dt * eps1 * spectral_derivative(u, grid, 2)[:, 1:-1]
    )
    return np.linalg.solve(A, b.T).T


def _manufactured_error(n_y: int, B: float) -> tuple[float, float]:
    """Error at T of the steady u* = A G(x1) E(y) + B G'(x1) F(y) under its source.

    G = exp(-x1^2), E = exp(-y^2), F = y exp(-y^2). The traces are steady with
    u1_bar = B G, d1u1_bar = B G' (the wall slope of u*), d3u3_bar = -B G'.
    """
    A, eps1, dt, T, L = 0.5, 1e-3, 1e-3, 0.05, 8.0
    grid = Grid(64, n_y, L=L, Y=8.0)

    def gaussians(x1):
        G = np.exp(-(x1**2))
        return G, -2.0 * x1 * G, (4.0 * x1**2 - 2.0) * G, (12.0 * x1 - 8.0 * x1**3) * G

    def exact(x1, y):
        G, G1, _, _ = gaussians(x1)
        return A * G * np.exp(-(y**2)) + B * G1 * y * np.exp(-(y**2))

    def source(x1, y, t):
        G, G1, G2, G3 = gaussians(x1)
        E = np.exp(-(y**2))
        E1, E2 = -2.0 * y * E, (4.0 * y**2 - 2.0) * E
        F, F1, F2 = y * E, (1.0 - 2.0 * y**2) * E, (4.0 * y**3 - 6.0 * y) * E
        u = A * G * E + B * G1 * F
        u1 = A * G1 * E + B * G2 * F
        u11 = A * G2 * E + B * G3 * F
        uy = A * G * E1 + B * G1 * F1
        uyy = A * G * E2 + B * G1 * F2
        v = -A * E1 * 0.5 * np.sqrt(np.pi) * (erf(x1) + erf(L)) - B * F1 * (G - np.exp(-(L**2)))
        u1_bar, d3, d1d3 = B * G, -B * G1, -B * G2
        u_wall, d1u_wall = A * G, A * G1
        return (
            -eps1 * u11
            - uyy
            + d3 * y * uy
            + u1_bar * u1
            + d3 * u
            + y * d1d3 * v
            + v * u1
            + (u - u_wall) * uy
            + d1u_wall * v
        )

    x1 = grid.x1_nodes
    G, G1, G2, _ = gaussians(x1)
    traces = TraceSet.from_arrays(
        grid,
        u1_bar=B * G,
        d1u1_bar=B * G1,
        d3u3_bar=-B * G1,
        d1d3u3_bar=-B * G2,
    )
    u0 = Field2D.from_function(grid, exact)
    reg = RegularizationParams(eps1)
    u = u0
    for _ in range(int(round(T / dt))):
        u = step_bl(u, traces, reg, dt, source=source)
    return grid.dy, l2_norm(u - u0) / l2_norm(u0)


def _zero_history(grid: Grid, n: int, dt: float) -> list[TraceSet]:
    return [TraceSet.zeros(grid, k * dt) for k in range(n + 1)]


# ============================================================================
# Test: Regularization parameters
# ============================================================================


def test_regularization_params_validation():
    with pytest.raises(ParameterError):
        RegularizationParams(0.0)
    with pytest.raises(ParameterError):
        RegularizationParams(1e-3, (1e-2, 1e-2, 1e-3))
    with pytest.raises(ParameterError):
        RegularizationParams(1e-3, (1e-2, -1e-3))
    assert RegularizationParams(1e-3, [1e-2, 1e-3]).schedule == (1e-2, 1e-3)


# ============================================================================
# Test: step_bl
# ============================================================================


def test_heat_limit_matches_dense_crank_nicolson():
    grid = Grid(128, 128, L=10.0, Y=8.0)
    eps1, dt = 1e-3, 1e-3
    u = Field2D.from_function(grid, lambda x1, y: np.exp(-(x1**2) / 4.0) * y**2 * np.exp(-(y**2)))
    traces = TraceSet.zeros(grid)
    reg = RegularizationParams(eps1)
    for _ in range(5):
        expected = _dense_heat_step(u.values, grid, eps1, dt)
        u = step_bl(u, traces, reg, dt, nonlinear=False)
        assert np.max(np.abs(u.values - expected)) <= 1e-10
    print("✅ banded layer step agrees with the dense heat solver")


@pytest.mark.parametrize("B", [0.0, 0.5], ids=["zero_traces", "driven_by_traces"])
def test_manufactured_solution_converges_at_second_order(B):
    hs, errs = zip(*(_manufactured_error(n, B) for n in (33, 65, 129)))
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    print(f"✅ layer manufactured slope {slope:.3f} (B={B}), errors {errs}")
    assert 1.8 <= slope <= 2.2


def test_wall_derivative_matches_neumann_datum(small_data):
    traces = small_data.traces
    u = step_bl(small_data.u, traces, RegularizationParams(1e-3), 1e-3)
    scale = max(1.0, traces.d1u1_bar.max_abs())
    assert wall_neumann_residual(u, traces) <= 1e-12 * scale
    assert np.max(np.abs(u.values[:, -1])) <= 1e-15


def test_step_bl_rejects_large_steps(small_data):
    with pytest.raises(CFLViolationError):
        step_bl(small_data.u, small_data.traces, RegularizationParams(1.0), 1.0)


def test_initial_layer_is_consistent(small_data):
    bl, traces = small_data.bl, small_data.traces
    assert wall_neumann_residual(bl.u, traces) <= 1e-12
    assert wall_velocity_residual(bl.U1) <= 1e-8 * max(1e-12, weighted_l2_trace(traces.u1_bar))
    div = fluctuation_divergence(bl.u).max_abs()
    assert div <= 1e-12 * max(1.0, bl.u.max_abs() / bl.grid.dy)


def test_recover_pressure_gradient_needs_nonzero_dt(small_data):
    bl = small_data.bl
    with pytest.raises(ParameterError):
        recover_pressure_gradient((bl.U1, bl.U1), bl.U3, small_data.traces, 0.0)


# ============================================================================
# Test: Reconstruction from u
# ============================================================================


def test_reconstruct_v_matches_closed_form():
    """u = A G(x1) E(y) gives v = -A E'(y) sqrt(pi)/2 (erf x1 + erf L)."""
    A, L = 0.5, 8.0
    grid = Grid(64, 257, L=L, Y=8.0)
    u = Field2D.from_function(grid, lambda x1, y: A * np.exp(-(x1**2) - y**2))
    x1, y = grid.mesh()
    exact = A * 2.0 * y * np.exp(-(y**2)) * 0.5 * np.sqrt(np.pi) * (erf(x1) + erf(L))
    v = reconstruct_v(u)
    assert np.all(v.values[0] == 0.0)
    assert np.max(np.abs(v.values - exact)) <= 5e-3 * np.max(np.abs(exact))
    # d_x1 v = -d_y u holds to round-off, whatever the d_y error
    d1v = tangential_derivative_v(u)
    assert np.max(np.abs(d1v + d_y(u).values)) <= 1e-12 * d_y(u).max_abs()


def _quadratic_layer(B: float = 0.4, c: float = 0.3):
    """u = G'(x1) (B y (1 - y/Y) + c (1 - y/Y)^2) with traces that match its wall slope.

    Every wall-normal profile is quadratic, so the second-order stencils are exact.
    """
    grid = Grid(64, 33, L=8.0, Y=4.0)
    x1 = grid.x1_nodes
    G = np.exp(-(x1**2))
    G1 = -2.0 * x1 * G
    s = B - 2.0 * c / grid.Y
    X1, y = grid.mesh()
    profile = B * y * (1.0 - y / grid.Y) + c * (1.0 - y / grid.Y) ** 2
    u = Field2D(grid, -2.0 * X1 * np.exp(-(X1**2)) * profile)
    traces = TraceSet.from_arrays(grid, u1_bar=s * G, d1u1_bar=s * G1, d3u3_bar=-s * G1)
    lin = TraceField(grid, -c * G1)
    return grid, u, traces, lin


def test_assembled_velocities_satisfy_wall_identities():
    grid, u, traces, lin = _quadratic_layer()
    U1 = assemble_U1(u, traces)
    U3 = assemble_U3(u, lin, traces)
    assert np.max(np.abs(U1.values[:, 0])) <= 1e-12 * traces.u1_bar.max_abs()
    assert np.max(np.abs(U3.values[:, 0])) <= 1e-15
    y = grid.y_nodes[None, :]
    expected = u.values + lin.values[:, None] + y * traces.d3u3_bar.values[:, None]
    assert np.array_equal(U3.values, expected)
    bl = BLState.assemble(u, traces, lin, Field2D.zeros(grid))
    assert np.array_equal(bl.U1.values, U1.values)
    div = coupling_divergence(bl, traces).values
    datum = traces.d1u1_bar.values + traces.d3u3_bar.values
    assert np.max(np.abs(div - datum[:, None])) <= 1e-10
    print("✅ U1 and U3 vanish on the wall")


def test_recover_pressure_gradient_on_manufactured_fields():
    grid = Grid(64, 33, L=8.0, Y=4.0)
    x1, y = grid.mesh()
    G = np.exp(-(x1**2))
    G1 = -2.0 * x1 * G
    q, q1, q2 = 1.0 + y - y**2 / 4.0, 1.0 - y / 2.0, -0.5
    s, dt = 0.1, 1e-2
    U1_prev = Field2D(grid, G * q)
    U1 = Field2D(grid, (1.0 + s) * G * q)
    U3 = Field2D(grid, G1 * y)
    traces = TraceSet.from_arrays(grid, d1p0_bar=0.3 * G[:, 0])
    got = recover_pressure_gradient((U1_prev, U1), U3, traces, dt)
    expected = (
        -s * G * q / dt
        + (1.0 + s) * G * q2
        - (1.0 + s) ** 2 * G * G1 * q**2
        - G1 * y * (1.0 + s) * G * q1
        - 0.3 * G
    )
    assert np.max(np.abs(got.values - expected)) <= 1e-9 * np.max(np.abs(expected))
    assert got.label == "d1p_B0"


# ============================================================================
# Test: Second layer problem
# ============================================================================


def test_u2_wall_identity_holds_after_step(small_data):
    bl, traces = small_data.bl, small_data.traces
    dt = 1e-3
    new = step_u2_bl(bl.u2B, bl.U1, bl.U3, traces, 0.25, dt)
    u2_bar_new = trace_transport_u2(traces.u2_bar, traces.u1_bar, dt)
    assert np.array_equal(new.values[:, 0], -u2_bar_new.values)


def test_u2_sine_mode_decays_at_discrete_rate():
    grid = Grid(16, 33, L=4.0, Y=2.0)
    x1, y = grid.mesh()
    w = Field2D(grid, np.cos(np.pi * x1 / grid.L) * np.sin(np.pi * y / grid.Y))
    zero = Field2D.zeros(grid)
    dt = 1e-2
    new = step_u2_bl(w, zero, zero, TraceSet.zeros(grid), 0.25, dt)
    lam = (2.0 - 2.0 * np.cos(np.pi * grid.dy / grid.Y)) / grid.dy**2
    expected = w.values / (1.0 + dt * lam)
    expected[:, -1] = 0.0
    assert np.max(np.abs(new.values - expected)) <= 1e-12


def test_u2_step_without_source_is_monotone():
    grid = Grid(32, 33, L=4.0, Y=4.0)
    rng = np.random.default_rng(3)
    x1, y = grid.mesh()
    w = rng.normal(size=grid.shape) * np.sin(np.pi * y / grid.Y)
    w[:, 0] = w[:, -1] = 0.0
    U1 = Field2D(grid, np.sin(np.pi * x1 / grid.L) * np.exp(-y))
    U3 = Field2D(grid, 0.5 * np.cos(np.pi * x1 / grid.L) * y)
    rate = U1.max_abs() / grid.dx1 + U3.max_abs() / grid.dy
    new = step_u2_bl(Field2D(grid, w), U1, U3, TraceSet.zeros(grid), 0.25, 0.9 / rate)
    assert new.max_abs() <= np.max(np.abs(w)) + 1e-14


def test_u2_step_rejects_large_steps():
    grid = Grid(16, 9)
    ones = Field2D(grid, np.ones(grid.shape))
    with pytest.raises(CFLViolationError):
        step_u2_bl(Field2D.zeros(grid), ones, ones, TraceSet.zeros(grid), 0.25, 10.0)


def _u2_diffusion_error(n_y: int) -> tuple[float, float]:
    """Pure diffusion of w = sin(pi y / Y) cos(pi x1 / L) to T with dt = 0.8 dy^2."""
    grid = Grid(16, n_y, L=4.0, Y=2.0)
    T = 0.1
    n_steps = int(round(T / (0.8 * grid.dy**2)))
    dt = T / n_steps
    x1, y = grid.mesh()
    w = Field2D(grid, np.cos(np.pi * x1 / grid.L) * np.sin(np.pi * y / grid.Y))
    zero = Field2D.zeros(grid)
    traces = TraceSet.zeros(grid)
    for _ in range(n_steps):
        w = step_u2_bl(w, zero, zero, traces, 0.25, dt)
    decay = np.exp(-((np.pi / grid.Y) ** 2) * T)
    exact = np.cos(np.pi * x1 / grid.L) * np.sin(np.pi * y / grid.Y) * decay
    return grid.dy, float(np.max(np.abs(w.values - exact)))


def test_u2_step_converges_under_refinement():
    hs, errs = zip(*(_u2_diffusion_error(n) for n in (17, 33, 65)))
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    print(f"✅ u2 diffusion slope {slope:.3f}, errors {errs}")
    assert 1.8 <= slope <= 2.2


# ============================================================================
# Test: Regularization sweep
# ============================================================================


def _sweep_setup():
    grid = Grid(64, 33, L=10.0, Y=6.0)
    u0 = Field2D.from_function(
        grid, lambda x1, y: 0.05 * np.cos(2.0 * x1) * np.exp(-(x1**2) / 4.0) * y**2 * np.exp(-(y**2))
    )
    return grid, u0, NormParams(rho=0.5, a=0.25, m_max=3)


def test_sweep_differences_decrease():
    grid, u0, params = _sweep_setup()
    dt = 1e-3
    reg = RegularizationParams(1e-3, (1e-1, 1e-2, 1e-3))
    report = regularization_sweep(u0, _zero_history(grid, 30, dt), reg, dt, params, nonlinear=False)
    print(f"✅ sweep differences {report.differences}")
    assert report.monotone
    assert len(report.rows()) == 2
    assert not report.failures


def test_sweep_records_failures_and_continues():
    grid, u0, params = _sweep_setup()
    dt = 1e-3
    reg = RegularizationParams(1e-3, (10.0, 1e-2, 1e-3))
    report = regularization_sweep(u0, _zero_history(grid, 5, dt), reg, dt, params, nonlinear=False)
    assert 10.0 in report.failures
    assert report.failures[10.0].startswith("CFL_VIOLATION")
    assert np.isnan(report.differences[0])
    assert np.isfinite(report.differences[1])
    assert not report.monotone


def test_sweep_needs_three_values():
    grid, u0, params = _sweep_setup()
    with pytest.raises(ParameterError):
        regularization_sweep(
            u0, _zero_history(grid, 2, 1e-3), RegularizationParams(1e-3, (1e-2, 1e-3)), 1e-3, params
        )


@pytest.mark.slow
def test_small_data_sweep_is_cauchy_at_half_lifespan():
    """Nonlinear small_data layer over eps1 = 1e-2, 1e-3, 1e-4 up to the default horizon."""
    config = load_config(n_x1=64, n_y=33, n_x3=33, scenario="small_data")
    sim = simulate(config)
    x0 = sim.norm_rows[0]["X"]
    assert sim.T <= 0.5 * lifespan_estimate(x0, config.rho0, config.tau)
    assert not sim.tracker.aborted
    report = regularization_sweep(
        sim.initial.u,
        sim.trace_history,
        RegularizationParams(1e-3, (1e-2, 1e-3, 1e-4)),
        config.dt,
        sim.tracker.norm_params(config.ell, config.m_max),
        nonlinear=True,
    )
    print(f"✅ small_data sweep differences {report.differences} over T={sim.T:.4f}")
    assert not report.failures
    assert report.monotone
