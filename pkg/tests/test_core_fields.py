"""
Tests for grids, fields and the shared discrete operators.

Run with: pytest tests/test_core_fields.py -v
"""

import numpy as np
import pytest

from rotbl.core_fields import (
    Field2D,
    Grid,
    TraceField,
    WeightParams,
    check_left_decay,
    d_x1,
    d_y,
    integrate_x1_from_left,
    l2_norm,
    ramp_derivative,
    require_same_grid,
    second_difference,
    spectral_antiderivative,
    wall_derivative,
    weighted_l2,
    weighted_l2_trace,
)
from rotbl.errors import (
    GridError,
    NonFiniteError,
    OperatorBoundsError,
    ParameterError,
    StateMismatchError,
    TruncationWarning,
    WeightOverflowError,
)


def _slope(h, err) -> float:
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


# ============================================================================
# Test: Domain types
# ============================================================================


@pytest.mark.parametrize("n_x1", [4, 12, 48])
def test_grid_rejects_bad_tangential_size(n_x1):
    with pytest.raises(GridError):
        Grid(n_x1, 17)


def test_grid_rejects_short_normal_axis_and_bad_lengths():
    with pytest.raises(GridError):
        Grid(16, 4)
    with pytest.raises(GridError):
        Grid(16, 17, L=0.0)
    with pytest.raises(GridError):
        Grid(16, 17, Y=-1.0)


def test_grid_nodes_are_periodic_in_x1():
    g = Grid(16, 9, L=4.0, Y=2.0)
    assert g.x1_nodes[0] == -4.0
    assert np.allclose(np.diff(g.x1_nodes), 0.5)
    assert g.x1_nodes[-1] == pytest.approx(3.5)
    assert g.y_nodes[0] == 0.0
    assert g.y_nodes[-1] == pytest.approx(2.0)
    assert g.dy == pytest.approx(0.25)
    print("✅ x1 nodes exclude +L")


def test_field_validates_shape_and_finiteness():
    g = Grid(8, 5)
    with pytest.raises(GridError):
        Field2D(g, np.zeros((8, 6)))
    bad = np.zeros(g.shape)
    bad[2, 3] = np.nan
    with pytest.raises(NonFiniteError):
        Field2D(g, bad)


def test_field_values_are_read_only():
    f = Field2D.zeros(Grid(8, 5))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_field_arithmetic_requires_same_grid():
    a = Field2D.zeros(Grid(8, 5))
    b = Field2D.zeros(Grid(16, 5))
    with pytest.raises(StateMismatchError):
        a + b
    with pytest.raises(StateMismatchError):
        require_same_grid(a, b)


def test_trace_broadcast_and_row():
    g = Grid(8, 5)
    f = Field2D.from_function(g, lambda x1, y: x1 + 10.0 * y)
    row = f.row(0)
    assert isinstance(row, TraceField)
    assert np.array_equal(row.values, g.x1_nodes)
    assert row.broadcast().shape == g.shape


def test_weight_params_ranges():
    with pytest.raises(ParameterError):
        WeightParams(ell=0.4)
    with pytest.raises(ParameterError):
        WeightParams(ell=1.2)
    with pytest.raises(ParameterError):
        WeightParams(a=0.0)
    with pytest.raises(WeightOverflowError):
        WeightParams(a=10.0).check_overflow(8.0)
    WeightParams(a=9.0).check_overflow(8.0)


# ============================================================================
# Test: Tangential operators
# ============================================================================


def test_d_x1_exact_on_fourier_modes():
    g = Grid(64, 9, L=10.0, Y=2.0)
    k = 3.0 * np.pi / g.L
    f = Field2D.from_function(g, lambda x1, y: np.sin(k * x1) * (1.0 + y))
    x1, y = g.mesh()
    assert np.max(np.abs(d_x1(f).values - k * np.cos(k * x1) * (1.0 + y))) <= 1e-10
    assert np.max(np.abs(d_x1(f, 2).values + k**2 * np.sin(k * x1) * (1.0 + y))) <= 1e-10
    print("✅ spectral derivative exact on a single mode")


def test_d_x1_second_derivative_of_a_gaussian():
    g = Grid(128, 9, L=10.0, Y=2.0)
    f = Field2D.from_function(g, lambda x1, y: np.exp(-(x1**2)) * (1.0 + y))
    x1, y = g.mesh()
    exact = (4.0 * x1**2 - 2.0) * np.exp(-(x1**2)) * (1.0 + y)
    assert np.max(np.abs(d_x1(f, 2).values - exact)) <= 1e-10


def test_d_x1_order_bounds():
    f = Field2D.zeros(Grid(8, 5))
    with pytest.raises(OperatorBoundsError):
        d_x1(f, 0)
    with pytest.raises(OperatorBoundsError):
        d_x1(f, 5, m_max=4)


def test_d_y_converges_at_second_order():
    hs, errs = [], []
    for n_y in (17, 33, 65):
        g = Grid(16, n_y, L=5.0, Y=2.0)
        f = Field2D.from_function(g, lambda x1, y: np.exp(-(x1**2) / 4.0) * np.sin(y))
        x1, y = g.mesh()
        exact = np.exp(-(x1**2) / 4.0) * np.cos(y)
        errs.append(np.max(np.abs(d_y(f).values - exact)))
        hs.append(g.dy)
    slope = _slope(hs, errs)
    print(f"✅ d_y slope {slope:.3f}")
    assert 1.9 <= slope <= 2.1


def test_d_y_order_bounds():
    with pytest.raises(OperatorBoundsError):
        d_y(Field2D.zeros(Grid(8, 5)), 3)


def test_spectral_integration_inverts_derivative():
    g = Grid(64, 5, L=8.0, Y=1.0)
    f = Field2D.from_function(g, lambda x1, y: np.exp(-(x1**2)) * (1.0 + y))
    back = integrate_x1_from_left(d_x1(f), method="spectral")
    assert np.max(np.abs(back.values - (f.values - f.values[:1]))) <= 1e-10


def test_trapezoid_integration_of_derivative_is_second_order():
    errs, hs = [], []
    for n in (32, 64, 128):
        g = Grid(n, 5, L=8.0, Y=1.0)
        f = Field2D.from_function(g, lambda x1, y: np.exp(-((x1 - 1.0) ** 2)) + 0.0 * y)
        back = integrate_x1_from_left(d_x1(f))
        errs.append(np.max(np.abs(back.values - (f.values - f.values[:1]))))
        hs.append(g.dx1)
    assert _slope(hs, errs) >= 1.8


def test_antiderivative_of_constant_is_a_ramp():
    g = Grid(16, 5, L=3.0)
    ramp = spectral_antiderivative(np.ones(g.n_x1), g)
    assert np.allclose(ramp, g.x1_nodes + g.L, atol=1e-13)


def test_ramp_derivative_handles_linear_part():
    g = Grid(64, 5, L=10.0)
    k = np.pi / g.L
    values = np.sin(k * g.x1_nodes) + 0.3 * (g.x1_nodes + g.L)
    d = ramp_derivative(values, g, 0.3)
    assert np.max(np.abs(d - (k * np.cos(k * g.x1_nodes) + 0.3))) <= 1e-12


def test_left_decay_warning():
    g = Grid(16, 5)
    f = Field2D.from_function(g, lambda x1, y: 1.0 + 0.0 * x1 * y, "flat")
    with pytest.warns(TruncationWarning):
        assert not check_left_decay(f.values, label="flat")
    assert check_left_decay(np.zeros(g.shape))


# ============================================================================
# Test: Wall-normal operators and norms
# ============================================================================


def test_second_difference_exact_on_cubics():
    y = np.linspace(0.0, 2.0, 11)
    f = y**3 - 2.0 * y**2 + y
    assert np.allclose(second_difference(f, y[1] - y[0]), 6.0 * y - 4.0, atol=1e-10)


def test_wall_derivative_exact_on_quadratics():
    g = Grid(8, 9, Y=2.0)
    f = Field2D.from_function(g, lambda x1, y: y**2 + 3.0 * y + x1)
    assert np.allclose(wall_derivative(f.values, g.dy), 3.0, atol=1e-12)


def test_l2_norm_of_constant():
    g = Grid(16, 9, L=4.0, Y=2.0)
    f = Field2D.from_function(g, lambda x1, y: 3.0 + 0.0 * x1 * y)
    assert l2_norm(f) == pytest.approx(3.0 * np.sqrt(2.0 * g.L * g.Y), rel=1e-12)


def test_weighted_norms_dominate_plain_ones():
    g = Grid(32, 17, L=6.0, Y=3.0)
    f = Field2D.from_function(g, lambda x1, y: np.exp(-(x1**2) - y**2))
    assert weighted_l2(f, WeightParams(ell=1.0, a=0.25)) > l2_norm(f)
    t = f.row(0)
    assert weighted_l2_trace(t, 1.0) >= np.sqrt(g.dx1 * np.sum(t.values**2))


def test_weighted_l2_of_a_gaussian_matches_closed_form():
    # int (1 + x^2) e^{-2x^2} dx = (5/4) sqrt(pi/2); int_0^inf e^{-2(1-a)y^2} dy = sqrt(pi/(2(1-a)))/2
    g = Grid(128, 129, L=10.0, Y=8.0)
    f = Field2D.from_function(g, lambda x1, y: np.exp(-(x1**2) - y**2))
    a = 0.25
    exact = np.sqrt(1.25 * np.sqrt(np.pi / 2.0) * 0.5 * np.sqrt(np.pi / (2.0 * (1.0 - a))))
    assert weighted_l2(f, WeightParams(ell=1.0, a=a)) == pytest.approx(exact, rel=1e-10)
    plain = np.sqrt(np.sqrt(np.pi / 2.0) * 0.5 * np.sqrt(np.pi / 2.0))
    assert l2_norm(f) == pytest.approx(plain, rel=1e-10)
