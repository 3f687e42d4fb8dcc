"""
Named families of analytic initial data.

Every component is a Gaussian-modulated Fourier mode in x1,

    A exp(-(x1/w)^2) cos(k x1 + phase),   k = mode * pi / L,

times a fixed wall-normal profile. Phases are drawn from the run seed. The
builders make the data consistent with the solvers at t = 0:

  - the outer streamfunction vanishes on the wall and on the lid, so u^{I,0}
    is divergence-free and impermeable;
  - the layer unknown meets the Neumann condition d_y u = d1u1_bar through
    the one-sided wall stencil;
  - the correction u^{I,1} carries u3 = -u^{B,1}_3 on the wall;
  - u^{B,0}_2 equals -u2_bar on the wall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boundary_layer import BLState
from .core_fields import Field2D, Grid, TraceField
from .outer_euler import OuterState, TraceSet, extract_traces
from .outer_euler_lin import LinOuterState

logger = logging.getLogger(__name__)

DEFAULT_WIDTH = 1.5


@dataclass(frozen=True)
class ModeSpec:
    amplitude: float = 0.0
    mode: int = 1
    width: float = DEFAULT_WIDTH

    def profile(self, x1: np.ndarray, L: float, phase: float = 0.0) -> np.ndarray:
        k = self.mode * np.pi / L
        return self.amplitude * np.exp(-((x1 / self.width) ** 2)) * np.cos(k * x1 + phase)


@dataclass(frozen=True)
class ScenarioSpec:
    """Initial data of u^{I,0} (psi and u2), u^{I,1}, u^{B,1}_3 and u^{B,0}_2."""

    name: str
    outer: ModeSpec = field(default_factory=ModeSpec)
    outer_u2: ModeSpec = field(default_factory=ModeSpec)
    lin: ModeSpec = field(default_factory=ModeSpec)
    layer: ModeSpec = field(default_factory=ModeSpec)
    layer_u2: ModeSpec = field(default_factory=ModeSpec)
    nonlinear: bool = True


SCENARIOS: dict[str, ScenarioSpec] = {
    "zero": ScenarioSpec("zero"),
    "shear": ScenarioSpec(
        "shear",
        outer=ModeSpec(0.1, mode=1),
        outer_u2=ModeSpec(0.1, mode=2),
    ),
    "small_data": ScenarioSpec(
        "small_data",
        outer=ModeSpec(0.05, mode=1),
        outer_u2=ModeSpec(0.05, mode=2),
        lin=ModeSpec(0.02, mode=1),
        layer=ModeSpec(0.02, mode=2),
        layer_u2=ModeSpec(0.02, mode=1),
    ),
    "heat_limit": ScenarioSpec("heat_limit", layer=ModeSpec(0.05, mode=1), nonlinear=False),
}


@dataclass(frozen=True, eq=False)
class InitialData:
    outer: OuterState
    lin_outer: LinOuterState
    bl: BLState
    traces: TraceSet

    @property
    def u(self) -> Field2D:
        return self.bl.u


def get_scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}, expected one of {sorted(SCENARIOS)}") from None


def outer_initial(spec: ScenarioSpec, grid: Grid, phases: np.ndarray) -> OuterState:
    x1, x3 = grid.mesh()
    psi = spec.outer.profile(x1, grid.L, phases[0]) * np.sin(np.pi * x3 / grid.Y)
    psi[:, -1] = 0.0
    u2 = spec.outer_u2.profile(x1, grid.L, phases[1]) * np.exp(-((x3 / spec.outer_u2.width) ** 2))
    return OuterState.from_streamfunction(Field2D(grid, psi, "psi"), Field2D(grid, u2, "u2"))


def layer_initial(mode: ModeSpec, grid: Grid, traces: TraceSet, phase: float = 0.0) -> Field2D:
    """u^{B,1}_3 at t = 0 with d_y u = d1u1_bar on the wall and u = 0 at y = Y."""
    x1, y = grid.mesh()
    datum = traces.d1u1_bar.values
    values = (mode.profile(x1, grid.L, phase) * y + datum[:, None]) * y * np.exp(-(y**2))
    values[:, -1] = 0.0
    # one-sided wall stencil reproduces the datum exactly
    values[:, 0] = (4.0 * values[:, 1] - values[:, 2] - 2.0 * grid.dy * datum) / 3.0
    return Field2D(grid, values, "u_B13")


def layer_u2_initial(
    mode: ModeSpec, grid: Grid, u2_bar: TraceField, a0: float, phase: float = 0.0
) -> Field2D:
    """u^{B,0}_2 at t = 0; its substituted variable vanishes at both ends."""
    x1, y = grid.mesh()
    w = mode.profile(x1, grid.L, phase) * y * np.exp(-(y**2))
    w[:, 0] = 0.0
    w[:, -1] = 0.0
    g = np.exp(-2.0 * a0 * y**2)
    return Field2D(grid, w - g * u2_bar.values[:, None], "u_B02")


def build_initial_data(
    spec: ScenarioSpec, outer_grid: Grid, layer_grid: Grid, a0: float, seed: int = 0
) -> InitialData:
    if (outer_grid.n_x1, outer_grid.L) != (layer_grid.n_x1, layer_grid.L):
        raise ValueError("outer and layer grids must share the x1 nodes")
    phases = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, size=5)
    logger.debug(f"scenario {spec.name}: phases {np.round(phases, 6).tolist()}")

    outer = outer_initial(spec, outer_grid, phases)
    traces = extract_traces(outer).on_grid(layer_grid)
    u = layer_initial(spec.layer, layer_grid, traces, phases[3])

    x1, x3 = outer_grid.mesh()
    lin_psi = spec.lin.profile(x1, outer_grid.L, phases[2]) * np.sin(np.pi * x3 / outer_grid.Y)
    lin_psi[:, -1] = 0.0
    lin = LinOuterState.with_boundary(
        Field2D(outer_grid, lin_psi),
        Field2D.zeros(outer_grid),
        TraceField(outer_grid, u.values[:, 0]),
    )

    u2B = layer_u2_initial(spec.layer_u2, layer_grid, traces.u2_bar, a0, phases[4])
    bl = BLState.assemble(u, traces, TraceField(layer_grid, lin.u3.values[:, 0]), u2B, t=0.0)
    return InitialData(outer, lin, bl, traces)
