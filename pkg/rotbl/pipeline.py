"""
Run orchestration.

One run advances every part of the expansion in lockstep,

    outer -> wall traces -> layer (u^{B,1}_3) -> second layer problem (u^{B,0}_2)
          -> correction u^{I,1} -> radius and norms

then checks the order identities on the final state, fits the energy budget
and measures the composite residual for every eps of the sweep list. A sweep
adds the eps1 regularization study, reusing the trace history of the run.

Module steps run sequentially; only the per-eps composite evaluations of a
sweep go to a thread pool.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analytic_norms import (
    BudgetReport,
    NormParams,
    RadiusTracker,
    energy_budget,
    evolve_radius,
    lifespan_estimate,
    norm_report,
    z_norm,
)
from .artifacts import (
    read_csv,
    read_dump,
    write_csv,
    write_dump,
    write_field_csv,
    write_manifest,
    write_text,
    write_trace_history,
)
from .boundary_layer import (
    BLState,
    RegularizationParams,
    SweepReport,
    coupling_divergence,
    fluctuation_divergence,
    neumann_mismatch,
    recover_pressure_gradient,
    regularization_sweep,
    step_bl,
    step_u2_bl,
    substituted_u2,
    tangential_derivative_U1,
    wall_neumann_residual,
    wall_velocity_residual,
)
from .composer import (
    ExpansionState,
    IdentityReport,
    ResidualReport,
    compose,
    fit_residual_slope,
    nsc_residual,
    order_identity_check,
)
from .config import RunConfig
from .core_fields import Field2D, TraceField
from .outer_euler import (
    TraceSet,
    bernoulli_residual,
    divergence,
    enstrophy,
    extract_traces,
    kinetic_energy,
    step_outer,
    trace_transport_u2,
)
from .outer_euler_lin import boundary_datum_norm, step_linearized
from .scenarios import InitialData, build_initial_data, get_scenario

logger = logging.getLogger(__name__)

NORM_FIELDS = ("step", "t", "rho", "a", "X", "Y", "Z")
DIAGNOSTIC_FIELDS = (
    "step",
    "t",
    "kinetic_energy",
    "enstrophy",
    "outer_divergence",
    "bernoulli_residual",
    "u2_trace_gap",
    "wall_neumann",
    "neumann_mismatch",
    "wall_U1",
    "fluctuation_divergence",
    "coupling_divergence",
    "boundary_datum",
    "w_max",
    "u2_bar_max",
)


# ============================================================================
# Simulation
# ============================================================================


@dataclass(eq=False)
class Simulation:
    """Everything a run produces before anything is written."""

    config: RunConfig
    T: float
    n_steps: int
    initial: InitialData
    tracker: RadiusTracker
    previous: ExpansionState | None = None
    final: ExpansionState | None = None
    u_hist: list[Field2D] = field(default_factory=list)
    trace_history: list[TraceSet] = field(default_factory=list)
    norm_rows: list[dict] = field(default_factory=list)
    diagnostic_rows: list[dict] = field(default_factory=list)
    snapshots: list[tuple[int, float, float, float, Field2D]] = field(default_factory=list)
    # wall trace of u2 from the 2D outer solve and from 1D transport, every step
    u2_times: list[float] = field(default_factory=list)
    u2_outer: list[TraceField] = field(default_factory=list)
    u2_transported: list[TraceField] = field(default_factory=list)

    def record_u2(self, t: float, outer: TraceField, transported: TraceField) -> None:
        self.u2_times.append(t)
        self.u2_outer.append(outer)
        self.u2_transported.append(transported)


def run_horizon(config: RunConfig, x0: float) -> float:
    """T from the config, else T*/2 capped at half the time the weight a(t) takes to reach 0."""
    if config.T is not None:
        return config.T
    t_star = lifespan_estimate(x0, config.rho0, config.tau)
    weight_limit = config.a0 / (2.0 * config.a0**2 + config.C0)
    return min(0.5 * t_star, 0.5 * weight_limit)


def _norm_row(step: int, tracker: RadiusTracker, u: Field2D, config: RunConfig) -> dict:
    row = {"step": step, "t": tracker.t, "rho": tracker.rho, "a": tracker.a}
    params = _last_valid_params(tracker, config)
    row.update(norm_report(u, params).as_row())
    return row


def _last_valid_params(tracker: RadiusTracker, config: RunConfig) -> NormParams:
    for rho, a in zip(reversed(tracker.rho_t), reversed(tracker.a_t)):
        if rho > 0 and a > 0:
            return NormParams(rho=rho, a=a, ell=config.ell, m_max=config.m_max)
    return NormParams(rho=tracker.rho_t[0], a=config.a0, ell=config.ell, m_max=config.m_max)


def simulate(config: RunConfig) -> Simulation:
    """Integrate the coupled system up to the run horizon.

    Raises:
        RotblError: any module rejection (CFL, non-finite values, bad parameters).
    """
    spec = get_scenario(config.scenario)
    og, lg = config.outer_grid(), config.layer_grid()
    init = build_initial_data(spec, og, lg, config.a0, config.seed)
    reg = RegularizationParams(config.eps1, config.eps1_schedule)
    dt = config.dt

    rho_start = min(config.rho0 / 2.0, config.tau / 3.0)
    first = norm_report(init.u, NormParams(rho_start, config.a0, config.ell, config.m_max))
    tracker = RadiusTracker.start(
        config.rho0, config.tau, config.a0, config.C0, config.rho_floor, z0=first.Z
    )
    T = run_horizon(config, first.X)
    n_steps = max(1, int(round(T / dt)))
    logger.info(
        f"scenario {spec.name}: |u0|_X={first.X:.4e}, T={T:.4g}, {n_steps} steps of dt={dt:g}"
    )

    sim = Simulation(config, T, n_steps, init, tracker)
    outer, lin, bl = init.outer, init.lin_outer, init.bl
    traces = extract_traces(outer)
    layer_traces = init.traces
    u2_transport = traces.u2_bar
    sim.trace_history.append(layer_traces)
    sim.u_hist.append(bl.u)
    sim.norm_rows.append(_norm_row(0, tracker, bl.u, config))
    sim.snapshots.append((0, 0.0, tracker.rho, tracker.a, bl.u))
    sim.record_u2(outer.t, traces.u2_bar, u2_transport)

    for n in range(1, n_steps + 1):
        outer_new = step_outer(outer, dt)
        traces_new = extract_traces(outer_new)
        layer_new = traces_new.on_grid(lg)

        u_new = step_bl(
            bl.u, layer_traces, reg, dt, next_traces=layer_new, nonlinear=spec.nonlinear, step=n
        )
        u2B_new = step_u2_bl(
            bl.u2B, bl.U1, bl.U3, layer_traces, config.a0, dt, next_traces=layer_new
        )
        lin_new = step_linearized(lin, outer, TraceField(og, u_new.values[:, 0]), dt)
        bl_new = BLState.assemble(
            u_new, layer_new, TraceField(lg, lin_new.u3.values[:, 0]), u2B_new, t=outer_new.t
        )
        d1pB0 = recover_pressure_gradient(
            (bl.U1, bl_new.U1),
            bl_new.U3,
            layer_new,
            dt,
            d1U1=tangential_derivative_U1(u_new, layer_new),
        )
        bl_new = replace(bl_new, d1pB0=d1pB0)
        u2_transport = trace_transport_u2(u2_transport, traces.u1_bar, dt)

        if not tracker.aborted:
            z = z_norm(u_new, tracker.norm_params(config.ell, config.m_max))
            tracker = evolve_radius(tracker, z, dt)
            if len(tracker.times) > len(sim.u_hist):
                sim.u_hist.append(u_new)
        sim.tracker = tracker
        sim.trace_history.append(layer_new)
        sim.record_u2(outer_new.t, traces_new.u2_bar, u2_transport)

        if n % config.snapshot_every == 0 or n == n_steps:
            norms = _norm_row(n, tracker, u_new, config)
            norms["t"] = outer_new.t
            sim.norm_rows.append(norms)
            sim.diagnostic_rows.append(
                {
                    "step": n,
                    "t": outer_new.t,
                    "kinetic_energy": kinetic_energy(outer_new),
                    "enstrophy": enstrophy(outer_new),
                    "outer_divergence": divergence(outer_new).max_abs(),
                    "bernoulli_residual": bernoulli_residual(traces, traces_new, config.ell),
                    "u2_trace_gap": float(
                        np.max(np.abs(u2_transport.values - traces_new.u2_bar.values))
                    ),
                    "wall_neumann": wall_neumann_residual(u_new, layer_new),
                    "neumann_mismatch": neumann_mismatch(layer_new, config.ell),
                    "wall_U1": wall_velocity_residual(bl_new.U1, config.ell),
                    "fluctuation_divergence": fluctuation_divergence(u_new).max_abs(),
                    "coupling_divergence": coupling_divergence(bl_new, layer_new).max_abs(),
                    "boundary_datum": boundary_datum_norm(
                        TraceField(og, u_new.values[:, 0]), config.tau, config.ell, config.m_max
                    ),
                    "w_max": substituted_u2(u2B_new, layer_new.u2_bar, config.a0).max_abs(),
                    "u2_bar_max": layer_new.u2_bar.max_abs(),
                }
            )
            sim.snapshots.append((n, outer_new.t, tracker.rho, tracker.a, u_new))
            logger.info(
                f"step {n}/{n_steps} t={outer_new.t:.4f} X={norms['X']:.4e} "
                f"Z={norms['Z']:.4e} rho={tracker.rho:.4e}"
            )

        if n == n_steps:
            sim.previous = ExpansionState.build(outer, lin, bl, traces)
        outer, lin, bl, traces, layer_traces = outer_new, lin_new, bl_new, traces_new, layer_new

    sim.final = ExpansionState.build(outer, lin, bl, traces)
    return sim


# ============================================================================
# Post-processing
# ============================================================================


def composite_residuals(
    previous: ExpansionState,
    final: ExpansionState,
    eps_list: tuple[float, ...],
    ell: float,
    workers: int = 1,
) -> ResidualReport:
    """Composite residual of the last step for every eps, and the log-log slope."""

    def one(eps: float) -> tuple[float, dict]:
        residual = nsc_residual(compose(previous, eps), compose(final, eps), ell)
        logger.info(f"eps={eps:.1e}: composite residual evaluated")
        return eps, residual

    if workers > 1 and len(eps_list) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(one, eps_list))
    else:
        results = dict(one(eps) for eps in eps_list)
    return fit_residual_slope(results)


def budget_or_none(sim: Simulation) -> BudgetReport | None:
    if len(sim.u_hist) < 3:
        logger.warning(f"energy budget skipped: only {len(sim.u_hist)} radius samples")
        return None
    return energy_budget(sim.u_hist, sim.tracker, sim.config.ell, sim.config.m_max)


# ============================================================================
# Runs with artifacts
# ============================================================================


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    out_dir: Path
    simulation: Simulation | None = None
    identities: IdentityReport | None = None
    budget: BudgetReport | None = None
    residuals: ResidualReport | None = None
    regularization: SweepReport | None = None
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        sim = self.simulation
        out = {"scenario": self.config.scenario, "config_hash": self.config.config_hash()}
        if sim is not None:
            last = sim.norm_rows[-1]
            out.update(
                {
                    "T": sim.T,
                    "n_steps": sim.n_steps,
                    "dt": self.config.dt,
                    "X": last["X"],
                    "Y": last["Y"],
                    "Z": last["Z"],
                    "rho": sim.tracker.rho,
                    "radius_aborted": sim.tracker.aborted,
                }
            )
        if self.identities is not None:
            out["identities_passed"] = self.identities.passed
        if self.budget is not None:
            out["fitted_C"] = self.budget.fitted_C
        if self.residuals is not None:
            out["residual_slope"] = self.residuals.fitted_slope
        if self.regularization is not None:
            out["regularization_monotone"] = self.regularization.monotone
            out["regularization_differences"] = list(self.regularization.differences)
        out["warnings"] = len(self.warnings)
        return out


def _write_simulation(sim: Simulation, out_dir: Path) -> None:
    write_csv(out_dir / "norms.csv", sim.norm_rows, NORM_FIELDS)
    write_csv(out_dir / "diagnostics.csv", sim.diagnostic_rows, DIAGNOSTIC_FIELDS)
    index = []
    for step, t, rho, a, u in sim.snapshots:
        name = f"snapshots/u_{step:06d}.bin"
        write_dump(out_dir / name, u, "u_B13")
        index.append({"step": step, "t": t, "rho": rho, "a": a, "file": name})
    write_csv(out_dir / "snapshots" / "index.csv", index, ("step", "t", "rho", "a", "file"))
    radius = [
        {"t": t, "rho": rho, "a": a}
        for t, rho, a in zip(sim.tracker.times, sim.tracker.rho_t, sim.tracker.a_t)
    ]
    write_csv(out_dir / "radius.csv", radius, ("t", "rho", "a"))
    write_trace_history(
        out_dir / "traces.csv",
        sim.u2_times,
        sim.u2_outer,
        {"transported": sim.u2_transported},
    )


def _write_final(e: ExpansionState, out_dir: Path) -> None:
    fields = {
        "outer_u1": e.outer.u1,
        "outer_u2": e.outer.u2,
        "outer_u3": e.outer.u3,
        "outer_p": e.outer.p,
        "lin_u1": e.lin_outer.u1,
        "lin_u2": e.lin_outer.u2,
        "lin_u3": e.lin_outer.u3,
        "lin_p": e.lin_outer.p,
        "u_B13": e.bl.u,
        "u_B02": e.bl.u2B,
        "d1p_B0": e.bl.d1pB0,
    }
    for name, f in fields.items():
        write_dump(out_dir / "final" / f"{name}.bin", f, name)
    write_field_csv(out_dir / "final" / "u_B13.csv", e.bl.u)


def _execute(
    config: RunConfig, out_dir: Path, *, regularization: bool, workers: int
) -> RunResult:
    result = RunResult(config, out_dir)
    write_text(out_dir / "config.ini", config.to_ini())
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            sim = simulate(config)
            result.simulation = sim
            _write_simulation(sim, out_dir)
            _write_final(sim.final, out_dir)

            result.identities = order_identity_check(sim.final, config.identity_tol)
            write_text(out_dir / "identities.txt", result.identities.to_text())

            result.budget = budget_or_none(sim)
            if result.budget is not None:
                write_text(out_dir / "budget.txt", result.budget.to_text())

            result.residuals = composite_residuals(
                sim.previous, sim.final, config.eps, config.ell, workers
            )
            write_csv(
                out_dir / "residuals.csv",
                result.residuals.rows(),
                ("eps", "component", "window", "residual"),
            )
            write_text(out_dir / "residuals.txt", result.residuals.summary())

            if regularization:
                params = _last_valid_params(sim.tracker, config)
                result.regularization = regularization_sweep(
                    sim.initial.u,
                    sim.trace_history,
                    RegularizationParams(config.eps1, config.eps1_schedule),
                    config.dt,
                    params,
                    get_scenario(config.scenario).nonlinear,
                )
                write_csv(
                    out_dir / "regularization.csv",
                    result.regularization.rows(),
                    ("eps1_k", "eps1_k1", "x_diff"),
                )
        finally:
            result.warnings = [f"{w.category.__name__}: {w.message}" for w in caught]
            write_text(out_dir / "warnings.txt", "".join(f"{w}\n" for w in result.warnings))
            write_text(
                out_dir / "summary.json", json.dumps(result.summary(), indent=2, sort_keys=True) + "\n"
            )
            write_manifest(out_dir, config.config_hash(), {"scenario": config.scenario})
    return result


def _output_dir(config: RunConfig, out_dir: str | Path | None) -> Path:
    path = Path(out_dir or config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run(config: RunConfig, out_dir: str | Path | None = None) -> RunResult:
    """Single coupled run; artifacts go to ``out_dir`` (default: config.output_dir)."""
    return _execute(config, _output_dir(config, out_dir), regularization=False, workers=1)


def sweep(config: RunConfig, out_dir: str | Path | None = None) -> RunResult:
    """Coupled run plus the eps1 regularization study; composites use the worker pool."""
    return _execute(
        config, _output_dir(config, out_dir), regularization=True, workers=config.workers
    )


def recompute_norms(config: RunConfig, out_dir: str | Path | None = None) -> list[dict]:
    """X, Y, Z of every dumped snapshot, recomputed with the recorded radius and weight."""
    out_dir = Path(out_dir or config.output_dir)
    rows = []
    for entry in read_csv(out_dir / "snapshots" / "index.csv"):
        u = read_dump(out_dir / entry["file"])
        rho, a = float(entry["rho"]), float(entry["a"])
        if not (rho > 0 and a > 0):
            logger.warning(f"step {entry['step']}: rho={rho}, a={a} outside the norm range, skipped")
            continue
        report = norm_report(u, NormParams(rho, a, config.ell, config.m_max))
        row = {"step": int(entry["step"]), "t": float(entry["t"]), "rho": rho, "a": a}
        rows.append({**row, **report.as_row()})
    write_csv(out_dir / "norms_recomputed.csv", rows, NORM_FIELDS)
    write_manifest(out_dir, config.config_hash(), {"scenario": config.scenario})
    return rows
