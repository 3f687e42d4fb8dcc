"""
MCP tools for rotbl.

The tools expose the toolkit as a batch service: validate a configuration,
size a run horizon, evaluate the weighted norms of scenario data, or run a
whole scenario and get its summary back. There is no steering of running
jobs and nothing is plotted; downstream tools read the CSV artifacts.

=== TOOLS ===

health()
    Liveness check.

validate_config(config_text)
    Every violated constraint of an INI configuration; empty when usable.

lifespan(x0, rho0, tau)
    Lifespan estimate T* of the layer for initial size x0.

weighted_norms(scenario, rho, a, ell, m_max, ...)
    X, Y, Z norms of the initial layer data of a scenario.

run_scenario(config_text, output_dir)
    Full coupled run; returns the run summary and the emitted files.

=== ERROR RESPONSE FORMAT ===

Tools never raise. Failures come back as

{
    "error": "ERROR_CODE",
    "message": "Human-readable error description"
}

Common error codes:
- INVALID_INPUT: Parameter validation failed
- INVALID_CONFIG: Configuration could not be parsed or violates a constraint
- INVALID_PARAMETER, INVALID_GRID, WEIGHT_OVERFLOW: rejected by a solver module
- CFL_VIOLATION, NON_FINITE: the run stopped on a numerical failure
- RUN_FAILED: anything unexpected
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Optional

from dotenv import load_dotenv

from . import pipeline
from .analytic_norms import NormParams, lifespan_estimate, norm_report
from .artifacts import MANIFEST_NAME
from .config import load_config, validate_config_text
from .core_fields import Grid
from .errors import RotblError
from .scenarios import SCENARIOS, build_initial_data
from .utils import env_output_dir

load_dotenv()

logger = logging.getLogger(__name__)


def _finite(value: Any) -> Any:
    """Replace NaN and infinities by None so the result stays valid JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


def load_tools(mcp_server):
    """
    Register all MCP tools with the server.

    Args:
        mcp_server: The FastMCP server instance to register tools with.
    """

    @mcp_server.tool
    def health() -> dict:
        """
        Check the health of the MCP server.

        Returns:
            dict: status ("healthy") and a human-readable message.
        """
        return {
            "status": "healthy",
            "message": "rotbl MCP server is healthy.",
        }

    @mcp_server.tool
    def validate_config(config_text: str) -> dict:
        """
        Check an INI run configuration without running it.

        Args:
            config_text (str): contents of the config file ([grid], [physics], [time],
                [regularization], [sweep], [run] sections).

        Returns:
            dict: valid (bool) and violations (list of str, with line numbers where known).
        """
        violations = validate_config_text(config_text or "")
        return {"valid": not violations, "violations": violations}

    @mcp_server.tool
    def lifespan(x0: float, rho0: float = 1.0, tau: float = 3.0) -> dict:
        """
        Lifespan estimate T* = min(rho0/2, tau/3)^2 / (4 (3 x0^2 + x0^4)).

        Args:
            x0 (float): X-norm of the initial layer data, nonnegative.
            rho0 (float): analyticity radius of the layer data.
            tau (float): analyticity radius of the outer data.

        Returns:
            dict: T_star (None when infinite) and infinite (bool).
        """
        try:
            t_star = lifespan_estimate(x0, rho0, tau)
        except RotblError as e:
            return e.to_dict()
        return {"T_star": _finite(t_star), "infinite": math.isinf(t_star)}

    @mcp_server.tool
    def weighted_norms(
        scenario: str = "small_data",
        rho: float = 0.5,
        a: float = 0.25,
        ell: float = 1.0,
        m_max: int = 8,
        n_x1: int = 64,
        n_y: int = 65,
        n_x3: int = 65,
        L: float = 10.0,
        Y: float = 8.0,
        H: float = 8.0,
        seed: int = 0,
    ) -> dict:
        """
        X, Y and Z norms of the initial layer unknown of a named scenario.

        Args:
            scenario (str): one of zero, shear, small_data, heat_limit.
            rho, a, ell, m_max: norm parameters (radius, Gaussian weight, polynomial
                weight exponent in (1/2, 1], truncation order).
            n_x1, n_y, n_x3, L, Y, H: grid of the layer and of the outer flow.
            seed (int): seed of the scenario phases.

        Returns:
            dict: X, Y, Z and any resolution warnings.
        """
        if scenario not in SCENARIOS:
            return {
                "error": "INVALID_INPUT",
                "message": f"unknown scenario {scenario!r}, expected one of {sorted(SCENARIOS)}",
            }
        try:
            params = NormParams(rho=rho, a=a, ell=ell, m_max=m_max)
            data = build_initial_data(
                SCENARIOS[scenario], Grid(n_x1, n_x3, L, H), Grid(n_x1, n_y, L, Y), a, seed
            )
            report = norm_report(data.u, params)
        except RotblError as e:
            return e.to_dict()
        return _finite({**report.as_row(), "warnings": list(report.warnings)})

    @mcp_server.tool
    def run_scenario(config_text: str, output_dir: Optional[str] = None) -> dict:
        """
        Run the coupled pipeline for one configuration and return its summary.

        Args:
            config_text (str): INI configuration; empty for all defaults.
            output_dir (Optional[str]): where artifacts go; falls back to ROTBL_OUT,
                then to the config's output_dir.

        Returns:
            dict: run summary (horizon, final norms, identity status, fitted constants),
                out_dir and the list of emitted files.
        """
        try:
            cfg = load_config(text=config_text, output_dir=output_dir or env_output_dir())
            result = pipeline.run(cfg)
        except RotblError as e:
            return e.to_dict()
        except Exception as e:
            logger.exception("run_scenario failed")
            return {"error": "RUN_FAILED", "message": str(e)}
        manifest = json.loads((Path(result.out_dir) / MANIFEST_NAME).read_text())
        return _finite(
            {
                **result.summary(),
                "out_dir": str(result.out_dir),
                "files": [entry["path"] for entry in manifest["files"]],
            }
        )
