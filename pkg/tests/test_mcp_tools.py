"""
Tests for the rotbl MCP tools.

The tools are called in process through a FastMCP client bound to the server
object, so no port or subprocess is needed. Every tool returns a JSON object;
failures come back as {"error": CODE, "message": ...}.

Run with: pytest tests/test_mcp_tools.py -v
"""

import asyncio
import json
from typing import Any, Dict

import pytest
from fastmcp import Client

from rotbl.app import mcp_server

EXPECTED_TOOLS = {"health", "validate_config", "lifespan", "weighted_norms", "run_scenario"}

SMALL_RUN = """\
[grid]
n_x1 = 64
n_y = 33
n_x3 = 33

[time]
dt = 0.001
T = 0.003

[sweep]
eps = 1e-2, 3e-3
"""


def _extract_text_from_result(result) -> str:
    """
    Extract text content from a tool call result.

    Args:
        result: CallToolResult (or a bare content list on older clients)

    Returns:
        str: The text content from the result
    """
    content = getattr(result, "content", result)
    if isinstance(content, list):
        for item in content:
            if hasattr(item, "text"):
                return item.text
    return ""


async def _list_tools():
    async with Client(mcp_server) as client:
        return await client.list_tools()


async def _call(name: str, arguments: Dict[str, Any]):
    async with Client(mcp_server) as client:
        return await client.call_tool(name, arguments)


def call_tool(name: str, **arguments) -> Dict[str, Any]:
    """Call a tool and parse its JSON payload."""
    result = asyncio.run(_call(name, arguments))
    text = _extract_text_from_result(result)
    assert text, f"{name} returned no text content"
    return json.loads(text)


# ============================================================================
# Test: Tool listing
# ============================================================================


def test_list_tools():
    tools = asyncio.run(_list_tools())
    names = {tool.name for tool in tools}
    assert names == EXPECTED_TOOLS
    for tool in tools:
        assert tool.description, f"{tool.name} has no description"
    print(f"✅ {len(names)} tools registered")


# ============================================================================
# Test: health / validate_config / lifespan
# ============================================================================


def test_health():
    data = call_tool("health")
    assert data["status"] == "healthy"


def test_validate_config_reports_violations():
    data = call_tool("validate_config", config_text="[physics]\nell = 0.4\n")
    assert data["valid"] is False
    assert len(data["violations"]) == 1
    assert "ell" in data["violations"][0]


def test_validate_config_accepts_defaults():
    data = call_tool("validate_config", config_text="")
    assert data == {"valid": True, "violations": []}


def test_lifespan():
    assert call_tool("lifespan", x0=0.0) == {"T_star": None, "infinite": True}
    data = call_tool("lifespan", x0=1.0, rho0=1.0, tau=3.0)
    assert data["T_star"] == pytest.approx(0.015625)
    assert data["infinite"] is False


def test_lifespan_rejects_negative_size():
    data = call_tool("lifespan", x0=-1.0)
    assert data["error"] == "INVALID_PARAMETER"
    assert "message" in data


# ============================================================================
# Test: weighted_norms
# ============================================================================


def test_weighted_norms_of_zero_scenario():
    data = call_tool("weighted_norms", scenario="zero", n_x1=32, n_y=17, n_x3=17)
    assert (data["X"], data["Y"], data["Z"]) == (0.0, 0.0, 0.0)
    assert data["warnings"] == []


def test_weighted_norms_of_small_data():
    data = call_tool("weighted_norms", scenario="small_data", n_y=33, n_x3=33, m_max=4)
    assert data["X"] > 0.0
    assert data["Z"] > 0.0


def test_weighted_norms_errors():
    assert call_tool("weighted_norms", scenario="vortex")["error"] == "INVALID_INPUT"
    assert call_tool("weighted_norms", rho=-1.0)["error"] == "INVALID_PARAMETER"
    assert call_tool("weighted_norms", n_x1=48)["error"] == "INVALID_GRID"


# ============================================================================
# Test: run_scenario
# ============================================================================


def test_run_scenario(tmp_path):
    data = call_tool("run_scenario", config_text=SMALL_RUN, output_dir=str(tmp_path))
    assert "error" not in data, data
    assert data["n_steps"] == 3
    assert data["out_dir"] == str(tmp_path)
    assert "norms.csv" in data["files"]
    assert "summary.json" in data["files"]
    assert (tmp_path / "manifest.json").exists()


def test_run_scenario_rejects_bad_config(tmp_path):
    data = call_tool("run_scenario", config_text="[grid]\nn_x1 = 48\n", output_dir=str(tmp_path))
    assert data["error"] == "INVALID_CONFIG"
