"""
FastAPI application serving the rotbl MCP tools.

This module:
1. Creates the FastMCP server instance and registers the tools from rotbl/tools.py
2. Converts it to a streamable HTTP application
3. Combines the MCP routes with a plain FastAPI status route

Usage: uvicorn rotbl.app:combined_app (or ``rotbl serve --port 8000``)
"""

import logging

from fastapi import FastAPI, Request
from fastmcp import FastMCP

from .tools import load_tools

logger = logging.getLogger(__name__)

mcp_server = FastMCP(name="rotbl")

load_tools(mcp_server)

# MCP protocol over HTTP, mounted under /mcp
mcp_app = mcp_server.http_app()

# ============================================================================
# FastAPI Application Setup
# ============================================================================

app = FastAPI(
    title="rotbl",
    description="Boundary-layer toolkit for fast rotating fluids",
    version="0.1.0",
    lifespan=mcp_app.lifespan,
)


@app.get("/", include_in_schema=False)
async def serve_index():
    return {"message": "rotbl MCP server is running", "status": "healthy"}


combined_app = FastAPI(
    title="rotbl MCP App",
    routes=[
        *mcp_app.routes,
        *app.routes,
    ],
    lifespan=mcp_app.lifespan,
)


@combined_app.middleware("http")
async def log_requests(request: Request, call_next):
    response = await call_next(request)
    logger.debug(f"{request.method} {request.url.path} -> {response.status_code}")
    return response
