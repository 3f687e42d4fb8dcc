"""rotbl: boundary-layer simulation and verification toolkit for fast rotating fluids."""

__version__ = "0.1.0"
