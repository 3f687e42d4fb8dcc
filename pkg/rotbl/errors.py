"""
Error and warning taxonomy for rotbl.

Every hard failure raised by the toolkit is a ``RotblError`` carrying a stable
upper-snake ``code``. The CLI prints ``CODE: message`` and the MCP tools return
the same pair as ``{"error": CODE, "message": ...}``.

Soft numerical problems (decay checks, spectral tails, compatibility residuals)
are not exceptions; they are emitted as warnings of the categories below and
collected into the run report.
"""

from __future__ import annotations


class RotblError(Exception):
    """Base class for all toolkit errors."""

    code = "ROTBL_ERROR"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class GridError(RotblError, ValueError):
    code = "INVALID_GRID"


class ParameterError(RotblError, ValueError):
    code = "INVALID_PARAMETER"


class OperatorBoundsError(RotblError, ValueError):
    code = "BOUNDS"


class WeightOverflowError(RotblError, ValueError):
    code = "WEIGHT_OVERFLOW"


class StateMismatchError(RotblError, ValueError):
    code = "STATE_MISMATCH"


class CompatibilityError(RotblError, ValueError):
    code = "INCOMPATIBLE_DATA"


class DumpFormatError(RotblError, ValueError):
    code = "BAD_DUMP"


class CFLViolationError(RotblError):
    """Raised when a requested step exceeds the admissible time step."""

    code = "CFL_VIOLATION"

    def __init__(self, dt: float, dt_max: float, where: str):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"{where}: dt={dt:.3e} exceeds the admissible dt={dt_max:.3e}")


class NonFiniteError(RotblError):
    """Raised when a solver produces NaN or Inf; the run is aborted."""

    code = "NON_FINITE"

    def __init__(self, where: str, step: int | None = None):
        self.step = step
        suffix = f" at step {step}" if step is not None else ""
        super().__init__(f"{where}: non-finite values{suffix}, run aborted")


class ResolutionError(RotblError):
    """Raised when a grid cannot resolve what is asked of it."""

    code = "UNDER_RESOLVED"

    def __init__(self, message: str, suggested: dict | None = None):
        self.suggested = suggested or {}
        if self.suggested:
            hint = ", ".join(f"{k}={v}" for k, v in self.suggested.items())
            message = f"{message} (suggested: {hint})"
        super().__init__(message)


class ConfigError(RotblError):
    code = "INVALID_CONFIG"

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


# ============================================================================
# Warning categories
# ============================================================================


class TruncationWarning(UserWarning):
    """Data does not decay where the truncated domain ends."""


class ResolutionWarning(UserWarning):
    """Spectral tail or derivative content is not resolved on the grid."""


class CompatibilityWarning(UserWarning):
    """A compatibility residual exceeded its tolerance."""
