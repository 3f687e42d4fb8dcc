import logging
import os

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

ENV_OUTPUT_DIR = "ROTBL_OUT"
ENV_LOG_LEVEL = "ROTBL_LOG_LEVEL"


def configure_logging(level: str | int | None = None) -> None:
    """Install one stream handler on the root logger.

    ``level`` falls back to ROTBL_LOG_LEVEL, then INFO. Calling it again only
    changes the level.
    """
    if level is None:
        level = os.getenv(ENV_LOG_LEVEL, "INFO")
    if isinstance(level, str):
        level = level.upper()
    root = logging.getLogger()
    root.setLevel(level)
    if not any(getattr(h, "_rotbl", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._rotbl = True
        root.addHandler(handler)


def env_output_dir() -> str | None:
    """Output directory from ROTBL_OUT, None when unset or empty."""
    return os.getenv(ENV_OUTPUT_DIR) or None
