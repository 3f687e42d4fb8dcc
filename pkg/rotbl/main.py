"""
Command-line entry point, installed as ``rotbl``.

Subcommands:
    run       coupled run of one configuration
    sweep     run plus the eps1 regularization study, composites on a worker pool
    validate  list every violated constraint of a config file without running
    norms     recompute X, Y, Z from the snapshot dumps of a finished run
    serve     start the MCP server with uvicorn

Usage:
    uv run rotbl run --config smalldata.cfg --out out/small
    uv run rotbl sweep --config smalldata.cfg --eps 1e-2,3e-3,1e-3,3e-4
    uv run rotbl validate --config smalldata.cfg
    uv run rotbl serve --port 8000

Exit status is 0 on success, 2 on a rejected configuration or numerical
failure (``CODE: message`` on stderr), 1 on anything unexpected.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

from . import pipeline
from .config import load_config, validate_config_text
from .errors import RotblError
from .utils import configure_logging, env_output_dir

logger = logging.getLogger("rotbl")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file (defaults apply when omitted)")
    parser.add_argument("--out", help="output directory (overrides ROTBL_OUT and the file)")
    parser.add_argument("--eps", help="comma separated eps list for the composite residual")
    parser.add_argument("--seed", type=int, help="seed of the scenario phases")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotbl", description="Boundary-layer toolkit for fast rotating fluids"
    )
    parser.add_argument(
        "--log-level", default=None, help="logging level (default: ROTBL_LOG_LEVEL or INFO)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="coupled run of one configuration")
    _add_run_flags(run)
    run.set_defaults(handler=_cmd_run)

    sweep = sub.add_parser("sweep", help="run plus eps1 regularization sweep")
    _add_run_flags(sweep)
    sweep.set_defaults(handler=_cmd_sweep)

    validate = sub.add_parser("validate", help="check a config without running")
    validate.add_argument("--config", required=True)
    validate.set_defaults(handler=_cmd_validate)

    norms = sub.add_parser("norms", help="recompute norms from snapshot dumps")
    _add_run_flags(norms)
    norms.set_defaults(handler=_cmd_norms)

    serve = sub.add_parser("serve", help="start the MCP server")
    serve.add_argument(
        "--port", type=int, default=8000, help="Port to run the server on (default: 8000)"
    )
    serve.add_argument("--host", default="0.0.0.0")
    serve.set_defaults(handler=_cmd_serve)
    return parser


def _config(args: argparse.Namespace):
    return load_config(
        args.config,
        output_dir=args.out or env_output_dir(),
        eps=args.eps,
        seed=args.seed,
    )


def _print_summary(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def _cmd_run(args: argparse.Namespace) -> int:
    result = pipeline.run(_config(args))
    _print_summary({**result.summary(), "out_dir": str(result.out_dir)})
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    result = pipeline.sweep(_config(args))
    _print_summary({**result.summary(), "out_dir": str(result.out_dir)})
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    violations = validate_config_text(Path(args.config).read_text())
    if not violations:
        print(f"{args.config}: ok")
        return 0
    for line in violations:
        print(f"{args.config}: {line}")
    return 2


def _cmd_norms(args: argparse.Namespace) -> int:
    cfg = _config(args)
    rows = pipeline.recompute_norms(cfg)
    print(f"recomputed norms of {len(rows)} snapshots in {cfg.output_dir}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run(
        "rotbl.app:combined_app",  # Import path to the combined FastAPI application
        host=args.host,
        port=args.port,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except RotblError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2
    except Exception:
        logger.exception("unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
