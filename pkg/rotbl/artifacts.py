"""
Output files of a run: CSV histories, binary field dumps and the manifest.

Dump layout: a 64-byte ASCII header

    ROTBL1 <n_x1> <n_y> <L> <Y> <label>

padded with spaces, followed by the field as little-endian float64 in
(i_x1, i_y) C order. The manifest lists every emitted file with its sha256
next to the hash of the resolved configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core_fields import Field2D, Grid, TraceField
from .errors import DumpFormatError

logger = logging.getLogger(__name__)

DUMP_MAGIC = "ROTBL1"
HEADER_BYTES = 64
MANIFEST_NAME = "manifest.json"


# ============================================================================
# Binary dumps
# ============================================================================


def write_dump(path: str | Path, f: Field2D, label: str | None = None) -> Path:
    g = f.grid
    label = (label or f.label or "field").replace(" ", "_")
    header = f"{DUMP_MAGIC} {g.n_x1} {g.n_y} {g.L!r} {g.Y!r} {label}"
    if len(header) > HEADER_BYTES:
        raise DumpFormatError(f"dump header longer than {HEADER_BYTES} bytes: {header!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(header.ljust(HEADER_BYTES).encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_dump(path: str | Path) -> Field2D:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_BYTES:
        raise DumpFormatError(f"{path}: shorter than the {HEADER_BYTES}-byte header")
    parts = raw[:HEADER_BYTES].decode("ascii", errors="replace").split()
    if len(parts) != 6 or parts[0] != DUMP_MAGIC:
        raise DumpFormatError(f"{path}: not a {DUMP_MAGIC} dump")
    try:
        grid = Grid(int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
    except ValueError as exc:
        raise DumpFormatError(f"{path}: bad header {parts!r}") from exc
    body = raw[HEADER_BYTES:]
    expected = grid.n_x1 * grid.n_y * 8
    if len(body) != expected:
        raise DumpFormatError(f"{path}: payload has {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f8").reshape(grid.shape)
    return Field2D(grid, values, parts[5])


# ============================================================================
# CSV and text
# ============================================================================


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12e}"
    return str(value)


def write_csv(path: str | Path, rows: Sequence[dict], fieldnames: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fieldnames = list(fieldnames or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in fieldnames})
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_field_csv(path: str | Path, f: Field2D) -> Path:
    """One row per node: x1, y, value, with x1 varying slowest."""
    x1, y = f.grid.mesh()
    rows = [
        {"x1": a, "y": b, "value": v}
        for a, b, v in zip(x1.ravel(), y.ravel(), f.values.ravel())
    ]
    return write_csv(path, rows, ("x1", "y", "value"))


def write_trace_history(
    path: str | Path,
    times: Sequence[float],
    history: Sequence[TraceField],
    extra: dict[str, Sequence[TraceField]] | None = None,
) -> Path:
    """Trace history as rows t, x1, value; ``extra`` adds columns sampled at the same times."""
    extra = extra or {}
    if len(times) != len(history) or any(len(v) != len(history) for v in extra.values()):
        raise ValueError("trace history columns have different lengths")
    rows = []
    for k, (t, trace) in enumerate(zip(times, history)):
        for i, x1 in enumerate(trace.grid.x1_nodes):
            row = {"t": t, "x1": x1, "value": trace.values[i]}
            row.update({name: column[k].values[i] for name, column in extra.items()})
            rows.append(row)
    return write_csv(path, rows, ("t", "x1", "value", *extra))


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# ============================================================================
# Manifest
# ============================================================================


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _emitted(out_dir: Path) -> Iterable[Path]:
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != MANIFEST_NAME:
            yield path


def write_manifest(out_dir: str | Path, config_hash: str, extra: dict | None = None) -> Path:
    """List every file under ``out_dir`` with size and sha256."""
    out_dir = Path(out_dir)
    files = [
        {
            "path": path.relative_to(out_dir).as_posix(),
            "bytes": path.stat().st_size,
            "sha256": sha256_file(path),
        }
        for path in _emitted(out_dir)
    ]
    manifest = {"config_hash": config_hash, "files": files, **(extra or {})}
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info(f"manifest: {len(files)} files in {out_dir}")
    return path


def verify_manifest(out_dir: str | Path) -> list[str]:
    """Files whose checksum no longer matches the manifest, or that are missing from it."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST_NAME).read_text())
    listed = {entry["path"]: entry["sha256"] for entry in manifest["files"]}
    problems = []
    for path in _emitted(out_dir):
        rel = path.relative_to(out_dir).as_posix()
        if rel not in listed:
            problems.append(f"{rel}: not listed")
        elif sha256_file(path) != listed[rel]:
            problems.append(f"{rel}: checksum mismatch")
    for rel in listed:
        if not (out_dir / rel).exists():
            problems.append(f"{rel}: missing")
    return problems
