"""
Tests for field dumps, CSV output and the manifest.

Run with: pytest tests/test_artifacts.py -v
"""

import numpy as np
import pytest

from rotbl.artifacts import (
    HEADER_BYTES,
    MANIFEST_NAME,
    read_csv,
    read_dump,
    verify_manifest,
    write_csv,
    write_dump,
    write_field_csv,
    write_manifest,
    write_text,
    write_trace_history,
)
from rotbl.core_fields import Field2D, Grid, TraceField
from rotbl.errors import DumpFormatError


def _field() -> Field2D:
    grid = Grid(16, 9, L=3.5, Y=2.25)
    return Field2D.from_function(grid, lambda x1, y: np.sin(x1) * y + 1.0 / 3.0, "sample")


# ============================================================================
# Test: Dumps
# ============================================================================


def test_dump_round_trip(tmp_path):
    f = _field()
    path = write_dump(tmp_path / "f.bin", f)
    assert path.stat().st_size == HEADER_BYTES + 16 * 9 * 8
    back = read_dump(path)
    assert back.grid == f.grid
    assert back.label == "sample"
    assert np.array_equal(back.values, f.values)


def test_dump_rejects_bad_magic(tmp_path):
    path = write_dump(tmp_path / "f.bin", _field())
    raw = bytearray(path.read_bytes())
    raw[:6] = b"NOTOK1"
    path.write_bytes(bytes(raw))
    with pytest.raises(DumpFormatError):
        read_dump(path)


def test_dump_rejects_truncated_payload(tmp_path):
    path = write_dump(tmp_path / "f.bin", _field())
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DumpFormatError):
        read_dump(path)
    path.write_bytes(b"ROTBL1")
    with pytest.raises(DumpFormatError) as exc:
        read_dump(path)
    assert exc.value.code == "BAD_DUMP"


# ============================================================================
# Test: CSV and manifest
# ============================================================================


def test_csv_formats_floats(tmp_path):
    rows = [{"step": 1, "X": 0.1, "Y": None}]
    path = write_csv(tmp_path / "n.csv", rows, ("step", "X", "Y"))
    assert read_csv(path) == [{"step": "1", "X": "1.000000000000e-01", "Y": ""}]


def test_field_csv_rows(tmp_path):
    f = _field()
    rows = read_csv(f.to_csv(tmp_path / "f.csv"))
    assert len(rows) == 16 * 9
    assert list(rows[0]) == ["x1", "y", "value"]
    # x1 varies slowest
    assert float(rows[0]["x1"]) == float(rows[8]["x1"]) == -3.5
    assert float(rows[8]["y"]) == pytest.approx(2.25)
    assert float(rows[9]["x1"]) == pytest.approx(f.grid.x1_nodes[1])
    assert float(rows[10]["value"]) == pytest.approx(f.values[1, 1], rel=1e-11)
    assert write_field_csv(tmp_path / "g.csv", f).read_text() == (tmp_path / "f.csv").read_text()


def test_trace_history_rows(tmp_path):
    grid = _field().grid
    history = [TraceField(grid, np.full(16, k)) for k in range(3)]
    doubled = [TraceField(grid, 2.0 * h.values) for h in history]
    path = write_trace_history(tmp_path / "t.csv", [0.0, 0.5, 1.0], history, {"twice": doubled})
    rows = read_csv(path)
    assert len(rows) == 3 * 16
    assert list(rows[0]) == ["t", "x1", "value", "twice"]
    last = rows[-1]
    assert (float(last["t"]), float(last["value"]), float(last["twice"])) == (1.0, 2.0, 4.0)
    with pytest.raises(ValueError):
        write_trace_history(tmp_path / "bad.csv", [0.0], history)


def test_manifest_detects_changes(tmp_path):
    write_text(tmp_path / "a.txt", "alpha\n")
    write_dump(tmp_path / "final" / "f.bin", _field())
    write_manifest(tmp_path, "abc", {"scenario": "zero"})
    assert (tmp_path / MANIFEST_NAME).exists()
    assert verify_manifest(tmp_path) == []

    write_text(tmp_path / "a.txt", "beta\n")
    write_text(tmp_path / "b.txt", "new\n")
    problems = verify_manifest(tmp_path)
    assert "a.txt: checksum mismatch" in problems
    assert "b.txt: not listed" in problems

    (tmp_path / "final" / "f.bin").unlink()
    assert "final/f.bin: missing" in verify_manifest(tmp_path)
