"""
Tests for configuration parsing and validation.

Run with: pytest tests/test_config.py -v
"""

import pytest

from rotbl.config import RunConfig, load_config, parse_config_text, validate_config_text
from rotbl.errors import ConfigError

SAMPLE = """\
[grid]
n_x1 = 32
n_y = 33

[physics]
ell = 0.75
a0 = 0.2

[sweep]
eps = 1e-2, 1e-3
"""


# ============================================================================
# Test: Parsing
# ============================================================================


def test_defaults():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.scenario == "small_data"
    assert cfg.eps == (1e-2, 3e-3, 1e-3, 3e-4)
    assert cfg.T is None


def test_parse_sample():
    cfg = load_config(text=SAMPLE)
    assert (cfg.n_x1, cfg.n_y) == (32, 33)
    assert cfg.ell == 0.75
    assert cfg.eps == (1e-2, 1e-3)
    assert cfg.layer_grid().n_y == 33
    assert cfg.outer_grid().Y == cfg.H


def test_parse_error_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[grid]\nn_x1 64\n")
    assert exc.value.lineno == 2
    assert exc.value.code == "INVALID_CONFIG"


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as exc:
        load_config(text="[grid]\nn_x1 = 32\nwidth = 3\n")
    assert exc.value.lineno == 3
    with pytest.raises(ConfigError) as exc:
        load_config(text="[grid]\nn_x1 = 32\n\n[extra]\nfoo = 1\n")
    assert exc.value.lineno == 4


def test_overrides_replace_file_values(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SAMPLE)
    cfg = load_config(path, eps="3e-3, 1e-3", seed=7, output_dir=None)
    assert cfg.eps == (3e-3, 1e-3)
    assert cfg.seed == 7
    assert cfg.n_x1 == 32


def test_to_ini_round_trip():
    cfg = load_config(text=SAMPLE, T=0.05, scenario="shear")
    again = load_config(text=cfg.to_ini())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_config_hash_changes_with_values():
    assert RunConfig().config_hash() != RunConfig(seed=1).config_hash()


# ============================================================================
# Test: Validation
# ============================================================================


def test_validate_clean_and_empty():
    assert validate_config_text("") == []
    assert validate_config_text(SAMPLE) == []


def test_validate_reports_range_with_line():
    problems = validate_config_text("[grid]\nn_x1 = 32\n\n[physics]\nell = 0.4\n")
    assert len(problems) == 1
    assert problems[0].startswith("line 5: ell:")


def test_validate_reports_parse_error():
    problems = validate_config_text("[grid]\nn_x1 64\n")
    assert len(problems) == 1
    assert problems[0].startswith("line 2:")


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[physics]\na0 = 10\n", "a0*Y^2"),
        ("[grid]\nn_x1 = 48\n", "power of two"),
        ("[sweep]\neps = 1e-3, 1e-2\n", "strictly decreasing"),
        ("[regularization]\neps1_schedule = 1e-2, 1e-3\n", "at least 3 values"),
        ("[run]\nscenario = vortex\n", "unknown scenario"),
        ("[time]\ndt = 0.1\nT = 0.01\n", "shorter than one step"),
        ("[physics]\nrho0 = 0.001\n", "rho_floor"),
    ],
)
def test_cross_field_violations(text, fragment):
    problems = validate_config_text(text)
    assert any(fragment in p for p in problems), problems
    with pytest.raises(ConfigError):
        load_config(text=text)
