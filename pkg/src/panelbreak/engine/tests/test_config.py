"""Tests for config and registry functions."""

import os
import tempfile
from dataclasses import replace
from pathlib import Path

# Import test framework from parent
from ..framework import (
    test,
    assert_raises,
)

# Import functions under test
from ..config import (
    RunConfig,
    config_hash,
    default_config,
    dump_config,
    load_config,
    resolved_config_text,
    write_config,
)
from ..registry import resolve_stages, stage_names
from ..errors import InvalidSpec, IoError, ThresholdOutOfRange

MAPPING = {"CO2": "co2", "EN": "energy_use", "GDP": "gdp", "POP": "population"}


def _write(directory: str, name: str, text: str) -> Path:
    path = Path(directory) / name
    path.write_text(text, encoding="utf-8")
    return path


# ============================================================================
# Tests for RunConfig
# ============================================================================


@test()
def test_default_config_validates():
    """Defaults use the calibrated synthetic panel and the canonical model"""
    cfg = default_config()
    assert cfg.synth_kind == "vecm_calibrated"
    assert cfg.input is None
    spec = cfg.model_spec()
    assert spec.exogenous_dummies == ("paris_2015",)
    assert spec.lag_order == 2 and spec.rank == 1
    assert cfg.dgp_spec().seed == cfg.seed


@test()
def test_exactly_one_source():
    """Input and synth_kind are mutually exclusive and one is required"""
    assert_raises(InvalidSpec, RunConfig)
    assert_raises(InvalidSpec, RunConfig, input="panel.csv", synth_kind="cointegrated", mapping=MAPPING)
    assert_raises(InvalidSpec, default_config, synth_kind="garch")


@test()
def test_input_requires_mapping():
    """Every endogenous variable needs a mapped input column; the default mapping is the identity"""
    assert_raises(InvalidSpec, RunConfig, input="panel.csv", mapping={"CO2": "co2"})
    assert RunConfig(input="panel.csv").mapping["gdp"] == "gdp"
    assert RunConfig(input="panel.csv", mapping=MAPPING).mapping == MAPPING


@test()
def test_threshold_inside_sample():
    """The policy threshold must fall inside the configured years"""
    assert_raises(ThresholdOutOfRange, default_config, dummy_threshold=2030)
    assert_raises(ThresholdOutOfRange, default_config, start_year=2016)
    assert_raises(InvalidSpec, default_config, start_year=2023)


@test()
def test_invalid_values():
    """Model, format and minimum checks surface as InvalidSpec"""
    assert_raises(InvalidSpec, default_config, rank=4)
    assert_raises(InvalidSpec, default_config, formats=("xlsx",))
    assert_raises(InvalidSpec, default_config, formats=())
    assert_raises(InvalidSpec, default_config, workers=0)
    assert_raises(InvalidSpec, default_config, log=("oil",))
    assert_raises(InvalidSpec, default_config, pedroni_moments="tabulated")


@test()
def test_published_moments_need_embedded_case():
    """Published Pedroni constants are only accepted for a regressor count that is embedded"""
    assert_raises(InvalidSpec, default_config, pedroni_moments="published")
    cfg = default_config(endogenous=("co2", "gdp"), pedroni_moments="published")
    assert cfg.pedroni_moments == "published"
    assert_raises(
        InvalidSpec, default_config,
        endogenous=("co2", "gdp"), pedroni_moments="published", pedroni_count_dummy=True,
    )


# ============================================================================
# Tests for load_config / write_config
# ============================================================================


@test()
def test_load_missing_file():
    """A missing configuration file is an I/O error"""
    assert_raises(IoError, load_config, "/nonexistent/panelbreak/run.toml")


@test()
def test_load_rejects_bad_toml():
    """Syntax errors, unknown keys and nested tables are configuration errors"""
    with tempfile.TemporaryDirectory() as tmp:
        assert_raises(InvalidSpec, load_config, _write(tmp, "bad.toml", "seed = [\n"))
        assert_raises(InvalidSpec, load_config, _write(tmp, "unknown.toml", 'synth_kind = "cointegrated"\nlags = 3\n'))
        nested = 'synth_kind = "cointegrated"\n[model]\nrank = 1\n'
        assert_raises(InvalidSpec, load_config, _write(tmp, "nested.toml", nested))
        wrong_type = 'synth_kind = "cointegrated"\nformats = 3\n'
        assert_raises(InvalidSpec, load_config, _write(tmp, "type.toml", wrong_type))


@test()
def test_load_relative_input():
    """A relative input path resolves against the configuration's directory"""
    text = 'input = "data/panel.csv"\n[mapping]\nCO2 = "co2"\nEN = "energy_use"\nGDP = "gdp"\nPOP = "population"\n'
    with tempfile.TemporaryDirectory() as tmp:
        cfg = load_config(_write(tmp, "run.toml", text))
        assert Path(cfg.input) == Path(tmp) / "data" / "panel.csv"
        assert cfg.mapping == MAPPING


@test()
def test_load_overrides():
    """Overrides replace file values before validation"""
    with tempfile.TemporaryDirectory() as tmp:
        path = _write(tmp, "run.toml", 'synth_kind = "cointegrated"\nseed = 1\n')
        assert load_config(path, {"seed": 5}).seed == 5
        assert_raises(InvalidSpec, load_config, path, {"rank": 0})


@test()
def test_write_then_load():
    """A written configuration loads back equal"""
    cfg = default_config(seed=7, log=("gdp",), ordering=("gdp", "co2", "energy_use", "population"))
    with tempfile.TemporaryDirectory() as tmp:
        path = write_config(cfg, Path(tmp) / "nested" / "run.toml")
        assert load_config(path) == cfg
    assert "ordering" not in dump_config(default_config())


# ============================================================================
# Tests for config_hash
# ============================================================================


@test()
def test_config_hash_ignores_output_keys():
    """Output directory, workers and formats do not change the hash"""
    cfg = default_config()
    same = replace(cfg, output_dir="elsewhere", workers=4, formats=("json",))
    assert config_hash(cfg) == config_hash(same)
    assert config_hash(cfg) != config_hash(default_config(seed=cfg.seed + 1))
    assert "output_dir" not in resolved_config_text(cfg)
    assert "seed = 2015" in resolved_config_text(cfg)


@test()
def test_config_hash_input_by_content():
    """Two copies of the same data hash alike; different data hash differently"""
    with tempfile.TemporaryDirectory() as tmp:
        a = _write(tmp, "a.csv", "entity,year,variable,value\nA,2000,CO2,1\n")
        b = _write(tmp, "b.csv", "entity,year,variable,value\nA,2000,CO2,1\n")
        c = _write(tmp, "c.csv", "entity,year,variable,value\nA,2000,CO2,2\n")
        hashes = [config_hash(RunConfig(input=str(p), mapping=MAPPING)) for p in (a, b, c)]
    assert hashes[0] == hashes[1]
    assert hashes[0] != hashes[2]


@test()
def test_environment_overrides():
    """PANELBREAK_WORKERS and PANELBREAK_MOMENT_REPS override configured values"""
    saved = {k: os.environ.get(k) for k in ("PANELBREAK_WORKERS", "PANELBREAK_MOMENT_REPS")}
    try:
        os.environ["PANELBREAK_WORKERS"] = "3"
        os.environ["PANELBREAK_MOMENT_REPS"] = "250"
        cfg = default_config().with_environment()
        assert cfg.workers == 3 and cfg.moment_reps == 250
        os.environ["PANELBREAK_WORKERS"] = "many"
        assert default_config(workers=2).with_environment().workers == 2
    finally:
        for key, value in saved.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value


# ============================================================================
# Tests for resolve_stages
# ============================================================================


@test()
def test_stage_order():
    """Stages are registered in execution order"""
    assert stage_names() == ["ingest", "unit_root", "cointegration", "vecm", "dynamics", "diagnostics"]


@test()
def test_resolve_stage_dependencies():
    """A single stage pulls in what it reads, in execution order"""
    assert resolve_stages(["dynamics"]) == ["ingest", "vecm", "dynamics"]
    assert resolve_stages(["diagnostics", "unit_root"]) == ["ingest", "unit_root", "vecm", "diagnostics"]
    assert resolve_stages(None) == stage_names()
    assert_raises(InvalidSpec, resolve_stages, ["forecast"])
