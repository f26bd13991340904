"""Tests for pipeline functions."""

import tempfile
from pathlib import Path

# Import test framework from parent
from ..framework import (
    test,
    assert_raises,
)

# Import functions under test
from ..pipeline import run_pipeline
from ..config import default_config
from ..errors import DuplicateObservation, IoError, StageFailed
from ..report import FAILED_MARKER, META_FILE

# Small panel and few null-moment draws keep a full run fast
FAST = {"synth_entities": 8, "moment_reps": 50, "horizon": 6, "seed": 11}

FULL_RUN_KEYS = [
    "table1_data",
    "table2_unit_root",
    "table3_pedroni",
    "table4_vecm",
    "table4_long_run",
    "table5_fevd",
    "graph1_irf",
    "graph2_roots",
    "table6_granger",
    "table7_serial_lm",
    "table8_white",
    "table9_homogeneity",
    "summary",
]


def _read_all(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != META_FILE}


# ============================================================================
# Tests for run_pipeline
# ============================================================================


@test()
def test_full_run_tables_and_decisions():
    """A calibrated run produces every table and records each stage's decision"""
    bundle = run_pipeline(default_config(**FAST), write=False)
    assert bundle.status == "OK"
    assert bundle.keys == FULL_RUN_KEYS
    decisions = dict(bundle.table("summary").rows)
    for key in ("data", "unit_root", "cointegration", "long_run_dummy", "adjustment", "stability", "granger"):
        assert key in decisions, key
    assert decisions["status"] == "OK"
    assert decisions["data"].startswith("8 entities, 1980-2022")
    assert decisions["stability"].startswith("3 unit roots")


@test()
def test_runs_are_byte_identical():
    """Two runs of one configuration write identical files apart from the metadata"""
    cfg = default_config(**FAST, formats=("csv", "json"))
    with tempfile.TemporaryDirectory() as tmp:
        first, second = Path(tmp) / "a", Path(tmp) / "b"
        run_pipeline(cfg, out_dir=first)
        run_pipeline(cfg, out_dir=second)
        files = _read_all(first)
        assert "table5_fevd.csv" in files and "config.resolved.toml" in files
        assert files == _read_all(second)
        assert (first / META_FILE).exists()
        assert not (first / FAILED_MARKER).exists()


@test()
def test_single_stage_pulls_dependencies():
    """Running dynamics alone estimates the VECM first and marks skipped verdicts"""
    bundle = run_pipeline(default_config(**FAST), ["dynamics"], write=False)
    assert bundle.keys == [
        "table1_data", "table4_vecm", "table4_long_run", "table5_fevd", "graph1_irf", "graph2_roots", "summary",
    ]
    assert bundle.table("table5_fevd").context["cointegration"] == "not run"


@test()
def test_walks_not_cointegrated():
    """Independent random walks give a no-cointegration verdict"""
    cfg = default_config(**{**FAST, "synth_entities": 20, "moment_reps": 500}, synth_kind="independent_walks")
    bundle = run_pipeline(cfg, ["cointegration"], write=False)
    decisions = dict(bundle.table("summary").rows)
    assert decisions["cointegration"].startswith("no cointegration"), decisions["cointegration"]


@test()
def test_reduced_rank_two_relations():
    """The reduced-rank estimator carries two cointegrating columns"""
    cfg = default_config(**FAST, estimator="reduced_rank", rank=2)
    bundle = run_pipeline(cfg, ["vecm"], write=False)
    columns = bundle.table("table4_vecm").columns
    assert columns[1:3] == ("CointEq1", "CointEq2")


@test()
def test_failed_stage_writes_marker():
    """A failing ingest stage leaves the FAILED marker and a summary naming the stage"""
    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "panel.csv"
        data.write_text(
            "entity,year,variable,value\nA,2000,co2,1\nA,2000,co2,2\n", encoding="utf-8"
        )
        out = Path(tmp) / "out"
        cfg = default_config(synth_kind=None, input=str(data), formats=("csv",))
        e = assert_raises(StageFailed, run_pipeline, cfg, out_dir=out)
        assert e.stage == "ingest"
        assert isinstance(e.cause, DuplicateObservation)
        assert e.exit_code == 2
        assert (out / FAILED_MARKER).read_text(encoding="utf-8").startswith("ingest:")
        assert "FAILED at ingest" in (out / "summary.csv").read_text(encoding="utf-8")


@test()
def test_missing_input_fails_ingest():
    """A missing data file fails the ingest stage with an I/O error"""
    cfg = default_config(synth_kind=None, input="/nonexistent/panelbreak/panel.csv")
    e = assert_raises(StageFailed, run_pipeline, cfg, write=False)
    assert isinstance(e.cause, IoError)
