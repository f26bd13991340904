"""Tests for api_ingest API functions."""

import tempfile
from pathlib import Path

import numpy as np

# Import test framework from parent
from ..framework import (
    test,
    assert_close,
    assert_raises,
    panel_from_arrays,
)

# Import functions under test
from ..api_ingest import (
    build_policy_dummy,
    parse_long_csv,
    prepare_panel,
    write_long_csv,
)
from ..api_synth import DgpSpec, generate
from ..errors import (
    DuplicateObservation,
    IoError,
    MalformedRow,
    ThresholdOutOfRange,
    UnmappedVariable,
)

HEADER = "entity,year,variable,value\n"


def _parse_text(text: str, **kwargs):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "panel.csv"
        path.write_text(text, encoding="utf-8")
        return parse_long_csv(path, **kwargs)


# ============================================================================
# Tests for parse_long_csv
# ============================================================================


@test()
def test_parse_pivots_long_rows():
    """Rows become an (entity, year, variable) cube sorted by entity"""
    p = _parse_text(HEADER + "B,2001,gdp,2.5\nA,2000,gdp,1\nA,2001,gdp,1.5\nB,2000,gdp,\n")
    assert p.entities == ("A", "B")
    assert p.years == (2000, 2001)
    assert_close(p.get("gdp")[0], [1.0, 1.5], atol=0)
    assert p.observed("gdp")[1].tolist() == [False, True]


@test()
def test_parse_fills_year_gaps():
    """Years missing from the file become unobserved cells"""
    p = _parse_text(HEADER + "A,2000,gdp,1\nA,2003,gdp,4\n")
    assert p.years == (2000, 2001, 2002, 2003)
    assert p.observed("gdp")[0].tolist() == [True, False, False, True]


@test()
def test_parse_duplicate_line_number():
    """A repeated (entity, year, variable) reports the line of the repeat"""
    text = HEADER + "A,2000,gdp,1\nA,2001,gdp,2\nA,2000,gdp,3\n"
    e = assert_raises(DuplicateObservation, _parse_text, text)
    assert e.line == 4
    assert e.key == ("A", 2000, "gdp")


@test()
def test_parse_malformed_rows():
    """Bad years, values and headers are reported with their line"""
    e = assert_raises(MalformedRow, _parse_text, HEADER + "A,2000,gdp,1\nA,20x1,gdp,2\n")
    assert e.line == 3
    e = assert_raises(MalformedRow, _parse_text, HEADER + "A,2000,gdp,abc\n")
    assert e.line == 2
    assert_raises(MalformedRow, _parse_text, HEADER + "A,2000,gdp,inf\n")
    e = assert_raises(MalformedRow, _parse_text, "country,year,variable,value\nA,2000,gdp,1\n")
    assert e.line == 1
    assert_raises(MalformedRow, _parse_text, "")


@test()
def test_parse_missing_file():
    """A missing input is an I/O error"""
    assert_raises(IoError, parse_long_csv, "/nonexistent/panelbreak/input.csv")


@test()
def test_parse_mapping():
    """Mapped names are renamed; unmapped and missing required variables are errors"""
    text = HEADER + "A,2000,CO2,1\nA,2000,GDP,2\n"
    p = _parse_text(text, mapping={"CO2": "co2", "GDP": "gdp"}, required=("co2", "gdp"))
    assert p.variables == ("co2", "gdp")
    assert_raises(UnmappedVariable, _parse_text, text, mapping={"CO2": "co2"})
    assert_raises(UnmappedVariable, _parse_text, text, mapping={"CO2": "co2", "GDP": "gdp"}, required=("population",))


# ============================================================================
# Tests for write_long_csv
# ============================================================================


@test()
def test_write_then_parse_round_trip():
    """A written panel, missing cells included, parses back to the same values"""
    p = generate(DgpSpec(kind="vecm_calibrated", seed=3, n_entities=4, n_periods=15))
    values = p.values.copy()
    values[1, 3, 2] = np.nan
    p = panel_from_arrays({v: values[:, :, k] for k, v in enumerate(p.variables)}, first_year=1980)
    with tempfile.TemporaryDirectory() as tmp:
        path = write_long_csv(p, Path(tmp) / "sub" / "panel.csv")
        back = parse_long_csv(path)
    assert back.equals(p, atol=1e-12)
    assert not back.observed("gdp")[1, 3]


# ============================================================================
# Tests for build_policy_dummy
# ============================================================================


@test()
def test_policy_dummy_values():
    """Years 2013-2017 with threshold 2015 give [0, 0, 1, 1, 1] for every entity"""
    p = panel_from_arrays({"gdp": np.ones((2, 5))}, first_year=2013)
    d = build_policy_dummy(p, "paris_2015", 2015)
    assert d.get("paris_2015").tolist() == [[0, 0, 1, 1, 1], [0, 0, 1, 1, 1]]
    assert d.observed("paris_2015").all()


@test()
def test_policy_dummy_threshold_range():
    """The threshold must fall inside the data years; the first year is allowed"""
    p = panel_from_arrays({"gdp": np.ones((1, 5))}, first_year=2013)
    assert_raises(ThresholdOutOfRange, build_policy_dummy, p, "d", 2020)
    assert_raises(ThresholdOutOfRange, build_policy_dummy, p, "d", 2012)
    assert build_policy_dummy(p, "d", 2013).get("d").tolist() == [[1, 1, 1, 1, 1]]


# ============================================================================
# Tests for prepare_panel
# ============================================================================


@test()
def test_prepare_window_and_logs():
    """The year window is applied before logs and recorded in the notes"""
    data = np.exp(np.arange(20.0)).reshape(1, 20)
    p = prepare_panel(
        panel_from_arrays({"gdp": data}, first_year=1990),
        variables=["gdp"], start_year=1995, end_year=2006, log=["gdp"], min_obs=10,
    )
    assert p.years == tuple(range(1995, 2007))
    assert_close(p.get("gdp")[0], np.arange(5.0, 17.0), atol=1e-9)
    assert any("1995-2006" in n for n in p.notes)


@test()
def test_prepare_screens_short_entities():
    """Entities below the minimum run are excluded after interpolation"""
    data = np.ones((2, 12))
    data[0, 5] = np.nan
    data[1, 2:] = np.nan
    p = prepare_panel(panel_from_arrays({"gdp": data}), variables=["gdp"], interpolate=True, min_obs=10)
    assert p.entities == ("E001",)
    assert p.observed("gdp").all()
