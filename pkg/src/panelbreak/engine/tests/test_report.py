"""Tests for report functions."""

import io
import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

# Import test framework from parent
from ..framework import (
    test,
    assert_close,
    assert_raises,
    random_stable_var,
)

# Import functions under test
from ..report import (
    FAILED_MARKER,
    META_FILE,
    ReportBundle,
    Table,
    fevd_table,
    format_cell,
    long_run_table,
    render_csv,
    render_json,
    render_markdown,
    render_report,
    round_shares,
    summary_table,
    vecm_table,
    write_bundle,
)
from ..api_dynamics import fevd
from ..api_ingest import build_policy_dummy
from ..api_synth import DgpSpec, generate
from ..api_vecm import ModelSpec, estimate_long_run, estimate_vecm
from ..errors import InvalidSpec

META = {"version": "1.0.0", "config_hash": "abc123", "seed": 1}


def _stats_table() -> Table:
    return Table(
        key="stats",
        title="Statistics",
        columns=("Name", "Value", "df", "Prob."),
        kinds=("text", "num", "df", "num"),
        rows=(("first", 1.23456789, 2.0, 0.5), ("second", -0.00001, 3.5, math.nan)),
        notes=("H0: nothing",),
        context={"cointegration": "not run"},
    )


def _vecm_estimate():
    spec = ModelSpec(lag_order=1)
    p = build_policy_dummy(generate(DgpSpec(kind="cointegrated", seed=31, n_entities=8, n_periods=60)))
    return estimate_vecm(p, spec, estimate_long_run(p, spec))


# ============================================================================
# Tests for format_cell / round_shares
# ============================================================================


@test()
def test_format_cell_kinds():
    """Four decimals, bracketed errors and t-ratios, NA for missing numbers"""
    assert format_cell(1.23456) == "1.2346"
    assert format_cell(-0.00001) == "0.0000"
    assert format_cell(0.123456, row_kind="se") == "(0.1235)"
    assert format_cell(-2.5, row_kind="t") == "[-2.5000]"
    assert format_cell(math.nan) == "NA"
    assert format_cell(math.inf) == "Inf"
    assert format_cell(None) == ""
    assert format_cell(4.0, "df") == "4"
    assert format_cell(4.5, "df") == "4.5"
    assert format_cell(7.0, "int") == "7"
    assert format_cell("co2", "text") == "co2"


@test()
def test_round_shares_keeps_total():
    """Rounded shares still add up to exactly 100"""
    rounded = round_shares([100 / 3, 100 / 3, 100 / 3])
    assert sum(int(round(x * 10_000)) for x in rounded) == 1_000_000
    rounded = round_shares([12.34565, 50.00005, 37.6543])
    assert sum(int(round(x * 10_000)) for x in rounded) == 1_000_000
    assert_close(rounded, [12.3457, 50.0, 37.6543], atol=1.5e-4)


@test()
def test_round_shares_non_finite():
    """NaN shares fall back to plain rounding"""
    rounded = round_shares([50.0, math.nan])
    assert rounded[0] == 50.0 and math.isnan(rounded[1])


# ============================================================================
# Tests for Table builders
# ============================================================================


@test()
def test_table_width_checked():
    """Rows and kinds must match the column count"""
    assert_raises(InvalidSpec, Table, key="t", title="t", columns=("a", "b"), kinds=("num",), rows=())
    assert_raises(InvalidSpec, Table, key="t", title="t", columns=("a",), kinds=("num",), rows=((1, 2),))


@test()
def test_fevd_display_sums_to_100():
    """Every printed FEVD row adds up to 100.0000"""
    model = random_stable_var(np.random.default_rng(21), K=4, order=2)
    table = fevd_table(fevd(model, H=10), {})
    for row in table.formatted():
        shares = [int(round(float(c) * 10_000)) for c in row[3:]]
        assert sum(shares) == 1_000_000, row
    assert table.notes == ("Cholesky ordering: x1 x2 x3 x4",)
    assert len(table.rows) == 4 * 10


@test()
def test_vecm_table_layout():
    """Each term has a value row, a bracketed standard error row and a t row"""
    est = _vecm_estimate()
    table = vecm_table(est, {"cointegration": "not run"})
    assert table.columns == ("Term", "CointEq1", "D(co2)", "D(energy_use)", "D(gdp)", "D(population)")
    assert table.row_kinds[:6] == ("value", "se", "t", "value", "se", "t")
    cells = table.formatted()
    assert cells[0][0] == "co2(-1)" and cells[0][1] == "1.0000"
    assert cells[1][1] == ""
    assert cells[4][1].startswith("(") and cells[5][1].startswith("[")
    labels = [row[0] for row in cells]
    assert "CointEq1" in labels and "D(co2(-1))" in labels and "C" in labels
    assert labels[-2:] == ["R-squared", "Observations"]


@test()
def test_long_run_table_normalized_column():
    """Regression-form slopes sit next to their negated normalized form"""
    est = _vecm_estimate()
    table = long_run_table(est, {})
    rows = {row[2]: row for row in table.rows}
    assert_close(rows["gdp"][6], -rows["gdp"][3], atol=0)
    assert table.notes[0].startswith("CointEq1 nobs:")


@test()
def test_summary_table_status():
    """Status row reports the failed stage"""
    table = summary_table({"data": "8 entities"}, "FAILED", "vecm")
    assert table.rows[-1] == ("status", "FAILED at vecm")
    assert summary_table({}, "OK").rows == (("status", "OK"),)


# ============================================================================
# Tests for rendering
# ============================================================================


@test()
def test_render_csv_header_and_cells():
    """Comment header with title, version and context; formatted cells below"""
    text = render_csv(_stats_table(), META)
    lines = text.splitlines()
    assert lines[0] == "# Statistics"
    assert lines[1] == "# panelbreak 1.0.0"
    assert "# config_hash: abc123" in lines
    assert "# cointegration: not run" in lines
    assert "# note: H0: nothing" in lines
    frame = pd.read_csv(io.StringIO(text), comment="#", dtype=str, keep_default_na=False)
    assert frame.values.tolist() == [["first", "1.2346", "2", "0.5000"], ["second", "0.0000", "3.5", "NA"]]


@test()
def test_render_json_matches_csv():
    """JSON keeps full precision and rounds to the printed CSV cells"""
    table = _stats_table()
    payload = json.loads(render_json(table, META))
    assert payload["config_hash"] == "abc123"
    assert payload["rows"][0][1] == 1.23456789
    assert payload["rows"][1][3] is None
    for json_row, cells in zip(payload["rows"], table.formatted()):
        assert format_cell(json_row[1]) == cells[1]


@test()
def test_render_markdown_alignment():
    """Text columns are left aligned, numbers right aligned"""
    text = render_markdown(_stats_table(), META)
    lines = text.splitlines()
    assert lines[0] == "## Statistics"
    assert "|---|---:|---:|---:|" in lines
    assert "| first | 1.2346 | 2 | 0.5000 |" in lines


@test()
def test_render_report_unknown_format():
    """Only csv, markdown and json are rendered"""
    bundle = ReportBundle(meta=META, tables=[_stats_table()])
    with tempfile.TemporaryDirectory() as tmp:
        assert_raises(InvalidSpec, render_report, bundle, "xlsx", tmp)  # type: ignore[arg-type]


@test()
def test_write_bundle_files_and_marker():
    """A failed bundle carries the FAILED marker; a later OK run removes it"""
    bundle = ReportBundle(meta=META, tables=[_stats_table()], status="FAILED", failed_stage="vecm", error="boom")
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "bundle"
        paths = write_bundle(bundle, out, ("csv", "json"), "seed = 1\n")
        names = sorted(p.name for p in paths)
        assert names == sorted(["stats.csv", "stats.json", "config.resolved.toml", FAILED_MARKER, META_FILE])
        assert (out / FAILED_MARKER).read_text(encoding="utf-8") == "vecm: boom\n"
        meta = json.loads((out / META_FILE).read_text(encoding="utf-8"))
        assert meta["status"] == "FAILED" and meta["failed_stage"] == "vecm"

        bundle.status = "OK"
        write_bundle(bundle, out, ("markdown",))
        assert not (out / FAILED_MARKER).exists()
        assert (out / "stats.md").exists()
