"""Report bundle and rendering.

A bundle is an ordered list of tables in the usual econometrics-package layout
(unit roots, Pedroni, VECM, FEVD, Granger, LM, White, slope homogeneity)
plus plot-ready IRF and root series.  Each table is rendered to one file
per format:

- csv: ``#`` header lines (title, engine version, config hash, decision
  context, notes), then the formatted cells.
- markdown: the same header as a list, then a pipe table.
- json: every cell at full precision plus the lossless result payload.

Statistics and p-values are printed with four decimals, standard errors in
parentheses and t-ratios in brackets.  Only bundle_meta.json carries
timestamps, so two runs of the same configuration produce identical table
files.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Literal, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .api_coint import PEDRONI_LABELS, PedroniResult
from .api_dynamics import CompanionForm, FevdResult, IrfResult
from .api_panel import PanelDataset
from .api_unit_root import UnitRootResult
from .api_vecm import VecmEstimate, ect_name
from .config import write_text_atomic
from .errors import InvalidSpec, IoError
from .utils import TestReport

logger = logging.getLogger(__name__)

PACKAGE = "panelbreak"
try:
    VERSION = metadata.version(PACKAGE)
except metadata.PackageNotFoundError:
    VERSION = "1.0.0"

ReportFormat = Literal["csv", "markdown", "json"]
CellKind = Literal["text", "int", "num", "df"]
RowKind = Literal["value", "se", "t", "stat", "component", "joint"]

FAILED_MARKER = "FAILED"
META_FILE = "bundle_meta.json"

# ============================================================================
# Cell Formatting
# ============================================================================


def format_cell(value: Any, kind: CellKind = "num", row_kind: RowKind = "value") -> str:
    if value is None:
        return ""
    if kind == "text":
        return str(value)
    if kind == "int":
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "NA"
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    if kind == "df":
        return str(int(v)) if v.is_integer() else f"{v:.1f}"
    text = f"{v:.4f}"
    if text == "-0.0000":
        text = "0.0000"
    if row_kind == "se":
        return f"({text})"
    if row_kind == "t":
        return f"[{text}]"
    return text


def round_shares(shares: Sequence[float], decimals: int = 4, total: float = 100.0) -> np.ndarray:
    """Round percentages so that the rounded values still add up to total.

    Largest-remainder rounding: floor everything, then hand the missing
    units to the largest fractional parts.
    """
    values = np.asarray(shares, dtype=float)
    if not np.all(np.isfinite(values)):
        return np.round(values, decimals)
    scale = 10**decimals
    units = values * scale
    floors = np.floor(units)
    deficit = int(round(total * scale - floors.sum()))
    if 0 < deficit <= values.size:
        order = np.argsort(-(units - floors), kind="stable")
        floors[order[:deficit]] += 1
    return floors / scale


# ============================================================================
# Tables and Bundles
# ============================================================================


@dataclass(frozen=True)
class Table:
    key: str
    title: str
    columns: tuple[str, ...]
    kinds: tuple[CellKind, ...]
    rows: tuple[tuple[Any, ...], ...]
    row_kinds: tuple[RowKind, ...] = ()
    notes: tuple[str, ...] = ()
    context: dict[str, str] = field(default_factory=dict)
    data: Any = None
    display_rows: Optional[tuple[tuple[str, ...], ...]] = None

    def __post_init__(self):
        if len(self.kinds) != len(self.columns):
            raise InvalidSpec(f"table {self.key}: {len(self.kinds)} kinds for {len(self.columns)} columns")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise InvalidSpec(f"table {self.key}: row of width {len(row)}, expected {len(self.columns)}")
        if self.row_kinds and len(self.row_kinds) != len(self.rows):
            raise InvalidSpec(f"table {self.key}: row kinds do not match rows")

    def row_kind(self, i: int) -> RowKind:
        return self.row_kinds[i] if self.row_kinds else "value"

    def formatted(self) -> list[list[str]]:
        if self.display_rows is not None:
            return [list(r) for r in self.display_rows]
        return [
            [format_cell(v, k, self.row_kind(i)) for v, k in zip(row, self.kinds)]
            for i, row in enumerate(self.rows)
        ]


@dataclass
class ReportBundle:
    meta: dict[str, Any]
    tables: list[Table] = field(default_factory=list)
    status: Literal["OK", "FAILED"] = "OK"
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    started_at: Optional[str] = None
    finished_at: Optional[str] = None

    def table(self, key: str) -> Table:
        for t in self.tables:
            if t.key == key:
                return t
        raise KeyError(key)

    @property
    def keys(self) -> list[str]:
        return [t.key for t in self.tables]


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ============================================================================
# Table Builders
# ============================================================================


def data_table(p: PanelDataset, variables: Sequence[str], context: Mapping[str, str]) -> Table:
    rows = []
    for v in variables:
        observed = p.get(v)[p.observed(v)]
        entities = int(p.observed(v).any(axis=1).sum())
        if observed.size == 0:
            rows.append((v, 0, entities, math.nan, math.nan, math.nan, math.nan))
            continue
        sd = observed.std(ddof=1) if observed.size > 1 else math.nan
        rows.append((v, observed.size, entities, observed.mean(), sd, observed.min(), observed.max()))
    notes = tuple(p.notes) + tuple(f"excluded {e}: {reason}" for e, reason in p.exclusions)
    return Table(
        key="table1_data",
        title="Data summary",
        columns=("Variable", "Obs", "Entities", "Mean", "Std. Dev.", "Min", "Max"),
        kinds=("text", "int", "int", "num", "num", "num", "num"),
        rows=tuple(rows),
        notes=notes,
        context=dict(context),
        data={"entities": list(p.entities), "years": [p.first_year, p.last_year], "variables": list(p.variables)},
    )


_METHOD_LABELS = {"LLC": "LLC", "IPS": "IPS", "ADF_FISHER": "ADF-Fisher", "PP_FISHER": "PP-Fisher"}


def unit_root_table(results: Sequence[UnitRootResult], context: Mapping[str, str]) -> Table:
    rows = []
    notes = []
    for r in results:
        rows.append(
            (
                r.variable,
                "First difference" if r.differenced else "Level",
                _METHOD_LABELS.get(r.method, r.method),
                r.statistic,
                r.p_value,
                len(r.lags),
                "Reject" if r.reject else "Do not reject",
            )
        )
        for ex in r.exclusions:
            notes.append(f"{r.method} {r.variable}: excluded {ex['entity']} ({ex['reason']})")
    return Table(
        key="table2_unit_root",
        title="Panel unit root tests",
        columns=("Variable", "Form", "Method", "Statistic", "Prob.", "Entities", "Decision"),
        kinds=("text", "text", "text", "num", "num", "int", "text"),
        rows=tuple(rows),
        notes=("H0: unit root; decisions at the 5% level",) + tuple(dict.fromkeys(notes)),
        context=dict(context),
        data=[r.to_dict() for r in results],
    )


def pedroni_table(result: PedroniResult, context: Mapping[str, str]) -> Table:
    rows = []
    for name, s in result.statistics.items():
        dimension = "Within" if name.startswith("panel") else "Between"
        rows.append((dimension, PEDRONI_LABELS[name], s.raw, s.statistic, s.p_value))
    notes = [
        "H0: no cointegration",
        f"{result.rejections} of {len(result.statistics)} statistics reject at 5%",
        f"null moments: {result.moment_source}",
        f"entities: {result.n_entities}; regressors: {result.n_regressors}",
    ]
    notes += [f"excluded {ex['entity']}: {ex['reason']}" for ex in result.exclusions]
    return Table(
        key="table3_pedroni",
        title="Pedroni residual cointegration test",
        columns=("Dimension", "Statistic", "Raw", "Standardized", "Prob."),
        kinds=("text", "text", "num", "num", "num"),
        rows=tuple(rows),
        notes=tuple(notes),
        context=dict(context),
        data=result.to_dict(),
    )


def _term_label(name: str, est: VecmEstimate) -> str:
    spec = est.spec
    for i in range(spec.rank):
        if name == ect_name(i):
            return f"CointEq{i + 1}"
    for v in spec.endogenous:
        for j in range(1, spec.lag_order + 1):
            if name == f"d_{v}_l{j}":
                return f"D({v}(-{j}))"
    if name == "const":
        return "C"
    return name


def vecm_table(est: VecmEstimate, context: Mapping[str, str]) -> Table:
    """Normalized cointegrating equation(s) on top, error-correction equations below."""
    spec = est.spec
    K, r = spec.n_endogenous, spec.rank
    coint_cols = tuple(f"CointEq{i + 1}" for i in range(r))
    eq_cols = tuple(f"D({v})" for v in spec.endogenous)
    rows: list[tuple] = []
    kinds: list[RowKind] = []

    def add(label: str, left: Sequence, right: Sequence, kind: RowKind) -> None:
        rows.append((label, *left, *right))
        kinds.append(kind)

    blank_right = [None] * K
    blank_left = [None] * r
    terms = [(v, f"{v}(-1)") for v in spec.endogenous] + [("const", "C")]
    terms += [(d, d) for d in spec.exogenous_dummies]
    for name, label in terms:
        values, ses, ts = [], [], []
        for b in est.beta:
            normalized = b.normalized_terms()
            values.append(normalized.get(name))
            se = b.se.get(name)
            ses.append(se)
            ts.append(b.t_ratio(name) if se is not None else None)
        add(label, values, blank_right, "value")
        add("", ses, blank_right, "se")
        add("", ts, blank_right, "t")

    for j, name in enumerate(est.regressor_names):
        add(_term_label(name, est), blank_left, [f.coefficients[j] for f in est.fits], "value")
        add("", blank_left, [f.bse[j] for f in est.fits], "se")
        add("", blank_left, [f.tvalues[j] for f in est.fits], "t")
    add("R-squared", blank_left, [f.r_squared for f in est.fits], "stat")
    add("Observations", blank_left, [f.nobs for f in est.fits], "stat")

    notes = [
        f"estimator: {est.beta[0].estimator}; long-run covariance: {est.beta[0].covariance_type}",
        f"entities: {len(est.entities)}; lag order: {spec.lag_order}; rank: {r}",
    ]
    notes += [f"{d} constant over the short-run sample; dropped" for d in est.dropped_regressors]
    notes += [f"excluded {ex['entity']}: {ex['reason']}" for ex in est.exclusions]
    data = {
        "long_run": [b.to_dict() for b in est.beta],
        "short_run": {
            v: {
                "coefficients": dict(zip(est.regressor_names, f.coefficients.tolist())),
                "se": dict(zip(est.regressor_names, f.bse.tolist())),
                "r_squared": f.r_squared,
                "nobs": f.nobs,
            }
            for v, f in zip(spec.endogenous, est.fits)
        },
        "sigma": est.sigma,
    }
    return Table(
        key="table4_vecm",
        title="Vector error correction estimates",
        columns=("Term", *coint_cols, *eq_cols),
        kinds=("text",) + ("num",) * (r + K),
        rows=tuple(rows),
        row_kinds=tuple(kinds),
        notes=tuple(notes),
        context=dict(context),
        data=data,
    )


def long_run_table(est: VecmEstimate, context: Mapping[str, str]) -> Table:
    """The long-run relation in regression form next to its normalized form."""
    rows = []
    for i, b in enumerate(est.beta):
        normalized = b.normalized_terms()
        for name, coef in b.coefficients.items():
            t = b.t_ratio(name, normalized=False)
            rows.append((f"CointEq{i + 1}", b.dependent, name, coef, b.se.get(name), t, normalized.get(name)))
    return Table(
        key="table4_long_run",
        title="Long-run equation",
        columns=("Relation", "Dependent", "Regressor", "Coefficient", "Std. Error", "t-Statistic", "Normalized"),
        kinds=("text", "text", "text", "num", "num", "num", "num"),
        rows=tuple(rows),
        notes=tuple(f"CointEq{i + 1} nobs: {b.nobs}" for i, b in enumerate(est.beta)),
        context=dict(context),
        data=[b.to_dict() for b in est.beta],
    )


def fevd_table(result: FevdResult, context: Mapping[str, str]) -> Table:
    rows, display = [], []
    for r, response in enumerate(result.names):
        for h in range(1, result.horizon + 1):
            shares = result.table[h - 1, r]
            se = result.se[h - 1, r]
            rows.append((response, h, se, *shares.tolist()))
            display.append(
                (response, str(h), format_cell(se), *(format_cell(x) for x in round_shares(shares)))
            )
    return Table(
        key="table5_fevd",
        title="Variance decomposition",
        columns=("Variable", "Period", "S.E.", *result.names),
        kinds=("text", "int", "num") + ("num",) * len(result.names),
        rows=tuple(rows),
        notes=(f"Cholesky ordering: {' '.join(result.ordering)}",),
        context=dict(context),
        data={"names": list(result.names), "ordering": list(result.ordering), "table": result.table, "se": result.se},
        display_rows=tuple(display),
    )


def irf_table(result: IrfResult, context: Mapping[str, str]) -> Table:
    rows = tuple((r["shock"], r["response"], r["scale"], r["horizon"], r["value"]) for r in result.rows())
    return Table(
        key="graph1_irf",
        title="Impulse responses",
        columns=("Shock", "Response", "Scale", "Horizon", "Value"),
        kinds=("text", "text", "df", "int", "num"),
        rows=rows,
        notes=(
            f"{result.method} shocks in standard deviations; Cholesky ordering: {' '.join(result.ordering)}",
        ),
        context=dict(context),
    )


def roots_table(companion: CompanionForm, context: Mapping[str, str]) -> Table:
    rows = tuple((i + 1, r["re"], r["im"], r["modulus"]) for i, r in enumerate(companion.rows()))
    return Table(
        key="graph2_roots",
        title="Inverse roots of the characteristic polynomial",
        columns=("Root", "Real", "Imaginary", "Modulus"),
        kinds=("int", "num", "num", "num"),
        rows=rows,
        notes=(
            f"unit roots (|modulus - 1| <= 1e-6): {companion.count_unit_roots()}",
            f"largest modulus: {format_cell(companion.max_modulus)}",
        ),
        context=dict(context),
    )


def granger_table(reports: Sequence[TestReport], context: Mapping[str, str]) -> Table:
    rows = tuple(
        (r.extra.get("dependent", ""), r.name, r.statistic, r.df[0], r.p_value) for r in reports
    )
    return Table(
        key="table6_granger",
        title="Granger causality / block exogeneity Wald tests",
        columns=("Dependent", "Excluded", "Chi-sq", "df", "Prob."),
        kinds=("text", "text", "num", "df", "num"),
        rows=rows,
        context=dict(context),
        data=[r.to_dict() for r in reports],
    )


def serial_lm_table(reports: Mapping[str, Sequence[TestReport]], context: Mapping[str, str]) -> Table:
    rows = []
    for variant in ("single", "cumulative"):
        for h, r in enumerate(reports.get(variant, ()), start=1):
            rao, lm = r.components
            rows.append(
                (
                    variant,
                    h,
                    r.statistic,
                    r.df[0],
                    r.p_value,
                    rao.statistic,
                    f"({format_cell(rao.df[0], 'df')}, {format_cell(rao.df[1], 'df')})",
                    rao.p_value,
                    lm.statistic,
                    lm.p_value,
                )
            )
    return Table(
        key="table7_serial_lm",
        title="Residual serial correlation LM tests",
        columns=("Variant", "Lag", "LRE* stat", "df", "Prob.", "Rao F-stat", "df (F)", "Prob. (F)", "LM stat", "Prob. (LM)"),
        kinds=("text", "int", "num", "df", "num", "num", "text", "num", "num", "num"),
        rows=tuple(rows),
        notes=(
            "H0: no serial correlation at the given lag (single) or at lags 1 to h (cumulative)",
        ),
        context=dict(context),
        data={k: [r.to_dict() for r in v] for k, v in reports.items()},
    )


def white_table(report: TestReport, context: Mapping[str, str]) -> Table:
    rows, kinds = [], []
    for c in report.components:
        f = c.components[0]
        rows.append(
            (
                c.name,
                c.extra.get("r_squared"),
                f.statistic,
                f"({format_cell(f.df[0], 'df')}, {format_cell(f.df[1], 'df')})",
                f.p_value,
                c.statistic,
                c.df[0],
                c.p_value,
            )
        )
        kinds.append("component")
    rows.append(("Joint", None, None, "", None, report.statistic, report.df[0], report.p_value))
    kinds.append("joint")
    cross = "with" if report.extra.get("cross_terms") else "without"
    return Table(
        key="table8_white",
        title="Residual heteroskedasticity tests (White)",
        columns=("Dependent", "R-squared", "F-statistic", "df (F)", "Prob. (F)", "Chi-sq", "df", "Prob. (Chi-sq)"),
        kinds=("text", "num", "num", "text", "num", "num", "df", "num"),
        rows=tuple(rows),
        row_kinds=tuple(kinds),
        notes=(
            f"auxiliary regressors ({cross} cross terms): {report.extra.get('auxiliary_regressors')}",
        ),
        context=dict(context),
        data=report.to_dict(),
    )


def homogeneity_table(report: TestReport, context: Mapping[str, str]) -> Table:
    rows = tuple((c.name, c.statistic, c.p_value) for c in report.components)
    extra = report.extra
    return Table(
        key="table9_homogeneity",
        title="Slope homogeneity test",
        columns=("Statistic", "Value", "Prob."),
        kinds=("text", "num", "num"),
        rows=rows,
        notes=(
            "H0: slope coefficients are homogeneous",
            f"tail: {extra.get('tail')}; entities: {extra.get('n_entities')}; "
            f"minimum T: {extra.get('min_periods')}",
        ),
        context=dict(context),
        data=report.to_dict(),
    )


def summary_table(decisions: Mapping[str, str], bundle_status: str, failed_stage: Optional[str] = None) -> Table:
    rows = [(stage, decision) for stage, decision in decisions.items()]
    rows.append(("status", bundle_status if failed_stage is None else f"{bundle_status} at {failed_stage}"))
    return Table(
        key="summary",
        title="Decision summary",
        columns=("Stage", "Decision"),
        kinds=("text", "text"),
        rows=tuple(rows),
        context=dict(decisions),
    )


# ============================================================================
# Rendering
# ============================================================================


def _header(table: Table, meta: Mapping[str, Any]) -> list[str]:
    lines = [
        table.title,
        f"{PACKAGE} {meta.get('version', VERSION)}",
        f"config_hash: {meta.get('config_hash', '')}",
    ]
    lines += [f"{key}: {value}" for key, value in table.context.items()]
    lines += [f"note: {n}" for n in table.notes]
    return lines


def render_csv(table: Table, meta: Mapping[str, Any]) -> str:
    frame = pd.DataFrame(table.formatted(), columns=list(table.columns), dtype=object)
    body = frame.to_csv(index=False, lineterminator="\n")
    return "".join(f"# {line}\n" for line in _header(table, meta)) + body


def _md_cell(text: str) -> str:
    return text.replace("|", "\\|")


def render_markdown(table: Table, meta: Mapping[str, Any]) -> str:
    header = _header(table, meta)
    lines = [f"## {header[0]}", ""]
    lines += [f"- {line}" for line in header[1:]]
    lines.append("")
    lines.append("| " + " | ".join(_md_cell(c) for c in table.columns) + " |")
    lines.append("|" + "|".join("---" if k == "text" else "---:" for k in table.kinds) + "|")
    for row in table.formatted():
        lines.append("| " + " | ".join(_md_cell(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    return value


def render_json(table: Table, meta: Mapping[str, Any]) -> str:
    payload = {
        "key": table.key,
        "title": table.title,
        "version": f"{PACKAGE} {meta.get('version', VERSION)}",
        "config_hash": meta.get("config_hash", ""),
        "context": table.context,
        "notes": list(table.notes),
        "columns": list(table.columns),
        "kinds": list(table.kinds),
        "row_kinds": list(table.row_kinds) or ["value"] * len(table.rows),
        "rows": table.rows,
        "data": table.data,
    }
    return json.dumps(to_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


RENDERERS: dict[str, tuple[Callable[[Table, Mapping[str, Any]], str], str]] = {
    "csv": (render_csv, ".csv"),
    "markdown": (render_markdown, ".md"),
    "json": (render_json, ".json"),
}


def render_report(
    bundle: ReportBundle,
    fmt: ReportFormat,
    out_dir: str | Path,
) -> list[Path]:
    """Write one file per table in the requested format; returns the paths written."""
    if fmt not in RENDERERS:
        raise InvalidSpec(f"unknown report format {fmt!r}; expected one of {list(RENDERERS)}")
    render, suffix = RENDERERS[fmt]
    out_dir = Path(out_dir)
    paths = []
    for table in bundle.tables:
        path = out_dir / f"{table.key}{suffix}"
        try:
            write_text_atomic(path, render(table, bundle.meta))
        except OSError as e:
            raise IoError(f"cannot write {path}: {e}")
        paths.append(path)
    logger.debug("Rendered %d %s tables into %s", len(paths), fmt, out_dir)
    return paths


def write_bundle(
    bundle: ReportBundle,
    out_dir: str | Path,
    formats: Sequence[ReportFormat] = ("csv", "markdown", "json"),
    config_text: Optional[str] = None,
) -> list[Path]:
    """Render every format, the resolved configuration, the metadata file and the FAILED marker."""
    out_dir = Path(out_dir)
    paths: list[Path] = []
    for fmt in formats:
        paths += render_report(bundle, fmt, out_dir)
    try:
        if config_text is not None:
            path = out_dir / "config.resolved.toml"
            write_text_atomic(path, config_text)
            paths.append(path)
        marker = out_dir / FAILED_MARKER
        if bundle.status == "FAILED":
            write_text_atomic(marker, f"{bundle.failed_stage}: {bundle.error}\n")
            paths.append(marker)
        elif marker.exists():
            marker.unlink()
        meta = {
            **bundle.meta,
            "status": bundle.status,
            "failed_stage": bundle.failed_stage,
            "error": bundle.error,
            "started_at": bundle.started_at,
            "finished_at": bundle.finished_at,
            "files": sorted(p.name for p in paths),
        }
        meta_path = out_dir / META_FILE
        write_text_atomic(meta_path, json.dumps(to_jsonable(meta), indent=2, sort_keys=True) + "\n")
        paths.append(meta_path)
    except OSError as e:
        raise IoError(f"cannot write bundle into {out_dir}: {e}")
    logger.info("Wrote %d files into %s (%s)", len(paths), out_dir, bundle.status)
    return paths
