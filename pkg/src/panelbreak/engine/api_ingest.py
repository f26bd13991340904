"""Long-format CSV ingestion and the policy dummy.

File contract: UTF-8, header ``entity,year,variable,value``, one
observation per row, integer years, decimal or empty values.  Line
numbers in errors count the header as line 1.
"""

import logging
import re
from pathlib import Path
from typing import Annotated, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .api_panel import (
    PanelDataset,
    enforce_min_obs,
    interpolate_interior,
    log_transform,
)
from .errors import (
    DuplicateObservation,
    IoError,
    MalformedRow,
    ThresholdOutOfRange,
    UnmappedVariable,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("entity", "year", "variable", "value")

_PARSER_LINE = re.compile(r"line (\d+)")
_INTEGER = re.compile(r"^[+-]?\d+$")

# ============================================================================
# Reading
# ============================================================================


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
            skipinitialspace=True,
        )
    except FileNotFoundError:
        raise IoError(f"input file not found: {path}")
    except UnicodeDecodeError as e:
        raise IoError(f"{path} is not valid UTF-8: {e}")
    except pd.errors.EmptyDataError:
        raise MalformedRow(1, "file is empty; expected header entity,year,variable,value")
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        raise MalformedRow(int(match.group(1)) if match else 0, str(e).strip())
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")


def parse_long_csv(
    path: Annotated[str | Path, "Long-format CSV file"],
    mapping: Annotated[Optional[Mapping[str, str]], "Source variable name -> canonical name"] = None,
    *,
    required: Sequence[str] = (),
) -> PanelDataset:
    """Pivot a long CSV into a PanelDataset.

    Without a mapping every variable is kept under its own name.  With a
    mapping, a variable missing from it is an error, as is a required
    canonical variable that never appears.
    """
    path = Path(path)
    frame = _read_frame(path)
    header = tuple(str(c).strip() for c in frame.columns)
    if header != CSV_COLUMNS:
        raise MalformedRow(1, f"header must be {','.join(CSV_COLUMNS)}, got {','.join(header)}")
    frame.columns = list(CSV_COLUMNS)
    frame = frame.apply(lambda col: col.str.strip())
    lines = frame.index.to_numpy() + 2

    empty_entity = frame["entity"] == ""
    if empty_entity.any():
        raise MalformedRow(int(lines[np.argmax(empty_entity.to_numpy())]), "empty entity")
    empty_variable = frame["variable"] == ""
    if empty_variable.any():
        raise MalformedRow(int(lines[np.argmax(empty_variable.to_numpy())]), "empty variable")

    bad_year = ~frame["year"].str.match(_INTEGER)
    if bad_year.any():
        i = int(np.argmax(bad_year.to_numpy()))
        raise MalformedRow(int(lines[i]), f"year {frame['year'].iat[i]!r} is not an integer")
    years = frame["year"].astype(int)

    raw_values = frame["value"]
    nonempty = raw_values != ""
    values = pd.to_numeric(raw_values.where(nonempty), errors="coerce")
    bad_value = nonempty & ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
    if bad_value.any():
        i = int(np.argmax(bad_value.to_numpy()))
        raise MalformedRow(int(lines[i]), f"value {raw_values.iat[i]!r} is not a finite decimal number")

    variables = frame["variable"]
    if mapping is not None:
        unmapped = ~variables.isin(list(mapping))
        if unmapped.any():
            i = int(np.argmax(unmapped.to_numpy()))
            raise UnmappedVariable(
                f"line {int(lines[i])}: variable {variables.iat[i]!r} has no mapping"
            )
        variables = variables.map(dict(mapping))

    long = pd.DataFrame(
        {"entity": frame["entity"], "year": years, "variable": variables, "value": values}
    )
    if long.empty:
        raise MalformedRow(2, "no observations")
    duplicated = long.duplicated(subset=["entity", "year", "variable"], keep="first")
    if duplicated.any():
        i = int(np.argmax(duplicated.to_numpy()))
        row = long.iloc[i]
        raise DuplicateObservation(int(lines[i]), (row["entity"], int(row["year"]), row["variable"]))

    present = list(dict.fromkeys(long["variable"]))
    missing = [v for v in required if v not in present]
    if missing:
        raise UnmappedVariable(f"required variables not present after mapping: {missing}")

    entities = sorted(long["entity"].unique())
    all_years = list(range(int(long["year"].min()), int(long["year"].max()) + 1))
    cube = (
        long.set_index(["entity", "year", "variable"])["value"]
        .unstack("variable")
        .reindex(columns=present)
        .reindex(pd.MultiIndex.from_product([entities, all_years], names=["entity", "year"]))
    )
    data = cube.to_numpy(dtype=float).reshape(len(entities), len(all_years), len(present))
    logger.info(
        "Parsed %s: %d rows, %d entities, years %d-%d, variables %s",
        path, len(long), len(entities), all_years[0], all_years[-1], ", ".join(present),
    )
    return PanelDataset(
        tuple(entities), tuple(all_years), tuple(present), data, np.isfinite(data),
        notes=(f"source: {path.name}",),
    )


# ============================================================================
# Writing
# ============================================================================


def write_long_csv(
    p: Annotated[PanelDataset, "Dataset to persist"],
    path: Annotated[str | Path, "Output CSV path"],
) -> Path:
    """Write every (entity, year, variable) cell; missing cells get an empty value."""
    path = Path(path)
    p = p.canonical()
    E, T, V = p.values.shape
    frame = pd.DataFrame(
        {
            "entity": np.repeat(p.entities, T * V),
            "year": np.tile(np.repeat(p.years, V), E),
            "variable": np.tile(p.variables, E * T),
            "value": p.values.reshape(-1),
        }
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", na_rep="")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}")
    return path


# ============================================================================
# Policy Dummy and Preparation
# ============================================================================


def build_policy_dummy(
    p: Annotated[PanelDataset, "Dataset to extend"],
    name: Annotated[str, "Dummy variable name"] = "paris_2015",
    threshold_year: Annotated[int, "First year with value 1"] = 2015,
) -> PanelDataset:
    if not (p.first_year <= threshold_year <= p.last_year):
        raise ThresholdOutOfRange(
            f"threshold {threshold_year} outside the data range {p.first_year}-{p.last_year}"
        )
    row = (np.asarray(p.years) >= threshold_year).astype(float)
    data = np.tile(row, (len(p.entities), 1))
    return p.with_variable(name, data, np.ones_like(data, dtype=bool)).with_note(
        f"{name} = 1 for years >= {threshold_year}"
    )


def prepare_panel(
    p: PanelDataset,
    *,
    variables: Sequence[str],
    start_year: Optional[int] = None,
    end_year: Optional[int] = None,
    log: Sequence[str] = (),
    interpolate: bool = False,
    min_obs: int = 10,
) -> PanelDataset:
    """Year window, then logs, interpolation and entity screening, in that order."""
    start = p.first_year if start_year is None else max(start_year, p.first_year)
    end = p.last_year if end_year is None else min(end_year, p.last_year)
    if (start, end) != (p.first_year, p.last_year):
        p = p.select_years(start, end).with_note(f"years {start}-{end}")
    for v in log:
        p = log_transform(p, v)
    if interpolate:
        for v in variables:
            p = interpolate_interior(p, v)
    p = enforce_min_obs(p, min_obs, variables)
    if not p.mask.any():
        logger.warning("Prepared panel has no observations")
    return p
