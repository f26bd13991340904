"""Panel data model and the deterministic transforms every stage consumes.

A PanelDataset is a dense (entity, year, variable) cube with an observation
mask.  Masked cells hold NaN so that any accidental use of a missing value
propagates instead of silently contributing a number.  Instances are frozen
and their arrays are read-only, so a dataset can be shared across worker
threads without copying.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidSpec, SeriesTooShort, UnknownVariable, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_MIN_OBS = 10


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def observed_runs(observed: np.ndarray) -> list[tuple[int, int]]:
    """Return [start, stop) index pairs of the maximal True runs in a 1-d mask."""
    padded = np.concatenate(([0], observed.astype(np.int8), [0]))
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def _longest(runs: list[tuple[int, int]]) -> Optional[tuple[int, int]]:
    best = None
    for start, stop in runs:
        # Ties go to the most recent run.
        if best is None or stop - start >= best[1] - best[0]:
            best = (start, stop)
    return best


# ============================================================================
# Series Views
# ============================================================================


@dataclass(frozen=True)
class SeriesView:
    """Contiguous, fully observed stretch of one entity's variable."""

    entity: str
    variable: str
    data: np.ndarray
    first_year: int

    def __post_init__(self):
        data = np.array(self.data, dtype=float).reshape(-1)
        if not np.all(np.isfinite(data)):
            raise ValidationError(
                f"series {self.entity}/{self.variable} has missing values inside its run"
            )
        object.__setattr__(self, "data", _readonly(data))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def last_year(self) -> int:
        return self.first_year + len(self) - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.first_year, self.first_year + len(self))

    def with_data(self, data: np.ndarray, first_year: int) -> "SeriesView":
        return SeriesView(self.entity, self.variable, data, first_year)


def series_from_values(values: Iterable[float], *, first_year: int = 0,
                       entity: str = "", variable: str = "x") -> SeriesView:
    return SeriesView(entity, variable, np.asarray(list(values), dtype=float), first_year)


def first_difference(s: SeriesView) -> SeriesView:
    if len(s) < 2:
        raise SeriesTooShort(f"first difference needs 2 points, {s.entity}/{s.variable} has {len(s)}")
    return s.with_data(np.diff(s.data), s.first_year + 1)


def lag(s: SeriesView, k: int) -> SeriesView:
    """Lag by k periods.

    The result holds the first len-k values and is stamped with the year of
    the observation it pairs with, so lag(s, k) aligned with drop_first(s, k)
    gives (x[t-k], x[t]) pairs.
    """
    if k < 0:
        raise InvalidSpec(f"lag must be non-negative, got {k}")
    if k == 0:
        return s
    if len(s) <= k:
        raise SeriesTooShort(f"lag {k} needs more than {k} points, {s.entity}/{s.variable} has {len(s)}")
    return s.with_data(s.data[: len(s) - k], s.first_year + k)


def drop_first(s: SeriesView, k: int) -> SeriesView:
    if len(s) <= k:
        raise SeriesTooShort(f"cannot drop {k} of {len(s)} points from {s.entity}/{s.variable}")
    return s.with_data(s.data[k:], s.first_year + k)


# ============================================================================
# Panel Dataset
# ============================================================================


@dataclass(frozen=True)
class RunBlock:
    """Joint maximal run of several variables for one entity."""

    entity: str
    variables: tuple[str, ...]
    first_year: int
    data: np.ndarray  # (T, len(variables))

    @property
    def nobs(self) -> int:
        return self.data.shape[0]

    def column(self, variable: str) -> np.ndarray:
        return self.data[:, self.variables.index(variable)]


@dataclass(frozen=True, eq=False)
class PanelDataset:
    entities: tuple[str, ...]
    years: tuple[int, ...]
    variables: tuple[str, ...]
    values: np.ndarray
    mask: np.ndarray
    notes: tuple[str, ...] = ()
    exclusions: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        entities = tuple(str(e) for e in self.entities)
        years = tuple(int(y) for y in self.years)
        variables = tuple(str(v) for v in self.variables)
        if len(set(entities)) != len(entities):
            raise ValidationError("entity identifiers must be unique")
        if len(set(variables)) != len(variables):
            raise ValidationError("variable names must be unique")
        if any(b - a != 1 for a, b in zip(years, years[1:])):
            raise ValidationError("years must be contiguous and strictly increasing")

        shape = (len(entities), len(years), len(variables))
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.shape != shape or mask.shape != shape:
            raise ValidationError(
                f"values/mask shape {values.shape}/{mask.shape} does not match {shape}"
            )
        mask &= np.isfinite(values)
        values[~mask] = np.nan

        object.__setattr__(self, "entities", entities)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))

    # ------------------------------------------------------------------
    # Lookup
    # ------------------------------------------------------------------

    @property
    def first_year(self) -> int:
        return self.years[0]

    @property
    def last_year(self) -> int:
        return self.years[-1]

    def variable_index(self, variable: str) -> int:
        try:
            return self.variables.index(variable)
        except ValueError:
            raise UnknownVariable(f"unknown variable {variable!r}; have {list(self.variables)}")

    def entity_index(self, entity: str) -> int:
        try:
            return self.entities.index(entity)
        except ValueError:
            raise ValidationError(f"unknown entity {entity!r}")

    def get(self, variable: str) -> np.ndarray:
        """(entity, year) matrix of one variable, NaN where unobserved."""
        return self.values[:, :, self.variable_index(variable)]

    def observed(self, variable: str) -> np.ndarray:
        return self.mask[:, :, self.variable_index(variable)]

    # ------------------------------------------------------------------
    # Construction helpers
    # ------------------------------------------------------------------

    def _replace(self, **changes) -> "PanelDataset":
        current = {
            "entities": self.entities,
            "years": self.years,
            "variables": self.variables,
            "values": self.values,
            "mask": self.mask,
            "notes": self.notes,
            "exclusions": self.exclusions,
        }
        current.update(changes)
        return PanelDataset(**current)

    def with_variable(
        self, name: str, data: np.ndarray, mask: Optional[np.ndarray] = None
    ) -> "PanelDataset":
        """Add or replace a variable from an (entity, year) matrix."""
        data = np.asarray(data, dtype=float)
        if data.shape != (len(self.entities), len(self.years)):
            raise ValidationError(f"variable {name!r} has shape {data.shape}")
        if mask is None:
            mask = np.isfinite(data)
        if name in self.variables:
            j = self.variables.index(name)
            values = self.values.copy()
            new_mask = self.mask.copy()
            values[:, :, j] = data
            new_mask[:, :, j] = mask
            return self._replace(values=values, mask=new_mask)
        return self._replace(
            variables=self.variables + (name,),
            values=np.concatenate([self.values, data[:, :, None]], axis=2),
            mask=np.concatenate([self.mask, np.asarray(mask, dtype=bool)[:, :, None]], axis=2),
        )

    def with_note(self, note: str) -> "PanelDataset":
        return self._replace(notes=self.notes + (note,))

    def select_entities(self, entities: Sequence[str]) -> "PanelDataset":
        idx = [self.entity_index(e) for e in entities]
        return self._replace(
            entities=tuple(self.entities[i] for i in idx),
            values=self.values[idx],
            mask=self.mask[idx],
        )

    def select_years(self, start: int, end: int) -> "PanelDataset":
        if start > end:
            raise ValidationError(f"empty year range {start}..{end}")
        keep = [i for i, y in enumerate(self.years) if start <= y <= end]
        if not keep:
            raise ValidationError(f"no data inside {start}..{end}")
        return self._replace(
            years=tuple(self.years[i] for i in keep),
            values=self.values[:, keep],
            mask=self.mask[:, keep],
        )

    def canonical(self) -> "PanelDataset":
        """Entities in sorted order; every analysis runs on this form."""
        order = sorted(range(len(self.entities)), key=lambda i: self.entities[i])
        if order == list(range(len(self.entities))):
            return self
        return self._replace(
            entities=tuple(self.entities[i] for i in order),
            values=self.values[order],
            mask=self.mask[order],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return self.equals(other, atol=0.0)

    __hash__ = None  # type: ignore[assignment]

    def equals(self, other: "PanelDataset", atol: float = 1e-12) -> bool:
        a, b = self.canonical(), other.canonical()
        if (a.entities, a.years, a.variables) != (b.entities, b.years, b.variables):
            return False
        if not np.array_equal(a.mask, b.mask):
            return False
        return bool(np.allclose(a.values[a.mask], b.values[b.mask], rtol=0.0, atol=atol))

    # ------------------------------------------------------------------
    # Series access
    # ------------------------------------------------------------------

    def series(self, entity: str, variable: str) -> list[SeriesView]:
        """All maximal observed runs of one entity's variable."""
        i, j = self.entity_index(entity), self.variable_index(variable)
        row = self.values[i, :, j]
        return [
            SeriesView(entity, variable, row[start:stop], self.years[start])
            for start, stop in observed_runs(self.mask[i, :, j])
        ]

    def longest_series(self, entity: str, variable: str) -> Optional[SeriesView]:
        runs = self.series(entity, variable)
        if not runs:
            return None
        best = runs[0]
        for run in runs[1:]:
            if len(run) >= len(best):
                best = run
        return best

    def joint_run(self, entity: str, variables: Sequence[str]) -> Optional[RunBlock]:
        """Longest stretch where every listed variable is observed."""
        i = self.entity_index(entity)
        cols = [self.variable_index(v) for v in variables]
        observed = np.all(self.mask[i][:, cols], axis=1)
        best = _longest(observed_runs(observed))
        if best is None:
            return None
        start, stop = best
        return RunBlock(
            entity=entity,
            variables=tuple(variables),
            first_year=self.years[start],
            data=self.values[i, start:stop][:, cols].copy(),
        )


def panel_from_blocks(
    blocks: dict[str, dict[str, np.ndarray]], years: Sequence[int]
) -> PanelDataset:
    """Assemble a dataset from {entity: {variable: values over years}}."""
    entities = sorted(blocks)
    variables: list[str] = []
    for entity in entities:
        for name in blocks[entity]:
            if name not in variables:
                variables.append(name)
    values = np.full((len(entities), len(years), len(variables)), np.nan)
    for i, entity in enumerate(entities):
        for name, column in blocks[entity].items():
            values[i, :, variables.index(name)] = column
    return PanelDataset(tuple(entities), tuple(years), tuple(variables), values, np.isfinite(values))


# ============================================================================
# Panel Transforms
# ============================================================================


def within_demean(p: PanelDataset, variable: str) -> PanelDataset:
    """Subtract each entity's mean over its observed years; mask unchanged."""
    j = p.variable_index(variable)
    data = p.values[:, :, j]
    observed = p.mask[:, :, j]
    counts = observed.sum(axis=1)
    sums = np.where(observed, data, 0.0).sum(axis=1)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    demeaned = np.where(observed, data - means[:, None], np.nan)
    return p.with_variable(variable, demeaned, observed)


def log_transform(p: PanelDataset, variable: str) -> PanelDataset:
    data = p.get(variable)
    observed = p.observed(variable)
    if np.any(data[observed] <= 0):
        raise ValidationError(f"cannot log-transform {variable!r}: non-positive values present")
    logged = np.where(observed, np.log(np.where(observed, data, 1.0)), np.nan)
    return p.with_variable(variable, logged, observed).with_note(f"{variable}: natural log")


def interpolate_interior(p: PanelDataset, variable: str) -> PanelDataset:
    """Linearly fill gaps strictly between observed years."""
    data = p.get(variable).copy()
    observed = p.observed(variable).copy()
    years = np.asarray(p.years, dtype=float)
    filled = 0
    for i in range(len(p.entities)):
        idx = np.flatnonzero(observed[i])
        if idx.size < 2:
            continue
        gaps = np.arange(idx[0], idx[-1] + 1)
        gaps = gaps[~observed[i, gaps]]
        if gaps.size == 0:
            continue
        data[i, gaps] = np.interp(years[gaps], years[idx], data[i, idx])
        observed[i, gaps] = True
        filled += gaps.size
    if filled:
        logger.info("Interpolated %d interior gaps in %s", filled, variable)
    return p.with_variable(variable, data, observed).with_note(
        f"{variable}: linear interpolation of {filled} interior gaps"
    )


def enforce_min_obs(
    p: PanelDataset, min_obs: int = DEFAULT_MIN_OBS, variables: Optional[Sequence[str]] = None
) -> PanelDataset:
    """Drop entities lacking min_obs consecutive observations of any variable."""
    variables = list(variables) if variables is not None else list(p.variables)
    keep: list[str] = []
    dropped: list[tuple[str, str]] = []
    for entity in p.entities:
        i = p.entity_index(entity)
        reason = None
        for variable in variables:
            runs = observed_runs(p.mask[i, :, p.variable_index(variable)])
            longest = max((stop - start for start, stop in runs), default=0)
            if longest < min_obs:
                reason = f"{variable} has {longest} consecutive observations (< {min_obs})"
                break
        if reason is None:
            keep.append(entity)
        else:
            logger.info("Excluding entity %s: %s", entity, reason)
            dropped.append((entity, reason))
    if not dropped:
        return p
    return p.select_entities(keep)._replace(exclusions=p.exclusions + tuple(dropped))
