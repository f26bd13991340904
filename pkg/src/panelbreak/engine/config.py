import hashlib
import logging
import os
import sys
import tempfile
if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import tomli_w

from .api_coint import DEFAULT_MOMENT_REPS, PUBLISHED_MOMENT_CASES
from .api_dynamics import DEFAULT_HORIZON, DEFAULT_SHOCK_SCALES
from .api_panel import DEFAULT_MIN_OBS
from .api_synth import DGP_KINDS, DgpSpec
from .api_vecm import CANONICAL_VARIABLES, DEFAULT_DUMMY, ModelSpec
from .errors import InvalidSpec, IoError, PanelError, ThresholdOutOfRange
from .utils import DETERMINISTIC_CHOICES

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "markdown", "json")
MOMENT_SOURCES = ("simulated", "published")

# Keys that change where or how fast results are produced, never what they are
_UNHASHED_KEYS = ("output_dir", "workers", "formats")

# ============================================================================
# Environment Overrides
# ============================================================================

_WORKERS_ENV = "PANELBREAK_WORKERS"
_MOMENT_REPS_ENV = "PANELBREAK_MOMENT_REPS"


def _get_env_int(name: str, default: int) -> int:
    value = os.getenv(name, "").strip()
    if value == "":
        return default
    try:
        return int(value)
    except ValueError:
        logger.warning("Ignoring %s=%r: not an integer", name, value)
        return default


def get_worker_count(default: int = 1) -> int:
    return max(1, _get_env_int(_WORKERS_ENV, default))


def get_moment_reps(default: int = DEFAULT_MOMENT_REPS) -> int:
    return max(10, _get_env_int(_MOMENT_REPS_ENV, default))


# ============================================================================
# Run Configuration
# ============================================================================


@dataclass(frozen=True)
class RunConfig:
    input: Optional[str] = None
    synth_kind: Optional[str] = None
    synth_entities: int = 40
    synth_periods: int = 43
    mapping: dict[str, str] = field(default_factory=lambda: {v: v for v in CANONICAL_VARIABLES})
    start_year: int = 1980
    end_year: int = 2022
    log: tuple[str, ...] = ()
    min_obs: int = DEFAULT_MIN_OBS
    interpolate: bool = False
    endogenous: tuple[str, ...] = CANONICAL_VARIABLES
    dummy_name: str = DEFAULT_DUMMY
    dummy_threshold: int = 2015
    lag_order: int = 2
    rank: int = 1
    deterministic: str = "constant"
    ordering: Optional[tuple[str, ...]] = None
    estimator: str = "two_step"
    long_run_covariance: str = "hac"
    unit_root_deterministic: str = "constant"
    pedroni_count_dummy: bool = False
    pedroni_moments: str = "simulated"
    moment_reps: int = DEFAULT_MOMENT_REPS
    horizon: int = DEFAULT_HORIZON
    shock_scales: tuple[float, ...] = DEFAULT_SHOCK_SCALES
    lm_max_lag: int = 3
    white_cross_terms: bool = True
    homogeneity_two_sided: bool = False
    output_dir: str = "panelbreak-out"
    formats: tuple[str, ...] = REPORT_FORMATS
    seed: int = 2015
    workers: int = 1

    def __post_init__(self):
        for name in ("log", "endogenous", "shock_scales", "formats"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.ordering is not None:
            object.__setattr__(self, "ordering", tuple(self.ordering))
        object.__setattr__(self, "shock_scales", tuple(float(s) for s in self.shock_scales))
        object.__setattr__(self, "mapping", dict(self.mapping))
        self._validate()

    def _validate(self) -> None:
        if (self.input is None) == (self.synth_kind is None):
            raise InvalidSpec("set exactly one of 'input' and 'synth_kind'")
        if self.synth_kind is not None and self.synth_kind not in DGP_KINDS:
            raise InvalidSpec(f"synth_kind must be one of {DGP_KINDS}, got {self.synth_kind!r}")
        if self.start_year > self.end_year:
            raise InvalidSpec(f"start_year {self.start_year} is after end_year {self.end_year}")
        if not (self.start_year <= self.dummy_threshold <= self.end_year):
            raise ThresholdOutOfRange(
                f"dummy_threshold {self.dummy_threshold} outside {self.start_year}-{self.end_year}"
            )
        if self.input is not None:
            unmapped = [v for v in self.endogenous if v not in self.mapping.values()]
            if unmapped:
                raise InvalidSpec(f"no column is mapped to {unmapped}")
        unknown_logs = [v for v in self.log if v not in self.endogenous]
        if unknown_logs:
            raise InvalidSpec(f"log lists non-endogenous variables {unknown_logs}")
        if self.unit_root_deterministic not in DETERMINISTIC_CHOICES:
            raise InvalidSpec(f"unit_root_deterministic must be one of {DETERMINISTIC_CHOICES}")
        if self.pedroni_moments not in MOMENT_SOURCES:
            raise InvalidSpec(f"pedroni_moments must be one of {MOMENT_SOURCES}")
        if self.pedroni_moments == "published":
            n_regressors = len(self.endogenous) - 1 + int(self.pedroni_count_dummy)
            if (n_regressors, "constant") not in PUBLISHED_MOMENT_CASES:
                raise InvalidSpec(
                    f"published Pedroni moments are embedded for {sorted(PUBLISHED_MOMENT_CASES)}; "
                    f"this model has {n_regressors} regressors, use pedroni_moments = \"simulated\""
                )
        bad_formats = [f for f in self.formats if f not in REPORT_FORMATS]
        if bad_formats or not self.formats:
            raise InvalidSpec(f"formats must be a non-empty subset of {REPORT_FORMATS}")
        for name, low in (
            ("synth_entities", 1), ("synth_periods", 2), ("min_obs", 1), ("moment_reps", 10),
            ("horizon", 1), ("lm_max_lag", 1), ("workers", 1),
        ):
            if getattr(self, name) < low:
                raise InvalidSpec(f"{name} must be >= {low}, got {getattr(self, name)}")
        if not self.shock_scales:
            raise InvalidSpec("shock_scales must not be empty")
        self.model_spec()

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            endogenous=self.endogenous,
            exogenous_dummies=(self.dummy_name,),
            lag_order=self.lag_order,
            rank=self.rank,
            deterministic=self.deterministic,  # type: ignore[arg-type]
            ordering=self.ordering,
            estimator=self.estimator,  # type: ignore[arg-type]
            long_run_covariance=self.long_run_covariance,  # type: ignore[arg-type]
        )

    def dgp_spec(self) -> DgpSpec:
        if self.synth_kind is None:
            raise InvalidSpec("configuration has no synth_kind")
        return DgpSpec(
            kind=self.synth_kind,  # type: ignore[arg-type]
            seed=self.seed,
            n_entities=self.synth_entities,
            n_periods=self.synth_periods,
            start_year=self.start_year,
            variables=self.endogenous,
            dummy_threshold=self.dummy_threshold,
        )

    def to_dict(self) -> dict[str, Any]:
        """TOML-ready mapping; unset optional keys are omitted."""
        out: dict[str, Any] = {}
        for key, value in sorted(asdict(self).items()):
            if value is None:
                continue
            if isinstance(value, tuple):
                value = list(value)
            if isinstance(value, dict):
                value = dict(sorted(value.items()))
            out[key] = value
        return out

    def with_environment(self) -> "RunConfig":
        return replace(
            self,
            workers=get_worker_count(self.workers),
            moment_reps=get_moment_reps(self.moment_reps),
        )


def _result_keys(cfg: RunConfig) -> dict[str, Any]:
    return {k: v for k, v in cfg.to_dict().items() if k not in _UNHASHED_KEYS}


def resolved_config_text(cfg: RunConfig) -> str:
    """TOML snapshot of the keys that determine the results, written next to a bundle."""
    return tomli_w.dumps(_result_keys(cfg))


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 over everything that determines the numbers in a bundle.

    The input file enters by content digest, not by path.
    """
    data = _result_keys(cfg)
    if cfg.input is not None:
        try:
            data["input"] = hashlib.sha256(Path(cfg.input).read_bytes()).hexdigest()
        except OSError:
            data["input"] = Path(cfg.input).name
    return hashlib.sha256(tomli_w.dumps(data).encode("utf-8")).hexdigest()


def config_from_mapping(data: Mapping[str, Any], base_dir: Optional[Path] = None) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidSpec(f"unknown configuration keys: {', '.join(unknown)}")
    values = dict(data)
    if base_dir is not None and values.get("input"):
        input_path = Path(values["input"])
        if not input_path.is_absolute():
            values["input"] = str(base_dir / input_path)
    try:
        return RunConfig(**values)
    except PanelError:
        raise
    except (TypeError, ValueError) as e:
        raise InvalidSpec(f"invalid configuration value: {e}")


def load_config(path: str | Path, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Read a flat TOML run configuration; relative input paths resolve against its directory."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_bytes().decode("utf-8"))
    except FileNotFoundError:
        raise IoError(f"configuration file not found: {path}")
    except (OSError, UnicodeDecodeError) as e:
        raise IoError(f"cannot read configuration {path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise InvalidSpec(f"{path} is not valid TOML: {e}")
    nested = [k for k, v in data.items() if isinstance(v, dict) and k != "mapping"]
    if nested:
        raise InvalidSpec(f"configuration must be flat; found tables {nested}")
    data.update(overrides or {})
    return config_from_mapping(data, base_dir=path.parent)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def write_text_atomic(path: Path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(dir=path.parent, prefix=".tmp_", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(text.encode("utf-8"))
        os.replace(temp_path, path)
    except BaseException:
        os.unlink(temp_path)
        raise


def write_config(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    try:
        write_text_atomic(path, dump_config(cfg))
    except OSError as e:
        raise IoError(f"cannot write configuration {path}: {e}")
    return path


def default_config(**overrides: Any) -> RunConfig:
    """Defaults with a synthetic source, so that the result validates on its own."""
    values: dict[str, Any] = {"synth_kind": "vecm_calibrated"}
    values.update(overrides)
    return RunConfig(**values)
