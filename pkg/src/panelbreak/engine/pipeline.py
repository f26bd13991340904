import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .api_coint import PEDRONI_STATISTICS, PedroniResult, entity_cointegrating_residuals, pedroni_tests
from .api_diagnostics import (
    granger_block_exogeneity,
    heteroskedasticity_white,
    serial_correlation_lm,
    slope_homogeneity,
)
from .api_dynamics import DynamicsResult, analyze_dynamics
from .api_ingest import build_policy_dummy, parse_long_csv, prepare_panel
from .api_panel import PanelDataset
from .api_synth import generate
from .api_unit_root import UnitRootResult, unit_root_battery
from .api_vecm import CointegratingVector, ModelSpec, VecmEstimate, estimate_long_run_relations, estimate_vecm
from .config import RunConfig, config_hash, resolved_config_text
from .errors import InsufficientData, NumericalError, PanelError, StageFailed
from .registry import STAGES, resolve_stages, stage
from .report import (
    VERSION,
    ReportBundle,
    Table,
    data_table,
    fevd_table,
    granger_table,
    homogeneity_table,
    irf_table,
    long_run_table,
    pedroni_table,
    roots_table,
    serial_lm_table,
    summary_table,
    unit_root_table,
    utc_timestamp,
    vecm_table,
    white_table,
    write_bundle,
)
from .utils import normal_p_value

logger = logging.getLogger(__name__)

# A unit-root or diagnostic verdict needs at least this many of the four panel tests
UNIT_ROOT_MAJORITY = 3

# ============================================================================
# Pipeline State
# ============================================================================


@dataclass
class PipelineContext:
    """Results handed from stage to stage, plus the decisions taken so far."""

    cfg: RunConfig
    spec: ModelSpec
    panel: Optional[PanelDataset] = None
    unit_roots: list[UnitRootResult] = field(default_factory=list)
    pedroni: Optional[PedroniResult] = None
    long_run: tuple[CointegratingVector, ...] = ()
    vecm: Optional[VecmEstimate] = None
    dynamics: Optional[DynamicsResult] = None
    decisions: dict[str, str] = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)

    def context(self, *required: str) -> dict[str, str]:
        """Decisions recorded so far; required keys show up as "not run" when missing."""
        out = {key: "not run" for key in required}
        out.update(self.decisions)
        return out

    def require_panel(self) -> PanelDataset:
        if self.panel is None:
            raise InsufficientData("no panel loaded; the ingest stage has not run")
        return self.panel

    def require_vecm(self) -> VecmEstimate:
        if self.vecm is None:
            raise InsufficientData("no VECM estimate; the vecm stage has not run")
        return self.vecm


def _verdict(reject: bool) -> str:
    return "reject" if reject else "do not reject"


# ============================================================================
# Stages
# ============================================================================


@stage("ingest")
def ingest_stage(ctx: PipelineContext) -> None:
    """Load or generate the panel, screen entities and add the policy dummy"""
    cfg = ctx.cfg
    if cfg.input is not None:
        p = parse_long_csv(cfg.input, cfg.mapping, required=cfg.endogenous)
    else:
        p = generate(cfg.dgp_spec(), workers=cfg.workers)
    p = prepare_panel(
        p,
        variables=cfg.endogenous,
        start_year=cfg.start_year,
        end_year=cfg.end_year,
        log=cfg.log,
        interpolate=cfg.interpolate,
        min_obs=cfg.min_obs,
    )
    p = build_policy_dummy(p, cfg.dummy_name, cfg.dummy_threshold)
    ctx.panel = p
    ctx.decisions["data"] = (
        f"{len(p.entities)} entities, {p.first_year}-{p.last_year}, {len(p.exclusions)} excluded"
    )
    ctx.tables.append(data_table(p, [*cfg.endogenous, cfg.dummy_name], ctx.context()))


@stage("unit_root", requires=("ingest",))
def unit_root_stage(ctx: PipelineContext) -> None:
    """LLC, IPS, ADF-Fisher and PP-Fisher on levels and first differences"""
    cfg = ctx.cfg
    p = ctx.require_panel()
    results: list[UnitRootResult] = []
    verdicts = []
    for v in cfg.endogenous:
        levels = unit_root_battery(
            p, v, False, cfg.unit_root_deterministic,  # type: ignore[arg-type]
            workers=cfg.workers,
        )
        diffs = unit_root_battery(p, v, True, workers=cfg.workers)
        results += levels + diffs
        if sum(r.reject for r in levels) >= UNIT_ROOT_MAJORITY:
            order = "I(0)"
        elif sum(r.reject for r in diffs) >= UNIT_ROOT_MAJORITY:
            order = "I(1)"
        else:
            order = "inconclusive"
        verdicts.append(f"{v} {order}")
    ctx.unit_roots = results
    ctx.decisions["unit_root"] = ", ".join(verdicts)
    ctx.tables.append(unit_root_table(results, ctx.context()))


@stage("cointegration", requires=("ingest",))
def cointegration_stage(ctx: PipelineContext) -> None:
    """Pedroni residual-based tests of no cointegration"""
    cfg = ctx.cfg
    residuals = entity_cointegrating_residuals(
        ctx.require_panel(),
        ctx.spec,
        count_dummy=cfg.pedroni_count_dummy,
        workers=cfg.workers,
    )
    result = pedroni_tests(
        residuals,
        moments=cfg.pedroni_moments,  # type: ignore[arg-type]
        moment_reps=cfg.moment_reps,
        workers=cfg.workers,
    )
    ctx.pedroni = result
    count = f"{result.rejections} of {len(PEDRONI_STATISTICS)} statistics reject at 5%"
    ctx.decisions["cointegration"] = (
        f"cointegrated ({count})" if result.decision else f"no cointegration ({count})"
    )
    ctx.tables.append(pedroni_table(result, ctx.context("unit_root")))


@stage("vecm", requires=("ingest",))
def vecm_stage(ctx: PipelineContext) -> None:
    """Long-run relation(s) and the pooled error-correction system"""
    cfg, spec = ctx.cfg, ctx.spec
    p = ctx.require_panel()
    # Runs whatever the cointegration verdict; the verdict is stamped into the header
    context = ctx.context("cointegration")
    betas = estimate_long_run_relations(p, spec)
    est = estimate_vecm(p, spec, betas, workers=cfg.workers)
    ctx.long_run = betas
    ctx.vecm = est

    dummy = cfg.dummy_name
    b = betas[0]
    if dummy in b.se:
        t = b.t_ratio(dummy)
        p_value = normal_p_value(t, "two")
        ctx.decisions["long_run_dummy"] = (
            f"{dummy} t = {t:.4f}, p = {p_value:.4f} ({_verdict(p_value < 0.05)} zero effect at 5%)"
        )
    else:
        ctx.decisions["long_run_dummy"] = f"{dummy} not estimated in the long-run relation"
    ctx.decisions["adjustment"] = f"loading on {spec.dependent}: {est.alpha[0, 0]:.4f}"
    ctx.tables.append(vecm_table(est, context))
    ctx.tables.append(long_run_table(est, context))


@stage("dynamics", requires=("vecm",))
def dynamics_stage(ctx: PipelineContext) -> None:
    """Companion roots, impulse responses and variance decomposition"""
    cfg = ctx.cfg
    result = analyze_dynamics(ctx.require_vecm(), ctx.spec, cfg.horizon, cfg.shock_scales)
    ctx.dynamics = result
    ctx.decisions["stability"] = (
        f"{result.companion.count_unit_roots()} unit roots, "
        f"largest modulus {result.companion.max_modulus:.4f}"
    )
    context = ctx.context("cointegration")
    ctx.tables.append(fevd_table(result.fevd, context))
    ctx.tables.append(irf_table(result.irf, context))
    ctx.tables.append(roots_table(result.companion, context))


@stage("diagnostics", requires=("vecm",))
def diagnostics_stage(ctx: PipelineContext) -> None:
    """Granger block exogeneity, residual LM and White tests, slope homogeneity"""
    cfg = ctx.cfg
    est = ctx.require_vecm()
    context = ctx.context("cointegration")

    granger = granger_block_exogeneity(est)
    ctx.decisions["granger"] = (
        f"all lags excluded from D({ctx.spec.dependent}): {_verdict(granger[-1].reject)}"
    )
    ctx.tables.append(granger_table(granger, context))

    lm = serial_correlation_lm(est, cfg.lm_max_lag, workers=cfg.workers)
    rejected = [r.name for r in lm["single"] + lm["cumulative"] if r.reject]
    ctx.decisions["serial_correlation"] = (
        f"rejected for {', '.join(rejected)}" if rejected else "no rejection at 5%"
    )
    ctx.tables.append(serial_lm_table(lm, context))

    white = heteroskedasticity_white(est, cfg.white_cross_terms)
    ctx.decisions["heteroskedasticity"] = f"joint White test: {_verdict(white.reject)}"
    ctx.tables.append(white_table(white, context))

    homogeneity = slope_homogeneity(ctx.require_panel(), ctx.spec, cfg.homogeneity_two_sided)
    ctx.decisions["slope_homogeneity"] = f"homogeneous slopes: {_verdict(homogeneity.reject)}"
    ctx.tables.append(homogeneity_table(homogeneity, context))


# ============================================================================
# Driver
# ============================================================================


def run_pipeline(
    cfg: RunConfig,
    stages: Optional[Iterable[str]] = None,
    *,
    out_dir: Optional[str | Path] = None,
    write: bool = True,
) -> ReportBundle:
    """Run the requested stages (all by default) in order and write the bundle.

    Every stage runs regardless of upstream decisions.  A failing stage ends
    the run: the tables produced so far are written with a FAILED marker and
    StageFailed is raised with the stage name.
    """
    cfg = cfg.with_environment()
    ctx = PipelineContext(cfg=cfg, spec=cfg.model_spec())
    bundle = ReportBundle(
        meta={"version": VERSION, "config_hash": config_hash(cfg), "seed": cfg.seed},
        started_at=utc_timestamp(),
    )
    out = Path(out_dir if out_dir is not None else cfg.output_dir)

    def finish(status: str, failed_stage: Optional[str] = None, error: Optional[str] = None) -> None:
        bundle.tables = ctx.tables + [summary_table(ctx.decisions, status, failed_stage)]
        bundle.status = status  # type: ignore[assignment]
        bundle.failed_stage = failed_stage
        bundle.error = error
        bundle.finished_at = utc_timestamp()
        if write:
            write_bundle(bundle, out, cfg.formats, resolved_config_text(cfg))  # type: ignore[arg-type]

    for name in resolve_stages(stages):
        info = STAGES[name]
        logger.info("Stage %s: %s", name, info.description)
        start = time.perf_counter()
        try:
            try:
                info.func(ctx)
            except (np.linalg.LinAlgError, FloatingPointError) as e:
                raise NumericalError(f"{type(e).__name__}: {e}") from e
        except PanelError as e:
            logger.error("Stage %s failed: %s", name, e.message)
            finish("FAILED", name, e.message)
            raise StageFailed(name, e) from e
        logger.info("Stage %s finished in %.2fs", name, time.perf_counter() - start)

    finish("OK")
    return bundle
