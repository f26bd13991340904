"""panelbreak engine - panel cointegration and VECM analysis

Panel data on emissions, energy use, income and population are tested for
unit roots and cointegration, fitted with a pooled vector error-correction
model that carries a policy structural-break dummy, and examined through
impulse responses, variance decompositions and residual diagnostics.

Architecture:
- errors.py: exception hierarchy; ValidationError exits 2, NumericalError exits 3
- utils.py: TestReport, row TypedDicts, deterministic parallel map
- config.py: RunConfig (flat TOML), environment overrides, config hash
- registry.py: @stage decorator and stage registry
- api_panel.py: PanelDataset, series views, transforms
- api_regress.py: OLS, Wald restrictions, long-run variance
- api_unit_root.py: LLC, IPS, ADF-Fisher, PP-Fisher
- api_coint.py: Pedroni residual cointegration tests
- api_vecm.py: long-run relation and pooled error-correction system
- api_dynamics.py: companion roots, IRF, FEVD, simulation
- api_diagnostics.py: Granger, LM serial correlation, White, slope homogeneity
- api_synth.py: seeded synthetic panels
- api_ingest.py: long CSV in/out, policy dummy, panel preparation
- report.py: tables, bundle rendering (csv, markdown, json)
- pipeline.py: stages and run_pipeline
"""

# Infrastructure modules
from . import errors
from . import utils
from . import config
from . import registry

# Analysis modules
from . import api_panel
from . import api_regress
from . import api_unit_root
from . import api_coint
from . import api_vecm
from . import api_dynamics
from . import api_diagnostics
from . import api_synth
from . import api_ingest

# Reporting and orchestration; importing pipeline registers the @stage functions
from . import report
from . import pipeline

# Re-export key components for external use
from .errors import PanelError, ValidationError, NumericalError, StageFailed
from .config import RunConfig, load_config, default_config, config_hash
from .registry import STAGES, stage, stage_names
from .api_panel import PanelDataset
from .api_vecm import ModelSpec
from .api_synth import DgpSpec, generate
from .api_ingest import parse_long_csv, build_policy_dummy, write_long_csv
from .report import ReportBundle, render_report
from .pipeline import run_pipeline

__all__ = [
    # Infrastructure modules
    "errors",
    "utils",
    "config",
    "registry",
    # Analysis modules
    "api_panel",
    "api_regress",
    "api_unit_root",
    "api_coint",
    "api_vecm",
    "api_dynamics",
    "api_diagnostics",
    "api_synth",
    "api_ingest",
    "report",
    "pipeline",
    # Re-exported components
    "PanelError",
    "ValidationError",
    "NumericalError",
    "StageFailed",
    "RunConfig",
    "load_config",
    "default_config",
    "config_hash",
    "STAGES",
    "stage",
    "stage_names",
    "PanelDataset",
    "ModelSpec",
    "DgpSpec",
    "generate",
    "parse_long_csv",
    "build_policy_dummy",
    "write_long_csv",
    "ReportBundle",
    "render_report",
    "run_pipeline",
]
