"""panelbreak Test Package.

This package contains test modules for each engine module.
Tests are registered via the @test decorator from the framework module.
"""

# Import all test modules to register tests when the package is imported
from . import test_api_panel
from . import test_api_regress
from . import test_api_unit_root
from . import test_api_coint
from . import test_api_vecm
from . import test_api_dynamics
from . import test_api_diagnostics
from . import test_api_synth
from . import test_api_ingest
from . import test_config
from . import test_report
from . import test_pipeline

from ..framework import run_tests, TESTS

__all__ = ["run_tests", "TESTS"]
