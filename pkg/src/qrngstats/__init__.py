"""Photon-counting statistics and arrival-time QRNG analysis."""

__version__ = "0.1.0"

from .metrics import DesignMetrics, design_metrics  # noqa: E402,F401
from .photon_models import parse_model, sample_counts, timebin_pmf  # noqa: E402,F401
from .quantumness import TwoFoldReport, two_fold  # noqa: E402,F401
from .qrng_sim import (  # noqa: E402,F401
    QrngParams,
    simulate_external_reference,
    simulate_free_running,
    simulate_interval_comparison,
)
from .stats_core import SampleSummary, summarize  # noqa: E402,F401
