"""Focused sampling: ESS-controlled Boltzmann reweighting of proposal batches."""

from focuskit.errors import (
    AdvantageTooWeak,
    ClipInfeasible,
    ConfigError,
    DegenerateSpace,
    FocusKitError,
    InvalidBatch,
    InvalidTarget,
    InvalidWeights,
    NonFiniteScore,
)
from focuskit.focus import (
    Bisection,
    DiagnosticsRecord,
    FixedStep,
    FocusConfig,
    FocusResult,
    ResampleScheme,
    ScoredBatch,
    adapt_beta,
    ess,
    estimate_expectation,
    focus,
    focus_with_fallback,
    normalized_weights,
    regularize,
    resample,
    select_best,
)

__version__ = "0.1.0"
