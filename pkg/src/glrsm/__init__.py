"""Multiple change-point detection for AR, ARMA and GARCH series.

A likelihood-ratio scan proposes candidates, an MDL criterion picks a subset
by dynamic programming, each survivor is re-estimated in a local window and
given a confidence interval from the limiting argmax law.

>>> from glrsm import ModelSpec, PipelineConfig, detect
>>> res = detect(x, PipelineConfig.for_model(ModelSpec.ar(1)))  # doctest: +SKIP
"""

from glrsm._backend import BACKEND
from glrsm.ci import ArgmaxLawTable, argmax_law_quantile, confidence_interval, simultaneous_level
from glrsm.errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateContrastError,
    DomainError,
    GLRSMError,
    InsufficientDataError,
)
from glrsm.models import FittedModel, ModelSpec, fit_mle, simulate
from glrsm.pipeline import DetectionResult, PipelineConfig, detect
from glrsm.refine import refine_all, refine_changepoint, single_changepoint_estimate
from glrsm.scan import ScanConfig, default_h, extract_candidates, scan_series
from glrsm.selection import SelectionConfig, mdl, select_subset
from glrsm.sim import PiecewiseSpec, builtin_model, generate_piecewise, run_replications

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ArgmaxLawTable",
    "ConfigurationError",
    "ConvergenceError",
    "DegenerateContrastError",
    "DetectionResult",
    "DomainError",
    "FittedModel",
    "GLRSMError",
    "InsufficientDataError",
    "ModelSpec",
    "PiecewiseSpec",
    "PipelineConfig",
    "ScanConfig",
    "SelectionConfig",
    "argmax_law_quantile",
    "builtin_model",
    "confidence_interval",
    "default_h",
    "detect",
    "extract_candidates",
    "fit_mle",
    "generate_piecewise",
    "mdl",
    "refine_all",
    "refine_changepoint",
    "run_replications",
    "scan_series",
    "select_subset",
    "simulate",
    "simultaneous_level",
    "single_changepoint_estimate",
]
