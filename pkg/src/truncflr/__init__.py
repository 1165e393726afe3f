"""Truncated functional linear regression: Y = a + int_0^theta b(t) X(t) dt + noise."""

from .bootstrap import BootstrapBands, residual_bootstrap
from .errors import (
    DimensionError,
    DomainError,
    IllConditionedError,
    InfeasibleMError,
    InsufficientDataError,
    NumericalError,
    ParseError,
    TruncFLRError,
)
from .flm import PilotFit, bic_select_m, fit_pc_regression, predict
from .fpca import EigenSystem, eigensystem, empirical_covariance, scores
from .numerics import CurveSet, Grid, inner_product, restricted_inner_product, trig_basis
from .simstudy import SimConfig, StudyReport, run_study
from .truncated import ThetaGrid, TruncatedFit, fit_method_a, fit_method_b, truncate_and_correct
from .tuning import TuningOptions, TuningReport, estimate, select_lambda

__version__ = "0.1.0"

__all__ = [
    "BootstrapBands",
    "residual_bootstrap",
    "DimensionError",
    "DomainError",
    "IllConditionedError",
    "InfeasibleMError",
    "InsufficientDataError",
    "NumericalError",
    "ParseError",
    "TruncFLRError",
    "PilotFit",
    "bic_select_m",
    "fit_pc_regression",
    "predict",
    "EigenSystem",
    "eigensystem",
    "empirical_covariance",
    "scores",
    "CurveSet",
    "Grid",
    "inner_product",
    "restricted_inner_product",
    "trig_basis",
    "SimConfig",
    "StudyReport",
    "run_study",
    "ThetaGrid",
    "TruncatedFit",
    "fit_method_a",
    "fit_method_b",
    "truncate_and_correct",
    "TuningOptions",
    "TuningReport",
    "estimate",
    "select_lambda",
]
