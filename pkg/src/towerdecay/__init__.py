"""Correlation decay on towers over induced maps: renewal operator sequences,
dynamical truncation, explicit bounds and numerical witnesses."""

from ._validation import (
    AliasingError,
    ConvergenceError,
    NormalizationError,
    SingularityError,
    StateSpaceError,
    ValidationError,
)
from .bounds import BoundParams, main_bound, predicted_envelope, s_q, select_params, trunc_bound
from .correlate import (
    CorrelationSeries,
    DecayRateRegressor,
    Observable,
    fit_rate,
    mc_correlation,
    operator_correlation,
)
from .operators import OperatorFamily, build_family, eval_R, spectral_data
from .renewal import compute_T, extract_coefficients, scalar_renewal, split_J
from .systems import InducedSystem, ReturnTimeTailEstimator, TailModel, build_iid_system, build_lsv_system
from .tower import Tower, build_tower, truncate

__version__ = "0.1.0"

__all__ = [
    "AliasingError",
    "BoundParams",
    "ConvergenceError",
    "CorrelationSeries",
    "DecayRateRegressor",
    "InducedSystem",
    "NormalizationError",
    "Observable",
    "OperatorFamily",
    "ReturnTimeTailEstimator",
    "SingularityError",
    "StateSpaceError",
    "TailModel",
    "Tower",
    "ValidationError",
    "build_family",
    "build_iid_system",
    "build_lsv_system",
    "build_tower",
    "compute_T",
    "eval_R",
    "extract_coefficients",
    "fit_rate",
    "main_bound",
    "mc_correlation",
    "operator_correlation",
    "predicted_envelope",
    "s_q",
    "scalar_renewal",
    "select_params",
    "spectral_data",
    "split_J",
    "trunc_bound",
    "truncate",
]
