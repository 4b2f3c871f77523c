"""Variational estimation of stochastic block model connection probabilities
from partially observed graphs."""

from .errors import (
    CapacityError,
    ConsistencyError,
    DataError,
    DegenerateEvaluationError,
    NumericalError,
    ParameterError,
    RangeError,
    VarSbmError,
)
from .estimator import naive_persistent_theta, oracle_theta, trivial_theta, var_theta
from .evaluation import frobenius_error, misclassified, normalized_sparse_error, precision_recall
from .likelihood import brute_force_mle, log_likelihood_conditional, profile_q
from .modelselect import icl_score, select_k
from .netcore import SbmParams, generate_mask, generate_sbm
from .svt import SvtConfig, soft_impute
from .varem import EmConfig, FitResult, fit_varem

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "ConsistencyError", "DataError", "DegenerateEvaluationError",
    "NumericalError", "ParameterError", "RangeError", "VarSbmError",
    "naive_persistent_theta", "oracle_theta", "trivial_theta", "var_theta",
    "frobenius_error", "misclassified", "normalized_sparse_error", "precision_recall",
    "brute_force_mle", "log_likelihood_conditional", "profile_q",
    "icl_score", "select_k",
    "SbmParams", "generate_mask", "generate_sbm",
    "SvtConfig", "soft_impute",
    "EmConfig", "FitResult", "fit_varem",
]
