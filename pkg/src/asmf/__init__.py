"""Active subspace estimation with single- and multifidelity gradient samples."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AsmfError,
    ConvergenceError,
    DataFormatError,
    InvariantViolation,
    NonFiniteGradientError,
    NumericalError,
    ParameterError,
)
from .symmat import SymMatrix, eigendecomp, intrinsic_dimension, operator_norm, relative_error  # noqa: E402
from .models import (  # noqa: E402
    GradientOracle,
    InputDensity,
    ModelPair,
    QuadraticModelSpec,
    exact_H,
    exact_fidelity_params,
    quadratic_pair,
)
from .bounds import FidelityParams, min_m2_ratio, mf_m1_expectation, mf_m1_probability  # noqa: E402
from .estimators import GradientBatch, estimate_from_batch, estimate_mf, estimate_sf  # noqa: E402
from .subspace import Subspace, active_subspace, subspace_report  # noqa: E402
from .experiments import StudyConfig, StudyResult, compare_budget, run_study  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "AsmfError", "ConvergenceError", "DataFormatError", "InvariantViolation",
    "NonFiniteGradientError", "NumericalError", "ParameterError",
    "SymMatrix", "eigendecomp", "intrinsic_dimension", "operator_norm", "relative_error",
    "GradientOracle", "InputDensity", "ModelPair", "QuadraticModelSpec", "exact_H",
    "exact_fidelity_params", "quadratic_pair",
    "FidelityParams", "min_m2_ratio", "mf_m1_expectation", "mf_m1_probability",
    "GradientBatch", "estimate_from_batch", "estimate_mf", "estimate_sf",
    "Subspace", "active_subspace", "subspace_report",
    "StudyConfig", "StudyResult", "compare_budget", "run_study",
    "BACKEND",
]
