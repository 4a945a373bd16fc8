"""Exact instance-averaged depth-1 QAOA success probabilities for random boolean CSPs."""

__version__ = "0.1.0"

from .tables import (  # noqa: E402
    WITH_REPETITION, WITHOUT_REPETITION, Clause, CspInstance, Fixed, HammingSpec, Poisson, SamplerConfig,
    TruthTable, count_true_rows, evaluate_clause, parse_truth_table, sample_instance,
)
from .success import QaoaAngles, SuccessQuery, evaluate_success, success_curve, success_probability  # noqa: E402

__all__ = [
    "WITH_REPETITION", "WITHOUT_REPETITION", "Clause", "CspInstance", "Fixed", "HammingSpec", "Poisson",
    "SamplerConfig", "TruthTable", "count_true_rows", "evaluate_clause", "parse_truth_table", "sample_instance",
    "QaoaAngles", "SuccessQuery", "evaluate_success", "success_curve", "success_probability",
]
