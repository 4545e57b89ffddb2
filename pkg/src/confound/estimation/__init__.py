"""Probability tables, directed information and nearest-neighbour information estimators."""

from .info import (
    InfoEstimate,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    mi_null_quantile,
    mutual_information,
    total_correlation,
)
from .tables import (
    ProbTable,
    conditional_directed_information,
    directed_information,
    estimate_conditional_table,
    estimate_joint_table,
    interventional_conditional,
    set_directed_information,
)

__all__ = [
    "InfoEstimate",
    "ProbTable",
    "conditional_directed_information",
    "conditional_entropy",
    "conditional_mutual_information",
    "directed_information",
    "entropy",
    "estimate_conditional_table",
    "estimate_joint_table",
    "interventional_conditional",
    "mi_null_quantile",
    "mutual_information",
    "set_directed_information",
    "total_correlation",
]
