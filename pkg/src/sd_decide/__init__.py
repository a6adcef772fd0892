"""Decision rules judged by their full state-dependent loss distributions."""

from .core import (
    DecisionProblem,
    DecisionRule,
    DiscreteDistribution,
    Prior,
    bayes_loss_distribution,
    bayes_risk,
    loss_distribution,
    quantile,
    risk,
    risk_vector,
)
from .criteria import CriterionKind, CriterionResult, CriterionSpec, solve
from .dominance import (
    AdmissibilityReport,
    DominanceVerdict,
    Relation,
    mean_admissible_set,
    sd_admissible_set,
    sd_compare,
    sd_compare_cdf,
    sd_compare_increasing,
    sd_compare_quantiles,
)
from .errors import CapacityError, DomainError, SDDecideError, StructuralError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport",
    "CapacityError",
    "CriterionKind",
    "CriterionResult",
    "CriterionSpec",
    "DecisionProblem",
    "DecisionRule",
    "DiscreteDistribution",
    "DomainError",
    "DominanceVerdict",
    "Prior",
    "Relation",
    "SDDecideError",
    "StructuralError",
    "ValidationError",
    "bayes_loss_distribution",
    "bayes_risk",
    "loss_distribution",
    "mean_admissible_set",
    "quantile",
    "risk",
    "risk_vector",
    "sd_admissible_set",
    "sd_compare",
    "sd_compare_cdf",
    "sd_compare_increasing",
    "sd_compare_quantiles",
    "solve",
]
