"""Mean and quantile decision criteria over a finite list of candidate rules."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DecisionProblem,
    DecisionRule,
    Prior,
    bayes_loss_distribution,
    bayes_risk,
    loss_distribution,
    quantile,
    risk_vector,
)
from .errors import DomainError, StructuralError, ValidationError

TIE_TOL = 1e-12


class CriterionKind(str, enum.Enum):
    MINIMAX_RISK = "MinimaxRisk"
    MINIMAX_REGRET = "MinimaxRegret"
    BAYES_RISK = "BayesRisk"
    QUANTILE_MINIMAX = "QuantileMinimax"
    QUANTILE_MINIMAX_REGRET = "QuantileMinimaxRegret"
    HYBRID_QUANTILE_BAYES = "HybridQuantileBayes"
    BAYES_QUANTILE = "BayesQuantile"

    @property
    def needs_lambda(self) -> bool:
        return self in _QUANTILE_KINDS

    @property
    def needs_prior(self) -> bool:
        return self in _PRIOR_KINDS


_QUANTILE_KINDS = {
    CriterionKind.QUANTILE_MINIMAX,
    CriterionKind.QUANTILE_MINIMAX_REGRET,
    CriterionKind.HYBRID_QUANTILE_BAYES,
    CriterionKind.BAYES_QUANTILE,
}
_PRIOR_KINDS = {
    CriterionKind.BAYES_RISK,
    CriterionKind.HYBRID_QUANTILE_BAYES,
    CriterionKind.BAYES_QUANTILE,
}


@dataclass(frozen=True)
class CriterionSpec:
    kind: CriterionKind
    lam: float | None = None
    prior: Prior | None = None

    def __post_init__(self):
        kind = CriterionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind.needs_lambda:
            if self.lam is None:
                raise ValidationError(f"{kind.value} requires a quantile level lambda")
            if not 0.0 < self.lam < 1.0:
                raise DomainError(f"lambda must lie in (0, 1), got {self.lam!r}")
        if kind.needs_prior and self.prior is None:
            raise ValidationError(f"{kind.value} requires a prior")
        if self.prior is not None and not isinstance(self.prior, Prior):
            object.__setattr__(self, "prior", Prior(self.prior))

    @classmethod
    def from_json(cls, obj: dict) -> "CriterionSpec":
        prior = obj.get("prior")
        return cls(
            kind=CriterionKind(obj["kind"]),
            lam=obj.get("lambda"),
            prior=Prior(prior) if prior is not None else None,
        )

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.lam is not None:
            out["lambda"] = self.lam
        if self.prior is not None:
            out["prior"] = self.prior.weights.tolist()
        return out


@dataclass
class CriterionResult:
    optimal_rules: list[int]
    value: float
    per_rule_values: list[float]

    def to_json(self) -> dict:
        return {
            "optimal_rules": list(self.optimal_rules),
            "value": self.value,
            "per_rule_values": list(self.per_rule_values),
        }


def _state_quantiles(problem: DecisionProblem, rule: DecisionRule, lam: float) -> np.ndarray:
    return np.array([quantile(loss_distribution(problem, rule, s), lam) for s in range(problem.n_states)])


def evaluate_criterion(problem: DecisionProblem, rule: DecisionRule, spec: CriterionSpec) -> float:
    """Criterion value of one rule; smaller is better for every kind."""
    if spec.prior is not None and spec.prior.weights.size != problem.n_states:
        raise StructuralError(
            f"prior has {spec.prior.weights.size} weights for {problem.n_states} states"
        )
    kind = spec.kind
    if kind is CriterionKind.MINIMAX_RISK:
        return float(risk_vector(problem, rule).max())
    if kind is CriterionKind.MINIMAX_REGRET:
        return float((risk_vector(problem, rule) - problem.min_loss()).max())
    if kind is CriterionKind.BAYES_RISK:
        return bayes_risk(problem, rule, spec.prior)
    if kind is CriterionKind.QUANTILE_MINIMAX:
        return float(_state_quantiles(problem, rule, spec.lam).max())
    if kind is CriterionKind.QUANTILE_MINIMAX_REGRET:
        return float((_state_quantiles(problem, rule, spec.lam) - problem.min_loss()).max())
    if kind is CriterionKind.HYBRID_QUANTILE_BAYES:
        return float(spec.prior.weights @ _state_quantiles(problem, rule, spec.lam))
    if kind is CriterionKind.BAYES_QUANTILE:
        return quantile(bayes_loss_distribution(problem, rule, spec.prior), spec.lam)
    raise ValueError(f"unhandled criterion {kind}")


def argmin_result(values: Sequence[float], tol: float = TIE_TOL) -> CriterionResult:
    values = [float(v) for v in values]
    if not values:
        raise ValidationError("rule list must be non-empty")
    best = min(values)
    optimal = [i for i, v in enumerate(values) if v <= best + tol]
    return CriterionResult(optimal, best, values)


def argmax_result(values: Sequence[float], tol: float = TIE_TOL) -> CriterionResult:
    values = [float(v) for v in values]
    if not values:
        raise ValidationError("rule list must be non-empty")
    best = max(values)
    optimal = [i for i, v in enumerate(values) if v >= best - tol]
    return CriterionResult(optimal, best, values)


def solve(problem: DecisionProblem, rules: Sequence[DecisionRule], spec: CriterionSpec) -> CriterionResult:
    """Evaluate every candidate and report all minimizers within 1e-12."""
    if not rules:
        raise ValidationError("rule list must be non-empty")
    return argmin_result([evaluate_criterion(problem, r, spec) for r in rules])
