"""First-order stochastic dominance between discrete distributions and
admissibility of finite rule sets.

Three comparison routes are provided. They look at the same pair of
distributions through different lenses (CDFs, quantile functions, and means
of threshold indicators) and must always return the same verdict; the test
suite cross-checks them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    ATOM_TOL,
    DecisionProblem,
    DecisionRule,
    DiscreteDistribution,
    action_probabilities,
    check_rule,
    loss_distribution,
    quantile,
    risk_vector,
)
from .errors import ValidationError

STRICT_TOL = 1e-12


class Relation(str, enum.Enum):
    EQUAL = "Equal"
    FIRST_DOMINATES = "FirstDominates"
    SECOND_DOMINATES = "SecondDominates"
    INCOMPARABLE = "Incomparable"

    def flipped(self) -> "Relation":
        if self is Relation.FIRST_DOMINATES:
            return Relation.SECOND_DOMINATES
        if self is Relation.SECOND_DOMINATES:
            return Relation.FIRST_DOMINATES
        return self


@dataclass(frozen=True)
class DominanceVerdict:
    """Outcome of comparing p against q.

    ``witness`` is a threshold t (CDF and threshold routes) or a level lambda
    (quantile route) at which strictness, or the first crossing, shows up.
    """

    relation: Relation
    witness: float | None = None
    witness_kind: str | None = None

    def __post_init__(self):
        if (self.witness is None) != (self.relation is Relation.EQUAL):
            raise ValidationError("witness must be present exactly when the relation is not Equal")

    @property
    def first_weakly_dominates(self) -> bool:
        return self.relation in (Relation.EQUAL, Relation.FIRST_DOMINATES)

    @property
    def second_weakly_dominates(self) -> bool:
        return self.relation in (Relation.EQUAL, Relation.SECOND_DOMINATES)

    def to_json(self) -> dict:
        return {"relation": self.relation.value, "witness": self.witness, "witness_kind": self.witness_kind}


def verdict_from_gaps(gaps: np.ndarray, points: np.ndarray, tol: float, kind: str) -> DominanceVerdict:
    """Turn signed gaps into a verdict.

    ``gaps[k] > tol`` is evidence that the first distribution is ahead at
    ``points[k]``; ``gaps[k] < -tol`` that the second one is.
    """
    signs = np.where(gaps > tol, 1, np.where(gaps < -tol, -1, 0))
    strict = np.flatnonzero(signs)
    if strict.size == 0:
        return DominanceVerdict(Relation.EQUAL)
    first_sign = signs[strict[0]]
    opposite = np.flatnonzero(signs == -first_sign)
    if opposite.size:
        return DominanceVerdict(Relation.INCOMPARABLE, float(points[opposite[0]]), kind)
    rel = Relation.FIRST_DOMINATES if first_sign > 0 else Relation.SECOND_DOMINATES
    return DominanceVerdict(rel, float(points[strict[0]]), kind)


def sd_compare_cdf(p: DiscreteDistribution, q: DiscreteDistribution, tol: float = STRICT_TOL) -> DominanceVerdict:
    """Compare CDFs on the union support. FirstDominates means F_p <= F_q."""
    points = np.union1d(p.support, q.support)
    gaps = q.cdf(points) - p.cdf(points)
    return verdict_from_gaps(gaps, points, tol, "t")


def _merge_levels(levels: np.ndarray) -> np.ndarray:
    levels = np.sort(levels)
    if levels.size == 0:
        return levels
    keep = np.concatenate(([True], np.diff(levels) > STRICT_TOL))
    return levels[keep]


def quantile_levels(p: DiscreteDistribution, q: DiscreteDistribution) -> np.ndarray:
    """Cumulative-weight breakpoints of both distributions plus the midpoints
    between adjacent ones (with 0 and 1 as outer ends)."""
    bps = np.concatenate((p.cumulative(), q.cumulative()))
    bps = bps[(bps > STRICT_TOL) & (bps < 1.0 - STRICT_TOL)]
    bps = _merge_levels(bps)
    ends = np.concatenate(([0.0], bps, [1.0]))
    mids = 0.5 * (ends[:-1] + ends[1:])
    return np.sort(np.concatenate((bps, mids)))


def sd_compare_quantiles(p: DiscreteDistribution, q: DiscreteDistribution) -> DominanceVerdict:
    """Compare quantile functions V_lambda on a finite sufficient set of levels.

    FirstDominates means V_lambda(p) >= V_lambda(q) for every lambda. Quantile
    values are support points, so they are compared exactly.
    """
    lams = quantile_levels(p, q)
    gaps = quantile(p, lams) - quantile(q, lams)
    return verdict_from_gaps(gaps, lams, 0.0, "lambda")


def _survival(dist: DiscreteDistribution, thresholds: np.ndarray) -> np.ndarray:
    above = dist.support[None, :] > thresholds[:, None]
    return (above * dist.weights[None, :]).sum(axis=1)


def sd_compare_increasing(p: DiscreteDistribution, q: DiscreteDistribution, tol: float = STRICT_TOL) -> DominanceVerdict:
    """Compare E f(X) over the threshold family f_t(y) = 1[y > t].

    On finite supports these indicators span the cone of increasing functions,
    so ordering their means orders every increasing function's mean.
    """
    points = np.union1d(p.support, q.support)
    gaps = _survival(p, points) - _survival(q, points)
    return verdict_from_gaps(gaps, points, tol, "t")


COMPARATORS: dict[str, Callable[[DiscreteDistribution, DiscreteDistribution], DominanceVerdict]] = {
    "cdf": sd_compare_cdf,
    "quantile": sd_compare_quantiles,
    "increasing": sd_compare_increasing,
}


def sd_compare(p, q, method: str = "cdf") -> DominanceVerdict:
    try:
        fn = COMPARATORS[method]
    except KeyError:
        raise ValueError(f"unknown comparison method {method!r}") from None
    return fn(p, q)


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class Certificate:
    """Rule ``rule`` is beaten by ``dominated_by``; strictness shows at ``state``."""

    rule: int
    dominated_by: int
    state: int
    witness: float

    def to_json(self) -> dict:
        return {"rule": self.rule, "dominated_by": self.dominated_by, "state": self.state, "witness": self.witness}


@dataclass
class AdmissibilityReport:
    admissible: list[int]
    inadmissible: list[Certificate]
    equivalence_groups: list[list[int]]
    mode: str = "sd"
    risk_equivalence_groups: list[list[int]] | None = None

    @property
    def representatives(self) -> list[int]:
        """Lowest-index member of each equivalence group."""
        return [g[0] for g in self.equivalence_groups]

    @property
    def dominated(self) -> list[int]:
        return [c.rule for c in self.inadmissible]

    def to_json(self) -> dict:
        out = {
            "mode": self.mode,
            "admissible": list(self.admissible),
            "inadmissible": [c.to_json() for c in self.inadmissible],
            "equivalence_groups": [list(g) for g in self.equivalence_groups],
        }
        if self.risk_equivalence_groups is not None:
            out["risk_equivalence_groups"] = [list(g) for g in self.risk_equivalence_groups]
        return out


def _group_equal(scores: np.ndarray, members: Sequence[int], tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for j in members:
        for g in groups:
            if np.all(np.abs(scores[g[0]] - scores[j]) <= tol):
                g.append(j)
                break
        else:
            groups.append([j])
    return groups


def pareto_report(
    scores: np.ndarray,
    column_state: np.ndarray,
    column_witness: np.ndarray,
    tol: float,
    mode: str,
) -> AdmissibilityReport:
    """Pairwise elimination on a score table where larger is better.

    Rule j is dominated by rule i when i scores at least as well in every
    column (up to ``tol``) and better by more than ``tol`` in some column.
    The certificate cites the lowest-index dominator and its first strict column.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    if n == 0:
        raise ValidationError("rule list must be non-empty")
    admissible, certs = [], []
    for j in range(n):
        diff = scores - scores[j]
        better = np.all(diff >= -tol, axis=1) & np.any(diff > tol, axis=1)
        dominators = np.flatnonzero(better)
        if dominators.size == 0:
            admissible.append(j)
            continue
        i = int(dominators[0])
        col = int(np.flatnonzero(diff[i] > tol)[0])
        certs.append(Certificate(j, i, int(column_state[col]), float(column_witness[col])))
    groups = _group_equal(scores, admissible, tol)
    return AdmissibilityReport(admissible, certs, groups, mode=mode)


def loss_levels(problem: DecisionProblem, state: int) -> np.ndarray:
    """Distinct loss values of one state, merged at the atom tolerance."""
    vals = np.sort(problem.loss[state])
    keep = np.concatenate(([True], np.diff(vals) > ATOM_TOL))
    return vals[keep]


def cdf_table(problem: DecisionProblem, rules: Sequence[DecisionRule]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Loss CDF of every rule at every (state, loss level) column.

    Every rule's loss distribution in state s is supported on that state's
    loss levels, so these columns are the union support for all pairs.
    """
    probs = np.stack([action_probabilities(problem, r) for r in rules])  # rule, state, action
    cols, states, levels = [], [], []
    for s in range(problem.n_states):
        for t in loss_levels(problem, s):
            mask = problem.loss[s] <= t + ATOM_TOL
            cols.append(probs[:, s, mask].sum(axis=1))
            states.append(s)
            levels.append(t)
    return np.stack(cols, axis=1), np.array(states), np.array(levels)


def sd_admissible_set(problem: DecisionProblem, rules: Sequence[DecisionRule]) -> AdmissibilityReport:
    """SD-admissibility: a rule falls when another rule's loss distribution is
    weakly dominated by it (lower losses) in every state and strictly in one.

    Both groupings are returned: ``equivalence_groups`` joins rules with
    identical loss distributions in every state, ``risk_equivalence_groups``
    the coarser relation of identical risk vectors.
    """
    if not rules:
        raise ValidationError("rule list must be non-empty")
    for r in rules:
        check_rule(problem, r)
    table, states, levels = cdf_table(problem, rules)
    # a larger loss CDF is better
    report = pareto_report(table, states, levels, STRICT_TOL, "sd")
    risks = np.stack([risk_vector(problem, r) for r in rules])
    report.risk_equivalence_groups = _group_equal(risks, report.admissible, STRICT_TOL)
    return report


def mean_admissible_set(problem: DecisionProblem, rules: Sequence[DecisionRule]) -> AdmissibilityReport:
    """Wald admissibility on risk vectors. Witness = risk gap at the cited state."""
    if not rules:
        raise ValidationError("rule list must be non-empty")
    risks = np.stack([risk_vector(problem, r) for r in rules])
    report = pareto_report(-risks, np.arange(problem.n_states), np.zeros(problem.n_states), STRICT_TOL, "mean")
    certs = [
        Certificate(c.rule, c.dominated_by, c.state, float(risks[c.rule, c.state] - risks[c.dominated_by, c.state]))
        for c in report.inadmissible
    ]
    report.inadmissible = certs
    return report


def compare_rules(problem: DecisionProblem, first: DecisionRule, second: DecisionRule, method: str = "cdf") -> list[DominanceVerdict]:
    """Per-state verdicts comparing the loss distributions of two rules."""
    return [
        sd_compare(loss_distribution(problem, first, s), loss_distribution(problem, second, s), method)
        for s in range(problem.n_states)
    ]


def verify_certificate(
    problem: DecisionProblem, rules: Sequence[DecisionRule], cert: Certificate, mode: str = "sd"
) -> bool:
    """Re-derive a certificate from scratch with the pairwise comparators."""
    better, worse = rules[cert.dominated_by], rules[cert.rule]
    if mode == "sd":
        verdicts = compare_rules(problem, better, worse)
        # lower loss is better: the dominator's distribution must sit below
        if not all(v.second_weakly_dominates for v in verdicts):
            return False
        return verdicts[cert.state].relation is Relation.SECOND_DOMINATES
    if mode == "mean":
        rb, rw = risk_vector(problem, better), risk_vector(problem, worse)
        return bool(np.all(rb <= rw + STRICT_TOL) and rb[cert.state] < rw[cert.state] - STRICT_TOL)
    raise ValueError(f"unknown mode {mode!r}")
