"""Choice between two treatments with test rules.

A state carries the mean welfare of treatment a (``alpha``) and of treatment b
(``beta``). A test rule sends the whole population to b when the data fall in
its acceptance region ``accept_b`` and to a otherwise. All quantities here are
welfare-oriented (larger is better); :func:`induced_problem` converts to the
loss-oriented :class:`~sd_decide.core.DecisionProblem`.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    LEVEL_TOL,
    PROB_TOL,
    DecisionProblem,
    DecisionRule,
    DiscreteDistribution,
    _check_stochastic,
)
from .criteria import CriterionResult, argmax_result, argmin_result
from .dominance import AdmissibilityReport, Certificate, STRICT_TOL, pareto_report
from .errors import CapacityError, DomainError, StructuralError, ValidationError

MAX_ENUMERATION_POINTS = 22
METRIC_TOL = 1e-9
DISTANCE_TIE_TOL = 1e-12
_CHUNK = 1 << 15


def thread_count() -> int:
    """Worker threads for enumeration, capped by ``SD_DECIDE_THREADS`` (0 = auto)."""
    raw = os.environ.get("SD_DECIDE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def binomial_pmf(n: int, p: float) -> np.ndarray:
    k = np.arange(n + 1)
    coef = np.array([math.comb(n, int(i)) for i in k], dtype=float)
    return coef * p**k * (1.0 - p) ** (n - k)


@dataclass(frozen=True, eq=False)
class TreatmentProblem:
    """Two-treatment problem with finite state and sample spaces.

    ``coordinates`` (optional) embeds states in R^k for distance-based rules;
    ``metric`` (optional) is an explicit state-by-state distance matrix.
    ``approximation`` labels instances that stand in for a continuum.
    """

    labels: tuple[str, ...]
    alpha: np.ndarray
    beta: np.ndarray
    sample_points: tuple[str, ...]
    sampling: np.ndarray
    metric: np.ndarray | None = None
    coordinates: np.ndarray | None = None
    approximation: str | None = None

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        beta = np.array(self.beta, dtype=float).reshape(-1)
        sampling = np.array(self.sampling, dtype=float)
        points = tuple(str(x) for x in self.sample_points)
        ns = len(labels)
        if alpha.shape != (ns,) or beta.shape != (ns,):
            raise StructuralError(f"alpha/beta must each have {ns} entries")
        if sampling.shape != (ns, len(points)):
            raise StructuralError(f"sampling has shape {sampling.shape}, expected ({ns}, {len(points)})")
        issues = []
        if ns == 0 or not points:
            issues.append("states and sample points must be non-empty")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            issues.append("alpha and beta must be finite")
        if not np.any(alpha > beta) or not np.any(alpha < beta):
            issues.append("need at least one state with alpha > beta and one with alpha < beta")
        issues += _check_stochastic(sampling, "sampling")
        metric = None
        if self.metric is not None:
            metric = np.array(self.metric, dtype=float)
            if metric.shape != (ns, ns):
                raise StructuralError(f"metric has shape {metric.shape}, expected ({ns}, {ns})")
            issues += _metric_issues(metric)
        coords = None
        if self.coordinates is not None:
            coords = np.array(self.coordinates, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != ns:
                raise StructuralError(f"coordinates have {coords.shape[0]} rows for {ns} states")
        if issues:
            raise ValidationError(issues)
        for name, val in (("labels", labels), ("alpha", alpha), ("beta", beta),
                          ("sample_points", points), ("sampling", sampling),
                          ("metric", metric), ("coordinates", coords)):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def binomial(cls, alpha, beta, n: int, p_by_state, labels=None, approximation=None) -> "TreatmentProblem":
        """Sample space {0..n} successes with Binomial(n, p_s) sampling.

        State coordinates default to the success probabilities, so the
        sample mean is a natural state estimator.
        """
        p = np.asarray(p_by_state, dtype=float)
        if labels is None:
            labels = [f"{x:g}" for x in p]
        sampling = np.stack([binomial_pmf(n, float(x)) for x in p])
        return cls(labels, alpha, beta, [str(k) for k in range(n + 1)], sampling,
                   coordinates=p, approximation=approximation)

    @property
    def n_states(self) -> int:
        return len(self.labels)

    @property
    def n_sample_points(self) -> int:
        return len(self.sample_points)

    @property
    def gap(self) -> np.ndarray:
        """|beta_s - alpha_s|, the regret of choosing the wrong treatment."""
        return np.abs(self.beta - self.alpha)

    @property
    def best(self) -> np.ndarray:
        return np.maximum(self.alpha, self.beta)

    @property
    def worst(self) -> np.ndarray:
        return np.minimum(self.alpha, self.beta)

    def state_distance(self, s: int, t: int) -> float:
        if self.metric is not None:
            return float(self.metric[s, t])
        if self.coordinates is not None:
            return float(np.linalg.norm(self.coordinates[s] - self.coordinates[t]))
        raise ValidationError("problem has neither a metric nor state coordinates")

    def to_json(self) -> dict:
        out = {
            "states": [{"label": l, "alpha": float(a), "beta": float(b)}
                       for l, a, b in zip(self.labels, self.alpha, self.beta)],
            "sample_points": list(self.sample_points),
            "sampling": self.sampling.tolist(),
        }
        if self.metric is not None:
            out["metric"] = self.metric.tolist()
        if self.coordinates is not None:
            out["coordinates"] = self.coordinates.tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TreatmentProblem":
        states = obj["states"]
        labels = [s["label"] for s in states]
        alpha = [s["alpha"] for s in states]
        beta = [s["beta"] for s in states]
        sampling = obj["sampling"]
        coords = obj.get("coordinates")
        if isinstance(sampling, dict):
            spec = sampling["binomial"]
            tp = cls.binomial(alpha, beta, int(spec["n"]), spec["p_by_state"], labels=labels)
            points, matrix = tp.sample_points, tp.sampling
            if coords is None:
                coords = tp.coordinates
        else:
            matrix = sampling
            points = obj.get("sample_points") or [str(i) for i in range(len(sampling[0]))]
        return cls(labels, alpha, beta, points, matrix, metric=obj.get("metric"),
                   coordinates=coords, approximation=obj.get("approximation"))


def _metric_issues(m: np.ndarray) -> list[str]:
    issues = []
    if np.any(m < -METRIC_TOL):
        issues.append("metric has negative distances")
    if np.any(np.abs(np.diag(m)) > METRIC_TOL):
        issues.append("metric diagonal must be zero")
    if np.any(np.abs(m - m.T) > METRIC_TOL):
        issues.append("metric must be symmetric")
    # d(i, k) <= d(i, j) + d(j, k) for all triples
    via = m[:, :, None] + m[None, :, :]
    if np.any(m[:, None, :] > via + METRIC_TOL):
        issues.append("metric violates the triangle inequality")
    return issues


@dataclass(frozen=True)
class TestRule:
    """Acceptance region for treatment b, as a set of sample-point indices."""

    __test__ = False  # keep pytest from collecting this class

    accept_b: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "accept_b", frozenset(int(i) for i in self.accept_b))

    @classmethod
    def from_mask(cls, mask) -> "TestRule":
        return cls(frozenset(np.flatnonzero(np.asarray(mask, dtype=bool)).tolist()))

    @classmethod
    def from_index(cls, index: int, n_points: int) -> "TestRule":
        """Rule whose region is the set bits of ``index`` (bit k = sample point k)."""
        return cls(frozenset(k for k in range(n_points) if (index >> k) & 1))

    def index(self) -> int:
        return sum(1 << k for k in self.accept_b)

    def mask(self, n_points: int) -> np.ndarray:
        if self.accept_b and (min(self.accept_b) < 0 or max(self.accept_b) >= n_points):
            raise IndexError(f"acceptance region {sorted(self.accept_b)} exceeds {n_points} sample points")
        m = np.zeros(n_points, dtype=bool)
        m[list(self.accept_b)] = True
        return m

    def to_json(self) -> dict:
        return {"accept_b": sorted(self.accept_b)}


def always_a() -> TestRule:
    return TestRule(frozenset())


def always_b(n_points: int) -> TestRule:
    return TestRule(frozenset(range(n_points)))


@dataclass(frozen=True, eq=False)
class FractionalRule:
    """Share of the population assigned to b at each sample point."""

    fraction_b: np.ndarray

    def __post_init__(self):
        f = np.array(self.fraction_b, dtype=float).reshape(-1)
        if np.any(f < 0) or np.any(f > 1) or not np.all(np.isfinite(f)):
            raise ValidationError("fractions must lie in [0, 1]")
        f.setflags(write=False)
        object.__setattr__(self, "fraction_b", f)

    @classmethod
    def from_test_rule(cls, rule: TestRule, n_points: int) -> "FractionalRule":
        return cls(rule.mask(n_points).astype(float))


def _fraction(tp: TreatmentProblem, rule) -> np.ndarray:
    if isinstance(rule, TestRule):
        return rule.mask(tp.n_sample_points).astype(float)
    f = rule.fraction_b
    if f.size != tp.n_sample_points:
        raise StructuralError(f"rule covers {f.size} sample points, problem has {tp.n_sample_points}")
    return f


def _state(tp: TreatmentProblem, state) -> int:
    s = int(state)
    if not 0 <= s < tp.n_states:
        raise IndexError(f"state index {s} out of range [0, {tp.n_states})")
    return s


def error_probabilities(tp: TreatmentProblem, rule: TestRule) -> np.ndarray:
    """rho_s for every state: probability of selecting the inferior treatment."""
    m = rule.mask(tp.n_sample_points)
    q_b = tp.sampling[:, m].sum(axis=1)
    q_a = tp.sampling[:, ~m].sum(axis=1)
    return np.where(tp.alpha < tp.beta, q_a, np.where(tp.alpha > tp.beta, q_b, 0.0))


def error_probability(tp: TreatmentProblem, rule: TestRule, state) -> float:
    return float(error_probabilities(tp, rule)[_state(tp, state)])


def expected_welfare(tp: TreatmentProblem, rule, state) -> float:
    """alpha (1 - E delta) + beta E delta, with E delta the mean share sent to b."""
    s = _state(tp, state)
    share_b = float(tp.sampling[s] @ _fraction(tp, rule))
    return float(tp.alpha[s] * (1.0 - share_b) + tp.beta[s] * share_b)


def welfare_from_error(tp: TreatmentProblem, rho, state=None):
    """Mean welfare of a test rule written through its error probability."""
    lo, hi = (tp.worst, tp.best) if state is None else (tp.worst[state], tp.best[state])
    return lo * rho + hi * (1.0 - rho)


def quantile_welfare(tp: TreatmentProblem, rule: TestRule, state, lam: float) -> float:
    """lambda-quantile of welfare: a step down to the worse outcome once rho >= lambda."""
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam!r}")
    s = _state(tp, state)
    rho = error_probability(tp, rule, s)
    return float(tp.worst[s] if rho >= lam - LEVEL_TOL else tp.best[s])


def welfare_distribution(tp: TreatmentProblem, rule: TestRule, state) -> DiscreteDistribution:
    """Sampling distribution of realized welfare in one state."""
    s = _state(tp, state)
    m = rule.mask(tp.n_sample_points)
    q_b = min(max(float(tp.sampling[s, m].sum()), 0.0), 1.0)
    return DiscreteDistribution.from_atoms([tp.alpha[s], tp.beta[s]], [1.0 - q_b, q_b])


def induced_problem(tp: TreatmentProblem) -> DecisionProblem:
    """Binary-loss decision problem with actions a and b.

    Loss is ``C - welfare`` with C the largest welfare anywhere, which keeps
    losses non-negative; a common shift changes no comparison.
    """
    c = float(max(tp.alpha.max(), tp.beta.max()))
    loss = np.column_stack([c - tp.alpha, c - tp.beta])
    return DecisionProblem(tp.labels, tp.sample_points, ("a", "b"), loss, tp.sampling)


def as_decision_rule(tp: TreatmentProblem, rule) -> DecisionRule:
    f = _fraction(tp, rule)
    return DecisionRule(np.column_stack([1.0 - f, f]))


# ---------------------------------------------------------------------------
# likelihood-ratio rules


def _two_state_roles(tp: TreatmentProblem) -> tuple[int, int]:
    if tp.n_states != 2:
        raise StructuralError(f"likelihood-ratio rules need exactly two states, got {tp.n_states}")
    a_state = int(np.argmax(tp.alpha - tp.beta))
    b_state = 1 - a_state
    if not (tp.alpha[a_state] > tp.beta[a_state] and tp.alpha[b_state] < tp.beta[b_state]):
        raise ValidationError("need one state where a is better and one where b is better")
    if np.allclose(tp.sampling[0], tp.sampling[1], rtol=0, atol=0):
        raise ValidationError("the two sampling distributions must differ")
    return a_state, b_state


def lr_rule(tp: TreatmentProblem, eta: float) -> TestRule:
    """Choose b where q_b(psi) > eta * q_a(psi); q_a is the density in the
    state where a is better."""
    if not eta >= 0:
        raise DomainError(f"threshold must be non-negative, got {eta!r}")
    a_state, b_state = _two_state_roles(tp)
    q0, q1 = tp.sampling[a_state], tp.sampling[b_state]
    return TestRule.from_mask(q1 > eta * q0)


def lr_thresholds(tp: TreatmentProblem) -> np.ndarray:
    """0 together with every finite likelihood ratio; between two consecutive
    values the LR rule does not change."""
    a_state, b_state = _two_state_roles(tp)
    q0, q1 = tp.sampling[a_state], tp.sampling[b_state]
    ratios = q1[q0 > 0] / q0[q0 > 0]
    return np.unique(np.concatenate(([0.0], ratios)))


def lr_frontier(tp: TreatmentProblem) -> list[tuple[float, TestRule, np.ndarray]]:
    """Distinct LR rules with their error probabilities, ordered by threshold.

    The rule for threshold eta_k is built at the midpoint of (eta_k, eta_k+1),
    where it is the same rule; testing q_1 > eta q_0 exactly at a ratio would
    let rounding decide the boundary point.
    """
    etas = lr_thresholds(tp)
    probes = np.append(0.5 * (etas[:-1] + etas[1:]), 2.0 * etas[-1] + 1.0)
    seen, out = set(), []
    for eta, probe in zip(etas, probes):
        rule = lr_rule(tp, float(probe))
        if rule.accept_b in seen:
            continue
        seen.add(rule.accept_b)
        out.append((float(eta), rule, error_probabilities(tp, rule)))
    return out


def lr_dominator(tp: TreatmentProblem, rule: TestRule) -> tuple[float, TestRule] | None:
    """An LR rule whose error pair is weakly below the rule's and strictly
    below in one coordinate, if there is one."""
    rho = error_probabilities(tp, rule)
    for eta, cand, r in lr_frontier(tp):
        if np.all(r <= rho + STRICT_TOL) and np.any(r < rho - STRICT_TOL):
            return eta, cand
    return None


# ---------------------------------------------------------------------------
# admissibility and criteria


def test_rule_admissibility(tp: TreatmentProblem, rules: Sequence[TestRule]) -> AdmissibilityReport:
    """Compare error-probability vectors; witness = error gap at the cited state."""
    if not rules:
        raise ValidationError("rule list must be non-empty")
    rho = np.stack([error_probabilities(tp, r) for r in rules])
    report = pareto_report(-rho, np.arange(tp.n_states), np.zeros(tp.n_states), STRICT_TOL, "error")
    report.inadmissible = [
        Certificate(c.rule, c.dominated_by, c.state, float(rho[c.rule, c.state] - rho[c.dominated_by, c.state]))
        for c in report.inadmissible
    ]
    return report


test_rule_admissibility.__test__ = False


def _quantile_values(tp: TreatmentProblem, rho: np.ndarray, lam: float) -> np.ndarray:
    return np.where(rho >= lam - LEVEL_TOL, tp.worst, tp.best)


def _check_lambda(lam):
    if lam is not None and not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam!r}")


def maximin(tp: TreatmentProblem, rules: Sequence[TestRule], lam: float | None = None) -> CriterionResult:
    """Maximize the worst-state welfare: mean welfare when ``lam`` is None,
    lambda-quantile welfare otherwise."""
    _check_lambda(lam)
    values = []
    for r in rules:
        rho = error_probabilities(tp, r)
        w = welfare_from_error(tp, rho) if lam is None else _quantile_values(tp, rho, lam)
        values.append(w.min())
    return argmax_result(values)


def regret_values(tp: TreatmentProblem, rho: np.ndarray, lam: float | None = None) -> np.ndarray:
    """Per-state regret; ``rho`` may carry leading rule axes."""
    if lam is None:
        return tp.gap * rho
    return tp.gap * (rho >= lam - LEVEL_TOL)


def minimax_regret(tp: TreatmentProblem, rules: Sequence[TestRule], lam: float | None = None) -> CriterionResult:
    """Minimize the largest regret over states (mean or lambda-quantile)."""
    _check_lambda(lam)
    values = [regret_values(tp, error_probabilities(tp, r), lam).max() for r in rules]
    return argmin_result(values)


def quantile_max_regret(tp: TreatmentProblem, rule: TestRule, lam: float) -> float:
    _check_lambda(lam)
    return float(regret_values(tp, error_probabilities(tp, rule), lam).max())


# ---------------------------------------------------------------------------
# distance-based rules


def default_partition(tp: TreatmentProblem) -> tuple[list[int], list[int]]:
    """S_a = states where a is at least as good (ties go to a), S_b = the rest."""
    s_a = [s for s in range(tp.n_states) if tp.alpha[s] >= tp.beta[s]]
    s_b = [s for s in range(tp.n_states) if tp.alpha[s] < tp.beta[s]]
    return s_a, s_b


def _check_partition(tp: TreatmentProblem, partition) -> tuple[list[int], list[int]]:
    s_a, s_b = (list(map(int, x)) for x in partition)
    if not s_a or not s_b:
        raise ValidationError("both sides of the state partition must be non-empty")
    if sorted(s_a + s_b) != list(range(tp.n_states)):
        raise ValidationError("partition must cover every state exactly once")
    for s in s_a:
        if tp.alpha[s] < tp.beta[s]:
            raise ValidationError(f"state {s} has b strictly better but sits in S_a")
    for s in s_b:
        if tp.alpha[s] > tp.beta[s]:
            raise ValidationError(f"state {s} has a strictly better but sits in S_b")
    return s_a, s_b


def _distance_fn(tp: TreatmentProblem, distance) -> Callable[[object, int], float]:
    if distance is not None:
        return distance
    if tp.coordinates is not None:
        coords = tp.coordinates
        return lambda est, s: float(np.linalg.norm(np.atleast_1d(np.asarray(est, dtype=float)) - coords[s]))
    if tp.metric is not None:
        metric = tp.metric
        return lambda est, s: float(metric[int(est), s])
    raise ValidationError("need a distance function, state coordinates, or a metric")


def separation(tp: TreatmentProblem, partition=None) -> float:
    """Half the smallest distance between S_a and S_b."""
    s_a, s_b = _check_partition(tp, partition or default_partition(tp))
    return 0.5 * min(tp.state_distance(i, j) for i in s_a for j in s_b)


def min_distance_rule(tp: TreatmentProblem, partition, estimates: Sequence, distance=None) -> TestRule:
    """Choose b when the estimate is strictly closer to S_b than to S_a.

    ``estimates[psi]`` is the state estimate at each sample point. Distances
    within 1e-12 of each other count as a tie, and ties go to a.
    """
    s_a, s_b = _check_partition(tp, partition)
    if len(estimates) != tp.n_sample_points:
        raise StructuralError(f"{len(estimates)} estimates for {tp.n_sample_points} sample points")
    d = _distance_fn(tp, distance)
    accept = []
    for psi, est in enumerate(estimates):
        to_a = min(d(est, s) for s in s_a)
        to_b = min(d(est, s) for s in s_b)
        if to_b < to_a - DISTANCE_TIE_TOL:
            accept.append(psi)
    return TestRule(frozenset(accept))


def estimator_miss_probability(tp: TreatmentProblem, estimates: Sequence, epsilon: float, distance=None) -> np.ndarray:
    """Q_s[d(estimate, s) >= epsilon] for every state (near-ties count as misses)."""
    d = _distance_fn(tp, distance)
    out = np.empty(tp.n_states)
    for s in range(tp.n_states):
        miss = np.array([d(est, s) >= epsilon - DISTANCE_TIE_TOL for est in estimates])
        out[s] = tp.sampling[s, miss].sum()
    return out


# ---------------------------------------------------------------------------
# exhaustive enumeration


def rule_masks(start: int, stop: int, n_points: int) -> np.ndarray:
    """Boolean masks for rule indices [start, stop); bit k = sample point k."""
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n_points, dtype=np.int64)) & 1).astype(bool)


def all_test_rules(n_points: int, max_points: int = MAX_ENUMERATION_POINTS) -> list[TestRule]:
    _check_capacity(n_points, max_points)
    return [TestRule.from_index(i, n_points) for i in range(1 << n_points)]


def _check_capacity(n_points: int, max_points: int) -> None:
    if n_points > max_points:
        raise CapacityError(
            f"enumerating 2^{n_points} test rules exceeds the bound of 2^{max_points}; "
            "reduce the sample space"
        )


def error_matrix(tp: TreatmentProblem, masks: np.ndarray) -> np.ndarray:
    """rho[rule, state] for a block of rule masks."""
    m = masks.astype(float)
    q_b = m @ tp.sampling.T
    q_a = (1.0 - m) @ tp.sampling.T
    return np.where(tp.alpha < tp.beta, q_a, np.where(tp.alpha > tp.beta, q_b, 0.0))


@dataclass
class RegretScan:
    lam: float
    min_max_regret: float
    attaining_rules: list[TestRule]
    n_attaining: int
    n_rules: int
    approximation: str | None = None

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "min_max_regret": self.min_max_regret,
            "attaining_rules": [r.to_json() for r in self.attaining_rules],
            "n_attaining": self.n_attaining,
            "n_rules": self.n_rules,
            "approximation": self.approximation,
        }


def quantile_regret_scan(
    tp: TreatmentProblem,
    lam: float,
    max_points: int = MAX_ENUMERATION_POINTS,
    max_report: int = 1000,
    threads: int | None = None,
) -> RegretScan:
    """Minimum over all 2^|Psi| test rules of the largest lambda-quantile regret.

    Chunks are evaluated in parallel and merged in index order, so the result
    does not depend on scheduling. At most ``max_report`` attaining rules are
    listed (lowest indices first); ``n_attaining`` counts all of them.
    """
    _check_lambda(lam)
    n = tp.n_sample_points
    _check_capacity(n, max_points)
    total = 1 << n

    def block(start: int) -> np.ndarray:
        masks = rule_masks(start, min(start + _CHUNK, total), n)
        return regret_values(tp, error_matrix(tp, masks), lam).max(axis=1)

    starts = range(0, total, _CHUNK)
    workers = threads or thread_count()
    if workers > 1 and total > _CHUNK:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            values = np.concatenate(list(ex.map(block, starts)))
    else:
        values = np.concatenate([block(s) for s in starts])
    best = float(values.min())
    hits = np.flatnonzero(values <= best + STRICT_TOL)
    rules = [TestRule.from_index(int(i), n) for i in hits[:max_report]]
    return RegretScan(lam, best, rules, int(hits.size), total, tp.approximation)
