"""Finite decision problems and the loss distributions their rules induce.

A rule is judged by the whole state-dependent distribution of loss it
generates across potential samples, not only by the mean of that
distribution. Everything downstream (dominance checks, criteria, treatment
choice) is built on :class:`DiscreteDistribution` and :func:`loss_distribution`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Literal, Sequence

import numpy as np

from .errors import CapacityError, DomainError, StructuralError, ValidationError

ATOM_TOL = 1e-12
PROB_TOL = 1e-9
# probability slack when reading a step CDF against a level
LEVEL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite distribution on the real line.

    Build instances with :meth:`from_atoms` unless the support is already
    strictly increasing and duplicate-free.
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        issues = []
        if support.size == 0:
            issues.append("distribution has no atoms")
        if support.shape != weights.shape:
            issues.append(f"support has {support.size} atoms but weights has {weights.size}")
        else:
            if not np.all(np.isfinite(support)):
                issues.append("support values must be finite")
            if np.any(np.diff(support) <= 0):
                issues.append("support must be strictly increasing")
            if np.any(weights < 0) or not np.all(np.isfinite(weights)):
                issues.append("weights must be finite and non-negative")
            elif abs(weights.sum() - 1.0) > PROB_TOL:
                issues.append(f"weights sum to {weights.sum():.17g}, not 1")
        if issues:
            raise ValidationError(issues)
        # absorb rounding in the total so the CDF tops out at exactly 1
        weights = weights / weights.sum()
        object.__setattr__(self, "weights", weights)
        support.setflags(write=False)
        weights.setflags(write=False)

    @classmethod
    def from_atoms(cls, values, weights) -> "DiscreteDistribution":
        """Sort atoms, merge values closer than 1e-12 and drop zero weights."""
        values = np.asarray(values, dtype=float).reshape(-1)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if values.shape != weights.shape:
            raise StructuralError(
                f"got {values.size} values but {weights.size} weights"
            )
        keep = weights != 0.0
        values, weights = values[keep], weights[keep]
        order = np.argsort(values, kind="stable")
        values, weights = values[order], weights[order]
        if values.size == 0:
            raise ValidationError("distribution has no atoms with positive weight")
        # a new atom starts wherever the gap to the previous value exceeds the tolerance
        starts = np.concatenate(([True], np.diff(values) > ATOM_TOL))
        group = np.cumsum(starts) - 1
        merged_w = np.bincount(group, weights=weights)
        merged_v = values[starts]
        return cls(merged_v, merged_w)

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDistribution":
        return cls(np.array([float(value)]), np.array([1.0]))

    @classmethod
    def mixture(cls, components: Sequence["DiscreteDistribution"], mix) -> "DiscreteDistribution":
        mix = np.asarray(mix, dtype=float)
        if len(components) != mix.size:
            raise StructuralError(f"{len(components)} components but {mix.size} mixing weights")
        values = np.concatenate([c.support for c in components])
        weights = np.concatenate([m * c.weights for c, m in zip(components, mix)])
        return cls.from_atoms(values, weights)

    def __len__(self) -> int:
        return self.support.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return (
            self.support.shape == other.support.shape
            and np.allclose(self.support, other.support, rtol=0, atol=ATOM_TOL)
            and np.allclose(self.weights, other.weights, rtol=0, atol=PROB_TOL)
        )

    __hash__ = None

    def mean(self) -> float:
        return float(self.support @ self.weights)

    def cdf(self, t):
        return cdf(self, t)

    def quantile(self, lam):
        return quantile(self, lam)

    def cumulative(self) -> np.ndarray:
        """CDF evaluated at each support point."""
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        return cum

    def map(self, fn) -> "DiscreteDistribution":
        """Pushforward of the distribution through ``fn`` (vectorized)."""
        return DiscreteDistribution.from_atoms(fn(self.support), self.weights)

    def to_json(self) -> dict:
        return {"support": self.support.tolist(), "weights": self.weights.tolist()}


def cdf(dist: DiscreteDistribution, t):
    """P(X <= t), right-continuous. Accepts scalar or array ``t``."""
    cum = np.concatenate(([0.0], dist.cumulative()))
    idx = np.searchsorted(dist.support, t, side="right")
    out = np.minimum(cum[idx], 1.0)
    return float(out) if np.ndim(out) == 0 else out


def quantile(dist: DiscreteDistribution, lam):
    """Left-continuous generalized inverse: min{t in support : F(t) >= lam}.

    ``lam`` must lie in the open interval (0, 1).
    """
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(~(lam_arr > 0.0) | ~(lam_arr < 1.0)):
        raise DomainError(f"quantile level must lie in (0, 1), got {lam!r}")
    cum = dist.cumulative()
    idx = np.searchsorted(cum, lam_arr - LEVEL_TOL, side="left")
    idx = np.minimum(idx, dist.support.size - 1)
    out = dist.support[idx]
    return float(out) if np.ndim(out) == 0 else out


def _labels(values, name: str) -> tuple[str, ...]:
    labels = tuple(str(v) for v in values)
    if not labels:
        raise ValidationError(f"{name} must be non-empty")
    return labels


def _check_stochastic(matrix: np.ndarray, what: str) -> list[str]:
    issues = []
    if not np.all(np.isfinite(matrix)):
        issues.append(f"{what} contains non-finite entries")
        return issues
    for i, row in enumerate(matrix):
        if np.any(row < 0):
            issues.append(f"{what} row {i} has negative entries")
        if np.any(row > 1 + PROB_TOL):
            issues.append(f"{what} row {i} has entries above 1")
        s = row.sum()
        if abs(s - 1.0) > PROB_TOL:
            issues.append(f"{what} row {i} sums to {s:.17g}, not 1")
    return issues


@dataclass(frozen=True, eq=False)
class DecisionProblem:
    """States S, sample space Psi, actions D, loss L[s, d] and sampling Q_s(psi)."""

    states: tuple[str, ...]
    sample_points: tuple[str, ...]
    actions: tuple[str, ...]
    loss: np.ndarray
    sampling: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _labels(self.states, "states"))
        object.__setattr__(self, "sample_points", _labels(self.sample_points, "sample_points"))
        object.__setattr__(self, "actions", _labels(self.actions, "actions"))
        loss = np.array(self.loss, dtype=float)
        sampling = np.array(self.sampling, dtype=float)
        ns, npsi, nd = len(self.states), len(self.sample_points), len(self.actions)
        if loss.shape != (ns, nd):
            raise StructuralError(f"loss has shape {loss.shape}, expected ({ns}, {nd})")
        if sampling.shape != (ns, npsi):
            raise StructuralError(f"sampling has shape {sampling.shape}, expected ({ns}, {npsi})")
        issues = []
        if not np.all(np.isfinite(loss)):
            issues.append("loss entries must be finite")
        elif np.any(loss < 0):
            issues.append("loss entries must be non-negative")
        issues += _check_stochastic(sampling, "sampling")
        if issues:
            raise ValidationError(issues)
        loss.setflags(write=False)
        sampling.setflags(write=False)
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "sampling", sampling)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_sample_points(self) -> int:
        return len(self.sample_points)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def min_loss(self) -> np.ndarray:
        """min_d L(s, d) for every state."""
        return self.loss.min(axis=1)

    def state_index(self, state) -> int:
        if isinstance(state, str):
            try:
                return self.states.index(state)
            except ValueError:
                raise IndexError(f"unknown state label {state!r}") from None
        s = int(state)
        if not 0 <= s < self.n_states:
            raise IndexError(f"state index {s} out of range [0, {self.n_states})")
        return s

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "sample_points": list(self.sample_points),
            "actions": list(self.actions),
            "loss": self.loss.tolist(),
            "sampling": self.sampling.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionProblem":
        return cls(
            states=obj["states"],
            sample_points=obj["sample_points"],
            actions=obj["actions"],
            loss=obj["loss"],
            sampling=obj["sampling"],
        )


@dataclass(frozen=True, eq=False)
class DecisionRule:
    """Row-stochastic allocation[psi, d]; deterministic rules are one-hot rows."""

    allocation: np.ndarray

    def __post_init__(self):
        alloc = np.array(self.allocation, dtype=float)
        if alloc.ndim != 2 or alloc.shape[0] == 0 or alloc.shape[1] == 0:
            raise StructuralError(f"allocation must be a non-empty 2-D array, got shape {alloc.shape}")
        issues = _check_stochastic(alloc, "allocation")
        if issues:
            raise ValidationError(issues)
        alloc.setflags(write=False)
        object.__setattr__(self, "allocation", alloc)

    @classmethod
    def deterministic(cls, choices: Sequence[int], n_actions: int) -> "DecisionRule":
        """One action index per sample point."""
        choices = np.asarray(choices, dtype=int)
        if np.any(choices < 0) or np.any(choices >= n_actions):
            raise IndexError("action index out of range")
        alloc = np.zeros((choices.size, n_actions))
        alloc[np.arange(choices.size), choices] = 1.0
        return cls(alloc)

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.allocation == 0.0) | (self.allocation == 1.0)))

    def to_json(self) -> list:
        return self.allocation.tolist()


@dataclass(frozen=True, eq=False)
class Prior:
    """Probability vector over states."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise ValidationError("prior must be non-empty")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("prior weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"prior weights sum to {w.sum():.17g}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int) -> "Prior":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def degenerate(cls, n: int, state: int) -> "Prior":
        w = np.zeros(n)
        w[state] = 1.0
        return cls(w)


def check_rule(problem: DecisionProblem, rule: DecisionRule) -> None:
    expected = (problem.n_sample_points, problem.n_actions)
    if rule.allocation.shape != expected:
        raise StructuralError(
            f"rule allocation has shape {rule.allocation.shape}, expected {expected}"
        )


def _check_prior(problem: DecisionProblem, prior: Prior) -> None:
    if prior.weights.size != problem.n_states:
        raise StructuralError(
            f"prior has {prior.weights.size} weights for {problem.n_states} states"
        )


def action_probabilities(problem: DecisionProblem, rule: DecisionRule) -> np.ndarray:
    """Matrix [state, action] of Q_s(delta(psi) = d)."""
    check_rule(problem, rule)
    return problem.sampling @ rule.allocation


def loss_distribution(problem: DecisionProblem, rule: DecisionRule, state) -> DiscreteDistribution:
    """Sampling distribution of L[s, delta(psi)] in one state."""
    check_rule(problem, rule)
    s = problem.state_index(state)
    probs = problem.sampling[s] @ rule.allocation
    return DiscreteDistribution.from_atoms(problem.loss[s], probs)


def risk(problem: DecisionProblem, rule: DecisionRule, state) -> float:
    """Mean loss in one state, computed as the direct double sum over (psi, d)."""
    check_rule(problem, rule)
    s = problem.state_index(state)
    return float(np.einsum("p,pd,d->", problem.sampling[s], rule.allocation, problem.loss[s]))


def risk_vector(problem: DecisionProblem, rule: DecisionRule) -> np.ndarray:
    check_rule(problem, rule)
    return np.einsum("sp,pd,sd->s", problem.sampling, rule.allocation, problem.loss)


def bayes_loss_distribution(
    problem: DecisionProblem, rule: DecisionRule, prior: Prior
) -> DiscreteDistribution:
    """Prior-weighted mixture of the per-state loss distributions."""
    _check_prior(problem, prior)
    comps = [loss_distribution(problem, rule, s) for s in range(problem.n_states)]
    return DiscreteDistribution.mixture(comps, prior.weights)


def bayes_risk(
    problem: DecisionProblem,
    rule: DecisionRule,
    prior: Prior,
    via: Literal["risk", "distribution"] = "risk",
) -> float:
    """Bayes risk.

    ``via="risk"`` integrates the risk vector against the prior;
    ``via="distribution"`` takes the mean of the Bayes loss distribution.
    The two orders agree up to rounding.
    """
    _check_prior(problem, prior)
    if via == "risk":
        return float(prior.weights @ risk_vector(problem, rule))
    if via == "distribution":
        return bayes_loss_distribution(problem, rule, prior).mean()
    raise ValueError(f"unknown computation order {via!r}")


def iter_deterministic_rules(problem: DecisionProblem, limit: int = 1 << 16) -> Iterator[DecisionRule]:
    """Every deterministic rule, in lexicographic order of action choices."""
    count = problem.n_actions ** problem.n_sample_points
    if count > limit:
        raise CapacityError(
            f"{count} deterministic rules exceed the enumeration bound of {limit}"
        )
    for choices in itertools.product(range(problem.n_actions), repeat=problem.n_sample_points):
        yield DecisionRule.deterministic(choices, problem.n_actions)


def random_problem(
    rng: np.random.Generator,
    n_states: int,
    n_points: int,
    n_actions: int,
    integer_loss: bool = False,
) -> DecisionProblem:
    """Random instance for property tests and demos."""
    if integer_loss:
        loss = rng.integers(0, 5, size=(n_states, n_actions)).astype(float)
    else:
        loss = rng.uniform(0, 10, size=(n_states, n_actions))
    sampling = rng.dirichlet(np.ones(n_points), size=n_states)
    return DecisionProblem(
        states=[f"s{i}" for i in range(n_states)],
        sample_points=[f"x{i}" for i in range(n_points)],
        actions=[f"d{i}" for i in range(n_actions)],
        loss=loss,
        sampling=sampling,
    )


def random_rule(rng: np.random.Generator, n_points: int, n_actions: int, randomized: bool = True) -> DecisionRule:
    if randomized:
        return DecisionRule(rng.dirichlet(np.ones(n_actions), size=n_points))
    return DecisionRule.deterministic(rng.integers(0, n_actions, size=n_points), n_actions)
