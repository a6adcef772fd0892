"""Monotone rearrangement of dose rules on discretized real-valued data.

Data psi live on a grid of cells; each state has a density on that grid, and
a randomized rule delta(psi, v) also draws on an auxiliary uniform v, itself
discretized into equal-weight points. When the family has monotone
likelihood ratios relative to a reference state whose payoff is flat, the
rearranged rule G^{-1}(F_0(psi)) is monotone, non-randomized, and its payoff
distribution weakly dominates the original rule's in every state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .core import DiscreteDistribution, quantile
from .dominance import DominanceVerdict, sd_compare_cdf
from .errors import StructuralError, ValidationError

DENSITY_TOL = 1e-6
MLR_TOL = 1e-9
MONOTONE_TOL = 1e-12
SLACK_TOL = 1e-12
DEFAULT_POINTS = 2001
DEFAULT_V_POINTS = 101
DEFAULT_SPAN = 8.0


def _mirrored(fn, levels: np.ndarray, center: float) -> np.ndarray:
    """fn over increasing levels in (0, 1), forced to be exactly symmetric
    about ``center`` under u -> 1 - u."""
    n = levels.size
    half = np.array([fn(u) for u in levels[: (n + 1) // 2]])
    lower = half - center
    upper = -lower[: n // 2][::-1]
    out = np.concatenate([lower, upper]) + center
    if n % 2:
        out[n // 2] = center
    return out


def _normal_cell_masses(edges: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    # upper-tail form keeps precision for cells far right of the mean
    z = (edges - mu) / (sigma * math.sqrt(2.0))
    erfc = np.vectorize(math.erfc)
    lower_tail = 0.5 * erfc(-z)
    upper_tail = 0.5 * erfc(z)
    return np.where(z[1:] <= 0, np.diff(lower_tail), -np.diff(upper_tail))


def normal_pdf(x, mu: float, sigma: float):
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True, eq=False)
class GridFamily:
    """Densities q_s on a shared grid with quadrature cell widths."""

    grid: np.ndarray
    densities: np.ndarray
    cell_widths: np.ndarray
    reference: int

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float).reshape(-1)
        dens = np.array(self.densities, dtype=float)
        widths = np.array(self.cell_widths, dtype=float).reshape(-1)
        if dens.ndim != 2 or dens.shape[1] != grid.size or widths.size != grid.size:
            raise StructuralError(
                f"grid has {grid.size} points, densities {dens.shape}, widths {widths.size}"
            )
        issues = []
        if grid.size < 2 or np.any(np.diff(grid) <= 0):
            issues.append("grid must be strictly increasing with at least two points")
        if np.any(widths <= 0):
            issues.append("cell widths must be positive")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            issues.append("densities must be finite and non-negative")
        else:
            for s, total in enumerate(dens @ widths):
                if abs(total - 1.0) > DENSITY_TOL:
                    issues.append(f"density of state {s} integrates to {total:.9g}, not 1")
        if not 0 <= int(self.reference) < dens.shape[0]:
            issues.append(f"reference state {self.reference} out of range")
        if issues:
            raise ValidationError(issues)
        for arr in (grid, dens, widths):
            arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "cell_widths", widths)
        object.__setattr__(self, "reference", int(self.reference))

    @classmethod
    def normal(
        cls,
        mus: Sequence[float],
        sigma: float = 1.0,
        reference: int = 0,
        n_points: int = DEFAULT_POINTS,
        span: float = DEFAULT_SPAN,
        lo: float | None = None,
        hi: float | None = None,
        spacing: str = "quantile",
    ) -> "GridFamily":
        """Normal location family on [min mu - span*sigma, max mu + span*sigma].

        With ``spacing="quantile"`` the range is cut into cells of equal
        reference-state probability, each represented by its reference median;
        cell masses are exact normal probabilities and densities are cell
        averages. With ``spacing="uniform"`` the grid is evenly spaced with
        trapezoid widths. Both layouts are mirror-symmetric about the reference
        mean when the range is.
        """
        mus = np.asarray(mus, dtype=float)
        lo = float(mus.min() - span * sigma) if lo is None else float(lo)
        hi = float(mus.max() + span * sigma) if hi is None else float(hi)
        if spacing == "uniform":
            return cls._uniform_normal(mus, sigma, reference, n_points, lo, hi)
        if spacing != "quantile":
            raise ValueError(f"unknown spacing {spacing!r}")
        ref = NormalDist(float(mus[reference]), sigma)
        k = np.arange(n_points)
        edges = _mirrored(lambda u: ref.inv_cdf(u), np.arange(1, n_points) / n_points, ref.mean)
        edges = np.concatenate([[lo], edges, [hi]])
        grid = _mirrored(lambda u: ref.inv_cdf(u), (k + 0.5) / n_points, ref.mean)
        widths = np.diff(edges)
        if np.any(widths <= 0) or grid[0] <= lo or grid[-1] >= hi:
            raise ValidationError("range too narrow for a quantile grid at this resolution")
        masses = np.stack([_normal_cell_masses(edges, m, sigma) for m in mus])
        masses = masses / masses.sum(axis=1, keepdims=True)
        return cls(grid, masses / widths, widths, reference)

    @classmethod
    def _uniform_normal(cls, mus, sigma, reference, n_points, lo, hi) -> "GridFamily":
        h = (hi - lo) / (n_points - 1)
        grid = 0.5 * (lo + hi) + h * (np.arange(n_points) - 0.5 * (n_points - 1))
        widths = np.full(n_points, h)
        widths[[0, -1]] = 0.5 * h
        dens = np.stack([normal_pdf(grid, m, sigma) for m in mus])
        # absorb the truncated tails so each density integrates to exactly 1
        dens = dens / (dens @ widths)[:, None]
        return cls(grid, dens, widths, reference)

    @property
    def n_states(self) -> int:
        return self.densities.shape[0]

    @property
    def n_points(self) -> int:
        return self.grid.size

    def masses(self, state: int | None = None) -> np.ndarray:
        """Quadrature probabilities of each grid cell, renormalized to sum to 1."""
        m = self.densities * self.cell_widths
        m = m / m.sum(axis=1, keepdims=True)
        return m if state is None else m[self._state(state)]

    def reference_cdf(self) -> np.ndarray:
        """F_0 at every grid point."""
        return np.cumsum(self.masses(self.reference))

    def reference_mid_cdf(self) -> np.ndarray:
        """F_0 at the middle of each cell's probability mass."""
        p = self.masses(self.reference)
        return np.cumsum(p) - 0.5 * p

    def _state(self, state) -> int:
        s = int(state)
        if not 0 <= s < self.n_states:
            raise IndexError(f"state index {s} out of range [0, {self.n_states})")
        return s

    def to_json(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "densities": self.densities.tolist(),
            "cell_widths": self.cell_widths.tolist(),
            "reference": self.reference,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridFamily":
        if "normal_family" in obj:
            nf = obj["normal_family"]
            g = obj.get("grid") or {}
            return cls.normal(
                nf["mus"],
                sigma=float(nf.get("sigma", 1.0)),
                reference=int(nf.get("reference", 0)),
                n_points=int(g.get("points", DEFAULT_POINTS)),
                span=float(g.get("span", DEFAULT_SPAN)),
                lo=g.get("lo"),
                hi=g.get("hi"),
                spacing=g.get("spacing", "quantile"),
            )
        return cls(obj["grid"], obj["densities"], obj["cell_widths"], obj.get("reference", 0))


@dataclass(frozen=True, eq=False)
class DosePayoff:
    """u(a, s) on [a_l, a_h], either linear (b(s) - c) a or tabulated.

    Tabulated payoffs are linearly interpolated between action grid points.
    """

    bounds: tuple[float, float]
    b: np.ndarray | None = None
    c: float = 0.0
    actions: np.ndarray | None = None
    table: np.ndarray | None = None

    def __post_init__(self):
        lo, hi = (float(x) for x in self.bounds)
        if not lo < hi:
            raise ValidationError("action bounds must satisfy a_l < a_h")
        object.__setattr__(self, "bounds", (lo, hi))
        if (self.b is None) == (self.table is None):
            raise ValidationError("give either linear coefficients b or a tabulated payoff")
        if self.b is not None:
            object.__setattr__(self, "b", np.array(self.b, dtype=float).reshape(-1))
            object.__setattr__(self, "c", float(self.c))
        else:
            acts = np.array(self.actions, dtype=float).reshape(-1)
            table = np.array(self.table, dtype=float)
            if table.ndim != 2 or table.shape[1] != acts.size:
                raise StructuralError("table must be [state][action grid point]")
            if np.any(np.diff(acts) <= 0):
                raise ValidationError("action grid must be strictly increasing")
            if acts[0] > lo or acts[-1] < hi:
                raise ValidationError("action grid must cover the action bounds")
            object.__setattr__(self, "actions", acts)
            object.__setattr__(self, "table", table)
            bad = [s for s in range(table.shape[0]) if self._direction_of(np.diff(table[s])) is None]
            if bad:
                raise ValidationError(f"payoff is not weakly monotone in states {bad}")

    @classmethod
    def linear(cls, b, c: float, bounds=(0.0, 1.0)) -> "DosePayoff":
        return cls(bounds=bounds, b=b, c=c)

    @property
    def n_states(self) -> int:
        return self.b.size if self.b is not None else self.table.shape[0]

    def value(self, a, state: int):
        a = np.asarray(a, dtype=float)
        if self.b is not None:
            return (self.b[state] - self.c) * a
        return np.interp(a, self.actions, self.table[state])

    @staticmethod
    def _direction_of(d: np.ndarray) -> int | None:
        up, down = np.any(d > MONOTONE_TOL), np.any(d < -MONOTONE_TOL)
        if up and down:
            return None
        return 1 if up else (-1 if down else 0)

    def direction(self, state: int) -> int:
        """+1 increasing, -1 decreasing, 0 constant in the action."""
        if self.b is not None:
            slope = self.b[state] - self.c
            return 0 if abs(slope) <= MONOTONE_TOL else int(np.sign(slope))
        return self._direction_of(np.diff(self.table[state]))

    def max_slope(self) -> float:
        if self.b is not None:
            return float(np.max(np.abs(self.b - self.c)))
        return float(np.max(np.abs(np.diff(self.table, axis=1)) / np.diff(self.actions)))

    def to_json(self) -> dict:
        if self.b is not None:
            return {"bounds": list(self.bounds), "linear": {"b": self.b.tolist(), "c": self.c}}
        return {"bounds": list(self.bounds), "tabulated": {"actions": self.actions.tolist(), "values": self.table.tolist()}}

    @classmethod
    def from_json(cls, obj: dict) -> "DosePayoff":
        bounds = obj.get("bounds", [0.0, 1.0])
        if "linear" in obj:
            return cls(bounds=bounds, b=obj["linear"]["b"], c=obj["linear"]["c"])
        tab = obj["tabulated"]
        return cls(bounds=bounds, actions=tab["actions"], table=tab["values"])


def check_compatible(family: GridFamily, payoff: DosePayoff) -> None:
    if payoff.n_states != family.n_states:
        raise StructuralError(f"payoff has {payoff.n_states} states, family has {family.n_states}")
    if payoff.direction(family.reference) != 0:
        raise ValidationError("the payoff must be constant in the action at the reference state")


@dataclass(frozen=True, eq=False)
class RandomizedDoseRule:
    """values[psi grid point, v grid point]; v points carry equal weight."""

    values: np.ndarray
    bounds: tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.size == 0:
            raise StructuralError("rule values must be a non-empty [psi][v] matrix")
        lo, hi = self.bounds
        if np.any(vals < lo) or np.any(vals > hi) or not np.all(np.isfinite(vals)):
            raise ValidationError(f"rule values must lie within the action bounds [{lo}, {hi}]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_v(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_function(cls, family: GridFamily, fn: Callable, n_v: int = DEFAULT_V_POINTS, bounds=(-np.inf, np.inf)) -> "RandomizedDoseRule":
        v = (np.arange(n_v) + 0.5) / n_v
        return cls(fn(family.grid[:, None], v[None, :]), bounds)

    @classmethod
    def scrambled(cls, family: GridFamily, bounds=(0.0, 1.0), seed: int = 0, n_v: int = DEFAULT_V_POINTS) -> "RandomizedDoseRule":
        """A deliberately non-monotone randomized rule: an oscillating dose
        profile in psi plus seeded jitter driven by v."""
        rng = np.random.default_rng(seed)
        lo, hi = bounds
        phase = rng.uniform(0, 2 * np.pi)
        jitter = rng.uniform(-1, 1, size=(family.n_points, n_v))
        base = 0.5 + 0.35 * np.sin(3.0 * family.grid + phase)
        vals = np.clip(base[:, None] + 0.15 * jitter, 0.0, 1.0)
        return cls(lo + (hi - lo) * vals, bounds)


def _rule_values(rule) -> np.ndarray:
    if isinstance(rule, RandomizedDoseRule):
        return rule.values
    vals = np.asarray(rule, dtype=float)
    return vals[:, None] if vals.ndim == 1 else vals


def action_distribution(rule, family: GridFamily, state) -> DiscreteDistribution:
    """Distribution of delta(psi, v) under Q_s x Uniform(v) on the product grid."""
    vals = _rule_values(rule)
    if vals.shape[0] != family.n_points:
        raise StructuralError(f"rule has {vals.shape[0]} psi points, family has {family.n_points}")
    p = family.masses(state)
    w = np.repeat(p / vals.shape[1], vals.shape[1])
    return DiscreteDistribution.from_atoms(vals.reshape(-1), w)


def monotone_rearrange(rule, family: GridFamily) -> np.ndarray:
    """Non-randomized rule G^{-1}(F_0(psi)) on the grid.

    G is the reference-state action distribution of ``rule`` and F_0 the
    reference CDF read at the middle of each cell, which halves the
    per-cell quantization error of reading it at the cell's right edge.
    """
    g = action_distribution(rule, family, family.reference)
    u = np.clip(family.reference_mid_cdf(), 1e-15, 1.0 - 1e-15)
    return np.asarray(quantile(g, u), dtype=float)


def kolmogorov_distance(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    pts = np.union1d(p.support, q.support)
    return float(np.max(np.abs(p.cdf(pts) - q.cdf(pts))))


def rearrangement_discrepancy(rule, family: GridFamily) -> float:
    """Kolmogorov distance between the reference-state action distributions
    of a rule and of its rearrangement."""
    before = action_distribution(rule, family, family.reference)
    after = action_distribution(monotone_rearrange(rule, family), family, family.reference)
    return kolmogorov_distance(before, after)


def payoff_distribution(rule, family: GridFamily, payoff: DosePayoff, state) -> DiscreteDistribution:
    """Pushforward of the sample distribution through psi -> u(delta(psi), s)."""
    s = family._state(state)
    return action_distribution(rule, family, s).map(lambda a: payoff.value(a, s))


@dataclass(frozen=True)
class MlrCheck:
    state: int
    direction: int
    holds: bool
    worst_violation: float
    unverifiable_points: tuple[int, ...] = ()
    required: bool = True

    def to_json(self) -> dict:
        return {
            "state": self.state,
            "direction": self.direction,
            "holds": self.holds,
            "worst_violation": self.worst_violation,
            "unverifiable_points": list(self.unverifiable_points),
            "required": self.required,
        }


def verify_mlr(family: GridFamily, payoff: DosePayoff) -> list[MlrCheck]:
    """Check q_s/q_0 monotonicity on adjacent grid points for every state.

    Direction follows the payoff: non-increasing ratio where the payoff falls
    in the action, non-decreasing where it rises. States with a flat payoff
    need no condition (``required=False``). Points where the reference density
    vanishes are listed as unverifiable, not counted as violations.
    Violations are measured relative to the larger of the two ratios.
    """
    check_compatible(family, payoff)
    q0 = family.densities[family.reference]
    zero = tuple(int(i) for i in np.flatnonzero(q0 == 0))
    ok = (q0[:-1] > 0) & (q0[1:] > 0)
    out = []
    for s in range(family.n_states):
        d = payoff.direction(s)
        if d == 0 or s == family.reference:
            out.append(MlrCheck(s, d, True, 0.0, zero, required=False))
            continue
        qs = family.densities[s]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(q0 > 0, qs / np.where(q0 > 0, q0, 1.0), np.nan)
        left, right = r[:-1][ok], r[1:][ok]
        # d = +1 wants left <= right; d = -1 wants left >= right
        excess = d * (left - right)
        scale = np.maximum(np.maximum(np.abs(left), np.abs(right)), np.finfo(float).tiny)
        rel = np.where(excess > 0, excess / scale, 0.0)
        worst = float(rel.max()) if rel.size else 0.0
        out.append(MlrCheck(s, d, worst <= MLR_TOL, worst, zero))
    return out


@dataclass(frozen=True)
class Prop7Check:
    """Per-state comparison of the rearranged rule's payoff distribution
    (first) against the original rule's (second).

    ``max_violation`` is sup_t F_rearranged(t) - F_original(t), zero under
    exact weak dominance. Two slacks absorb discretization: ``slack`` shifts
    the rearranged CDF right by 2 * max cell width * max payoff slope, and
    ``mass_slack`` is the largest single-cell probability in this state,
    which bounds the error of collapsing a cell's quantile band of actions
    onto one value.
    """

    state: int
    verdict: DominanceVerdict
    max_violation: float
    shifted_violation: float
    slack: float
    mass_slack: float
    mlr_verified: bool

    @property
    def within_slack(self) -> bool:
        return self.shifted_violation <= SLACK_TOL or self.max_violation <= self.mass_slack + SLACK_TOL

    @property
    def label(self) -> str:
        return "ok" if self.mlr_verified else "MLR unverified"

    def to_json(self) -> dict:
        return {
            "state": self.state,
            "verdict": self.verdict.to_json(),
            "max_violation": self.max_violation,
            "shifted_violation": self.shifted_violation,
            "slack": self.slack,
            "mass_slack": self.mass_slack,
            "within_slack": self.within_slack,
            "mlr_verified": self.mlr_verified,
            "label": self.label,
        }


def grid_slack(family: GridFamily, payoff: DosePayoff) -> float:
    """Payoff-scale slack from grid geometry: 2 * max cell width * max slope."""
    return 2.0 * float(np.max(family.cell_widths)) * payoff.max_slope()


def _violation(first: DiscreteDistribution, second: DiscreteDistribution, shift: float) -> float:
    """sup_t F_first(t - shift) - F_second(t), floored at 0.

    The sup sits right after a jump of the shifted first CDF.
    """
    pts = first.support
    return max(0.0, float(np.max(first.cdf(pts) - second.cdf(pts + shift))))


def check_prop7(rule, family: GridFamily, payoff: DosePayoff) -> list[Prop7Check]:
    """Rearrange ``rule`` and test weak dominance of payoffs in every state."""
    check_compatible(family, payoff)
    mlr = verify_mlr(family, payoff)
    rearranged = monotone_rearrange(rule, family)
    slack = grid_slack(family, payoff)
    masses = family.masses()
    out = []
    for s in range(family.n_states):
        after = payoff_distribution(rearranged, family, payoff, s)
        before = payoff_distribution(rule, family, payoff, s)
        out.append(
            Prop7Check(
                state=s,
                verdict=sd_compare_cdf(after, before),
                max_violation=_violation(after, before, 0.0),
                shifted_violation=_violation(after, before, slack),
                slack=slack,
                mass_slack=float(masses[s].max()),
                mlr_verified=mlr[s].holds,
            )
        )
    return out
