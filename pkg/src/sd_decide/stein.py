"""Loss distributions of the MLE and James-Stein estimators of a 3-d normal mean.

Monte Carlo runs are split into fixed-size chunks; chunk ``c`` draws from
PCG64 seeded by SeedSequence([seed, c]), so the samples depend only on
(seed, draws, chunk size) and not on how chunks are scheduled.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DiscreteDistribution
from .dominance import DominanceVerdict, sd_compare_cdf
from .errors import DomainError, ValidationError

DIM = 3
CHUNK_SIZE = 1 << 18
SAMPLE_LIMIT = 10**6
HIST_BINS = 4096
HIST_MAX = 50.0
DEFAULT_DRAWS = 10**6
FULL_SCALE_DRAWS = 10**8


class Estimator(str, enum.Enum):
    MLE = "MLE"
    JS = "JS"
    JSPP = "JSPP"


ALL_ESTIMATORS = (Estimator.MLE, Estimator.JS, Estimator.JSPP)


def shrinkage_factor(norm_sq, kind) -> np.ndarray:
    """Multiplier applied to x; 1 where ||x||^2 = 0 so the estimate stays x."""
    kind = Estimator(kind)
    norm_sq = np.asarray(norm_sq, dtype=float)
    if kind is Estimator.MLE:
        return np.ones_like(norm_sq)
    safe = np.where(norm_sq == 0.0, 1.0, norm_sq)
    factor = 1.0 - 1.0 / safe
    if kind is Estimator.JSPP:
        factor = np.maximum(factor, 0.0)
    return np.where(norm_sq == 0.0, 1.0, factor)


def estimate(x, kind) -> np.ndarray:
    """Estimate of theta from one observation (shape (3,)) or a batch (n, 3)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("observations must be finite")
    norm_sq = np.sum(x * x, axis=-1)
    return shrinkage_factor(norm_sq, kind)[..., None] * x


def loss(theta, est) -> np.ndarray | float:
    """Squared Euclidean distance ||est - theta||^2 (batched over leading axes)."""
    d = np.asarray(est, dtype=float) - np.asarray(theta, dtype=float)
    out = np.einsum("...i,...i->...", d, d)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SteinConfig:
    theta: tuple[float, float, float] = (0.0, 0.0, 0.0)
    draws: int = DEFAULT_DRAWS
    seed: int = 0
    estimators: tuple[Estimator, ...] = ALL_ESTIMATORS

    def __post_init__(self):
        theta = tuple(float(v) for v in self.theta)
        issues = []
        if len(theta) != DIM:
            issues.append(f"theta must have {DIM} components, got {len(theta)}")
        elif not all(math.isfinite(v) for v in theta):
            issues.append("theta must be finite")
        if int(self.draws) != self.draws or self.draws < 1:
            issues.append(f"draws must be a positive integer, got {self.draws!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            issues.append(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        try:
            ests = tuple(dict.fromkeys(Estimator(e) for e in self.estimators))
        except ValueError as exc:
            issues.append(str(exc))
            ests = ()
        if not ests and not issues:
            issues.append("at least one estimator is required")
        if issues:
            raise ValidationError(issues)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "draws", int(self.draws))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "estimators", ests)

    @property
    def theta_is_zero(self) -> bool:
        return all(v == 0.0 for v in self.theta)

    def to_json(self) -> dict:
        return {
            "theta": list(self.theta),
            "draws": self.draws,
            "seed": self.seed,
            "estimators": [e.value for e in self.estimators],
        }


def hist_edges() -> np.ndarray:
    return np.linspace(0.0, HIST_MAX, HIST_BINS + 1)


def bin_counts(values: np.ndarray) -> np.ndarray:
    """Counts per bin: slot 0 holds values <= 0, slot k values in
    (edge[k-1], edge[k]], the last slot values above the top edge."""
    idx = np.searchsorted(hist_edges(), values, side="left")
    return np.bincount(idx, minlength=HIST_BINS + 2).astype(np.int64)


@dataclass(eq=False)
class EmpiricalCdf:
    """Loss sample summary: sorted samples, or bin counts at large draw counts.

    Both forms carry the bin counts, so binned comparisons do not depend on
    the storage choice.
    """

    n: int
    counts: np.ndarray
    total: float
    total_sq: float
    max_value: float
    samples: np.ndarray | None = None

    def __post_init__(self):
        if self.samples is not None and self.samples.size != self.n:
            raise ValidationError(f"{self.samples.size} samples for a count of {self.n}")
        if int(self.counts.sum()) != self.n:
            raise ValidationError(f"bin counts sum to {int(self.counts.sum())}, expected {self.n}")

    @property
    def mean(self) -> float:
        return self.total / self.n

    @property
    def std_error(self) -> float:
        if self.n < 2:
            return float("nan")
        var = (self.total_sq - self.n * self.mean**2) / (self.n - 1)
        return math.sqrt(max(var, 0.0) / self.n)

    def cdf(self, t):
        """Empirical P(loss <= t). Without samples, t is floored to a bin edge."""
        t = np.asarray(t, dtype=float)
        if self.samples is not None:
            return np.searchsorted(self.samples, t, side="right") / self.n
        cum = np.cumsum(self.counts) / self.n
        k = np.searchsorted(hist_edges(), t, side="right")
        # k == 0 means t < 0; otherwise edge[k-1] <= t and cum[k-1] counts mass <= edge[k-1]
        return np.where(k == 0, 0.0, cum[np.maximum(k - 1, 0)])

    def binned_cdf(self) -> np.ndarray:
        """CDF at each histogram edge."""
        return np.cumsum(self.counts[: HIST_BINS + 1]) / self.n

    def binned(self) -> DiscreteDistribution:
        """Bin counts as a distribution with atoms at bin upper edges
        (overflow placed at the largest observed loss)."""
        support = np.concatenate([hist_edges(), [max(self.max_value, HIST_MAX + 1.0)]])
        return DiscreteDistribution.from_atoms(support, self.counts / self.n)


@dataclass
class _ChunkResult:
    counts: dict
    totals: dict
    totals_sq: dict
    maxima: dict
    samples: dict = field(default_factory=dict)


def _normals(rng: np.random.Generator, m: int) -> np.ndarray:
    """m x 3 standard normals by Box-Muller."""
    k = (m * DIM + 1) // 2
    u1 = 1.0 - rng.random(k)  # in (0, 1], keeps the log finite
    u2 = rng.random(k)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[: m * DIM].reshape(m, DIM)


def _run_chunk(config: SteinConfig, index: int, m: int, keep: bool) -> _ChunkResult:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, index])))
    theta = np.asarray(config.theta)
    x = theta + _normals(rng, m)
    res = _ChunkResult({}, {}, {}, {})
    for kind in config.estimators:
        losses = loss(theta, estimate(x, kind))
        res.counts[kind] = bin_counts(losses)
        res.totals[kind] = float(losses.sum())
        res.totals_sq[kind] = float(np.dot(losses, losses))
        res.maxima[kind] = float(losses.max())
        if keep:
            res.samples[kind] = losses
    return res


def simulate(config: SteinConfig, chunk_size: int = CHUNK_SIZE, threads: int | None = None) -> dict[Estimator, EmpiricalCdf]:
    """Draw x ~ N(theta, I_3) and collect each estimator's loss distribution."""
    from .treatment import thread_count

    keep = config.draws <= SAMPLE_LIMIT
    sizes = [min(chunk_size, config.draws - start) for start in range(0, config.draws, chunk_size)]
    workers = thread_count() if threads is None else max(1, int(threads))
    counts = {k: np.zeros(HIST_BINS + 2, dtype=np.int64) for k in config.estimators}
    totals = {k: 0.0 for k in config.estimators}
    totals_sq = {k: 0.0 for k in config.estimators}
    maxima = {k: -math.inf for k in config.estimators}
    samples = {k: [] for k in config.estimators}
    with ThreadPoolExecutor(max_workers=min(workers, len(sizes))) as pool:
        results = pool.map(lambda a: _run_chunk(config, a[0], a[1], keep), enumerate(sizes))
        for res in results:  # map yields in chunk order
            for k in config.estimators:
                counts[k] += res.counts[k]
                totals[k] += res.totals[k]
                totals_sq[k] += res.totals_sq[k]
                maxima[k] = max(maxima[k], res.maxima[k])
                if keep:
                    samples[k].append(res.samples[k])
    return {
        k: EmpiricalCdf(
            n=config.draws,
            counts=counts[k],
            total=totals[k],
            total_sq=totals_sq[k],
            max_value=maxima[k],
            samples=np.sort(np.concatenate(samples[k])) if keep else None,
        )
        for k in config.estimators
    }


_erf = np.vectorize(math.erf, otypes=[float])


def chi2_3_cdf(x):
    """CDF of a chi-square with 3 degrees of freedom via the error function."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    out = _erf(np.sqrt(x / 2.0)) - np.sqrt(2.0 * x / math.pi) * np.exp(-x / 2.0)
    return np.clip(out, 0.0, 1.0)


def _js_roots(t):
    """Roots u1 <= u2 of u^2 - (2 + t) u + 1 = 0 for t >= 0 (u1 * u2 = 1)."""
    b = 2.0 + t
    u2 = 0.5 * (b + np.sqrt(np.maximum(b * b - 4.0, 0.0)))
    return 1.0 / u2, u2


def theta0_exact_cdf(kind, t):
    """Exact loss CDF at theta = 0, where ||x||^2 ~ chi-square(3).

    The MLE loss is u = ||x||^2. The JS loss is u - 2 + 1/u, which is at most
    t exactly when u lies between the two roots. JSPP loss is 0 for u <= 1 and
    agrees with JS above 1, so only the upper root matters.
    """
    kind = Estimator(kind)
    t = np.asarray(t, dtype=float)
    tt = np.maximum(t, 0.0)
    if kind is Estimator.MLE:
        out = chi2_3_cdf(tt)
    else:
        u1, u2 = _js_roots(tt)
        out = chi2_3_cdf(u2) - chi2_3_cdf(u1) if kind is Estimator.JS else chi2_3_cdf(u2)
    out = np.where(t < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def dkw_epsilon(n: int, alpha: float = 0.001) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band at confidence 1 - alpha."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def max_deviation(emp: EmpiricalCdf, exact: Callable) -> float:
    """sup_t |F_n(t) - F(t)|.

    With samples, both one-sided limits at every sample point are checked
    (the exact CDF is continuous except possibly for an atom at 0, which the
    empirical CDF shares). Without samples the check runs on bin edges.
    """
    if emp.samples is None:
        edges = hist_edges()
        return float(np.max(np.abs(emp.binned_cdf() - exact(edges))))
    x = emp.samples
    f = exact(x)
    right = np.searchsorted(x, x, side="right") / emp.n
    left = np.searchsorted(x, x, side="left") / emp.n
    left_gap = np.where(x > 0, f - left, 0.0)
    return float(max(np.max(right - f), np.max(left_gap), 0.0))


@dataclass(frozen=True)
class CrossingReport:
    """Sign changes of F_a - F_b over a scanned range.

    ``signs`` lists the sign on each side of successive crossings; with no
    crossing it holds the single uniform sign (0 when the CDFs are
    indistinguishable everywhere).
    """

    intervals: tuple[tuple[float, float], ...]
    signs: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.intervals)

    @property
    def uniform_sign(self) -> int | None:
        return self.signs[0] if not self.intervals else None

    def to_json(self) -> dict:
        out = {"crossings": [list(iv) for iv in self.intervals], "signs": list(self.signs)}
        if not self.intervals:
            out["no_crossing"] = True
            out["uniform_sign"] = self.signs[0]
        return out


def empirical_tolerance(cdf_a: EmpiricalCdf, cdf_b: EmpiricalCdf, z: float = 4.0) -> Callable:
    """Noise band z * sd of F_a(t) - F_b(t), treating the two samples as
    independent (conservative for the paired draws used here)."""

    def tol(t):
        fa, fb = cdf_a.cdf(t), cdf_b.cdf(t)
        return z * np.sqrt((fa * (1 - fa)) / cdf_a.n + (fb * (1 - fb)) / cdf_b.n)

    return tol


def find_crossing(
    cdf_a: Callable,
    cdf_b: Callable,
    t_range: tuple[float, float],
    n_scan: int = 2001,
    tol: float | Callable = 0.0,
    refine: bool | None = None,
    xtol: float = 1e-10,
) -> CrossingReport:
    """Locate sign changes of cdf_a - cdf_b on a scan grid.

    Differences within ``tol`` (a constant or a function of t) count as no
    sign. Each crossing is bracketed by the last scan point with the old sign
    and the first with the new one; with ``refine`` (default when ``tol`` is
    a constant) the bracket is narrowed by bisection to ``xtol``.
    """
    lo, hi = (float(v) for v in t_range)
    if not lo < hi:
        raise DomainError("t_range must satisfy lo < hi")
    t = np.linspace(lo, hi, n_scan)
    band = tol(t) if callable(tol) else np.full_like(t, float(tol))
    d = np.asarray(cdf_a(t), dtype=float) - np.asarray(cdf_b(t), dtype=float)
    sign = np.where(np.abs(d) <= band, 0, np.sign(d)).astype(int)
    nz = np.flatnonzero(sign)
    if nz.size == 0:
        return CrossingReport((), (0,))
    if refine is None:
        refine = not callable(tol)
    intervals, signs = [], [int(sign[nz[0]])]
    for i, j in zip(nz[:-1], nz[1:]):
        if sign[i] == sign[j]:
            continue
        a, b = float(t[i]), float(t[j])
        if refine:
            s_left = sign[i]
            const_tol = float(tol) if not callable(tol) else 0.0
            while b - a > xtol:
                mid = 0.5 * (a + b)
                dm = float(np.asarray(cdf_a(mid)) - np.asarray(cdf_b(mid)))
                if abs(dm) > const_tol and np.sign(dm) != s_left:
                    b = mid
                else:
                    a = mid
        intervals.append((a, b))
        signs.append(int(sign[j]))
    return CrossingReport(tuple(intervals), tuple(signs))


def exact_cdf_fn(kind) -> Callable:
    return lambda t: theta0_exact_cdf(kind, t)


CROSSING_RANGE = (0.0, 25.0)


@dataclass
class SteinReport:
    config: SteinConfig
    cdfs: dict
    crossings: dict
    exact_crossings: dict
    verdicts: dict
    dkw: dict | None

    def to_json(self) -> dict:
        out = {
            "config": self.config.to_json(),
            "means": {k.value: v.mean for k, v in self.cdfs.items()},
            "std_errors": {k.value: v.std_error for k, v in self.cdfs.items()},
            "histogram": {
                "edges": {"lo": 0.0, "hi": HIST_MAX, "bins": HIST_BINS},
                "counts": {k.value: v.counts.tolist() for k, v in self.cdfs.items()},
            },
            "crossings": {k: v.to_json() for k, v in self.crossings.items()},
            "verdicts": {k: v.to_json() for k, v in self.verdicts.items()},
        }
        if self.exact_crossings:
            out["exact_crossings"] = {k: v.to_json() for k, v in self.exact_crossings.items()}
        if self.dkw is not None:
            out["dkw"] = self.dkw
        return out


def binned_verdict(a: EmpiricalCdf, b: EmpiricalCdf) -> DominanceVerdict:
    """SD comparison of binned loss distributions, lower loss being better:
    FirstDominates means a's loss CDF lies weakly above b's.

    In the larger-is-better convention of sd_compare_cdf this is b's loss
    distribution dominating a's, so the arguments go in swapped.
    """
    return sd_compare_cdf(b.binned(), a.binned())


def study(config: SteinConfig, threads: int | None = None, t_range: Sequence[float] = CROSSING_RANGE) -> SteinReport:
    """Simulate, then compare JS and JSPP against the MLE."""
    cdfs = simulate(config, threads=threads)
    crossings, exact, verdicts = {}, {}, {}
    mle = cdfs.get(Estimator.MLE)
    for kind in (Estimator.JS, Estimator.JSPP):
        if mle is None or kind not in cdfs:
            continue
        key = f"{kind.value}_vs_MLE"
        crossings[key] = find_crossing(cdfs[kind].cdf, mle.cdf, t_range, tol=empirical_tolerance(cdfs[kind], mle))
        verdicts[key] = binned_verdict(cdfs[kind], mle)
        if config.theta_is_zero:
            exact[key] = find_crossing(exact_cdf_fn(kind), exact_cdf_fn(Estimator.MLE), t_range)
    dkw = None
    if config.theta_is_zero:
        eps = dkw_epsilon(config.draws)
        devs = {k.value: max_deviation(v, exact_cdf_fn(k)) for k, v in cdfs.items()}
        dkw = {"alpha": 0.001, "epsilon": eps, "max_deviation": devs, "within": {k: d <= eps for k, d in devs.items()}}
    return SteinReport(config, cdfs, crossings, exact, verdicts, dkw)
