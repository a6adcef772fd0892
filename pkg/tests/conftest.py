import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from sd_decide import DiscreteDistribution
from sd_decide.treatment import TreatmentProblem

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@st.composite
def distributions(draw, max_atoms=20, integer=True):
    """Random finite distribution; integer supports make ties and shared atoms common."""
    n = draw(st.integers(1, max_atoms))
    if integer:
        support = draw(st.lists(st.integers(0, 12), min_size=n, max_size=n))
    else:
        support = draw(st.lists(st.floats(-50, 50, allow_nan=False), min_size=n, max_size=n))
    raw = draw(st.lists(st.integers(1, 20), min_size=n, max_size=n))
    w = np.asarray(raw, dtype=float)
    return DiscreteDistribution.from_atoms(np.asarray(support, dtype=float), w / w.sum())


@st.composite
def problem_shapes(draw, max_states=3, max_points=4, max_actions=3):
    return (
        draw(st.integers(1, max_states)),
        draw(st.integers(1, max_points)),
        draw(st.integers(1, max_actions)),
        draw(st.integers(0, 2**32 - 1)),
    )


def random_distribution(rng, max_atoms=20) -> DiscreteDistribution:
    n = int(rng.integers(1, max_atoms + 1))
    support = rng.integers(0, 15, size=n).astype(float)
    return DiscreteDistribution.from_atoms(support, rng.dirichlet(np.ones(n)))


def random_binary_treatment(rng, n_points: int) -> TreatmentProblem:
    """Two states, a better in state 0 and b better in state 1."""
    alpha = [rng.uniform(0.5, 1.0), rng.uniform(0.0, 0.5)]
    beta = [alpha[0] - rng.uniform(0.1, 0.5), alpha[1] + rng.uniform(0.1, 0.5)]
    sampling = rng.dirichlet(np.ones(n_points), size=2)
    return TreatmentProblem(["s0", "s1"], alpha, beta, [str(i) for i in range(n_points)], sampling)


@pytest.fixture
def bernoulli_tp() -> TreatmentProblem:
    """Q_0 = Bernoulli(0.2), Q_1 = Bernoulli(0.8); a better in state 0."""
    return TreatmentProblem(
        ["0", "1"], [1.0, 0.0], [0.0, 1.0], ["0", "1"], [[0.8, 0.2], [0.2, 0.8]]
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
