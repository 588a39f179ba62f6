import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from opengossip.analytic import gossip_map
from opengossip.core import (
    AffineMap2,
    ArrivalDistribution,
    MomentVector,
    SystemState,
    Trajectory,
    apply_affine,
    empirical_moments,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
value_lists = st.lists(finite, min_size=1, max_size=30)


@pytest.mark.parametrize("c", [0.0, 1.5, -3.25])
def test_consensus_moments(c):
    X = empirical_moments([c] * 7)
    assert X.sq_mean == pytest.approx(c * c)
    assert X.mean_sq == pytest.approx(c * c)
    assert X.variance == pytest.approx(0.0, abs=1e-12)


def test_two_agent_moments():
    X = empirical_moments(SystemState.from_values([0.0, 1.0]))
    assert (X.sq_mean, X.mean_sq, X.variance) == (0.25, 0.5, 0.25)


def test_symmetric_pair():
    X = empirical_moments([1.0, -1.0])
    assert (X.sq_mean, X.mean_sq, X.variance) == (0.0, 1.0, 1.0)


def test_empty_system_rejected():
    with pytest.raises(ValueError, match="empty system"):
        empirical_moments(SystemState(()))


def test_large_system_precision():
    # a big offset plus tiny alternating noise; naive summation loses the noise
    n = 10**6
    x = 1e8 + np.where(np.arange(n) % 2 == 0, 1e-3, -1e-3)
    X = empirical_moments(x.tolist())
    assert math.sqrt(X.sq_mean) == pytest.approx(1e8, rel=1e-15)


@given(value_lists)
def test_cauchy_schwarz(values):
    X = empirical_moments(values)
    assert X.sq_mean <= X.mean_sq * (1 + 1e-12) + 1e-300


@given(value_lists, st.randoms())
def test_permutation_invariance(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert empirical_moments(shuffled) == empirical_moments(values)


@given(st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=20),
       st.floats(min_value=-100, max_value=100))
def test_scaling_equivariance(values, c):
    X = empirical_moments(values)
    Y = empirical_moments([c * v for v in values])
    assert Y.sq_mean == pytest.approx(c * c * X.sq_mean, rel=1e-12, abs=1e-300)
    assert Y.mean_sq == pytest.approx(c * c * X.mean_sq, rel=1e-12, abs=1e-300)


def test_apply_identity():
    assert apply_affine(AffineMap2.identity(), MomentVector(0.3, 0.7)) == MomentVector(0.3, 0.7)


def test_apply_pure_offset():
    m = AffineMap2(0, 0, 0, 0, 1, 2)
    assert apply_affine(m, MomentVector(5.0, 9.0)) == MomentVector(1.0, 2.0)


def test_apply_gossip_two_agents():
    assert gossip_map(2)(MomentVector(0.25, 0.5)) == MomentVector(0.25, 0.375)


def test_compose_order():
    inner = AffineMap2(2, 0, 0, 1, 1, 0)
    outer = AffineMap2(1, 0, 0, 3, 0, 1)
    X = MomentVector(1.0, 1.0)
    assert outer.compose(inner)(X) == outer(inner(X))


def test_system_state_labels():
    s = SystemState((1.0, 2.0))
    assert s.n == 2 and s.next_label == 2 and s.time == 0
    with pytest.raises(ValueError):
        SystemState((1.0, 2.0), next_label=1)


@pytest.mark.parametrize("kind,sigma2", [("uniform_centered", 1 / 12), ("gaussian", 2.0),
                                         ("two_point", 0.5), ("degenerate_zero", 0.0)])
def test_arrival_distribution_moments(kind, sigma2):
    d = ArrivalDistribution(kind, sigma2)
    v = d.sample(np.random.default_rng(5), 200_000)
    se = math.sqrt(sigma2 / len(v)) if sigma2 else 0.0
    assert abs(v.mean()) <= 5 * se + 1e-15
    assert v.var() == pytest.approx(sigma2, rel=0.02, abs=1e-15)


def test_uniform_centered_support():
    d = ArrivalDistribution("uniform_centered", 1 / 12)
    v = d.sample(np.random.default_rng(1), 10_000)
    assert v.min() >= -0.5 and v.max() < 0.5


def test_two_point_is_exact():
    v = ArrivalDistribution("two_point", 4.0).sample(np.random.default_rng(0), 100)
    assert set(np.unique(v)) == {-2.0, 2.0}


def test_distribution_validation():
    with pytest.raises(ValueError):
        ArrivalDistribution("cauchy", 1.0)
    with pytest.raises(ValueError):
        ArrivalDistribution("gaussian", -1.0)
    with pytest.raises(ValueError):
        ArrivalDistribution("degenerate_zero", 1.0)


def test_trajectory_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        Trajectory([0, 0], [1, 1], [0, 0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(ValueError, match="lengths"):
        Trajectory([0, 1], [1], [0, 0], [0, 0], [0, 0], [0, 0])
    tr = Trajectory.analytic([0, 1], [2, 2], [0.1, 0.2], [0.5, 0.4])
    assert np.array_equal(tr.variance, tr.mean_sq - tr.sq_mean)
