import itertools

import pytest

from opengossip import analytic as A
from opengossip.core import empirical_moments
from opengossip.oracle import arrival_oracle, departure_oracle, gossip_oracle, replacement_oracle


def _close(X, Y, tol):
    return abs(X.sq_mean - Y.sq_mean) <= tol and abs(X.mean_sq - Y.mean_sq) <= tol


def test_gossip_oracle_two_agents():
    X = gossip_oracle([0.0, 1.0])
    assert (X.sq_mean, X.mean_sq) == (0.25, 0.375)


@pytest.mark.parametrize("c", [0.0, -1.5, 3.0])
def test_gossip_oracle_consensus(c):
    X = gossip_oracle([c] * 4)
    assert X.sq_mean == pytest.approx(c * c) and X.mean_sq == pytest.approx(c * c)


def test_gossip_oracle_three_agents():
    x = [1.0, -1.0, 0.0]
    assert _close(gossip_oracle(x), A.gossip_map(3)(empirical_moments(x)), 1e-14)


def test_departure_oracle_examples():
    X = departure_oracle([0.0, 1.0])
    assert (X.sq_mean, X.mean_sq) == (0.5, 0.5)
    X = departure_oracle([2.0, 2.0, 2.0])
    assert (X.sq_mean, X.mean_sq) == (4.0, 4.0)
    assert departure_oracle([0.0, 1.0, 2.0]).mean_sq == pytest.approx(5 / 3, rel=1e-15)


def test_arrival_oracle_examples():
    X = arrival_oracle([1.0], 1.0)
    assert (X.sq_mean, X.mean_sq) == (0.5, 1.0)
    X = arrival_oracle([0.0], 0.0)
    assert (X.sq_mean, X.mean_sq) == (0.0, 0.0)
    x = [0.0, 1.0]
    assert _close(arrival_oracle(x, 1 / 12), A.arrival_map(2, 1 / 12)(empirical_moments(x)), 1e-14)


def test_replacement_oracle_examples():
    X = replacement_oracle([0.0, 1.0], 0.0)
    assert (X.sq_mean, X.mean_sq) == (0.125, 0.25)
    c = 3.0
    X = replacement_oracle([c, c], 0.0)
    assert (X.sq_mean, X.mean_sq) == ((c / 2) ** 2, c * c / 2)
    x = [0.0, 1.0]
    assert _close(replacement_oracle(x, 1.0), A.replacement_map(2, 1.0)(empirical_moments(x)), 1e-14)


@pytest.mark.parametrize("fn,x", [(gossip_oracle, []), (gossip_oracle, [0.0] * 9),
                                  (departure_oracle, [1.0]), (arrival_oracle, [])])
def test_oracle_size_limits(fn, x):
    args = (x, 1.0) if fn is arrival_oracle else (x,)
    with pytest.raises(ValueError):
        fn(*args)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_oracles_match_maps_exhaustively(n):
    for x in itertools.product([-2.0, -1.0, 0.0, 1.0, 2.0], repeat=n):
        X = empirical_moments(x)
        assert _close(gossip_oracle(x), A.gossip_map(n)(X), 1e-12)
        assert _close(departure_oracle(x), A.departure_map(n)(X), 1e-12)
        for s2 in (0.0, 1 / 12, 1.0):
            assert _close(arrival_oracle(x, s2), A.arrival_map(n, s2)(X), 1e-12)
            assert _close(replacement_oracle(x, s2), A.replacement_map(n, s2)(X), 1e-12)
