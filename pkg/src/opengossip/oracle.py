"""Exact one-step conditional expectations by exhaustive enumeration.

For a fixed small state ``x`` every random choice of an event is listed and
the resulting empirical moments are averaged.  Arrivals use the two-point law
``+-sqrt(sigma2)``: the expected moments after an arrival depend on the
arrival law only through its mean and variance, so this finite law gives the
exact answer for any admissible law.
"""
from __future__ import annotations

import itertools
import math
from typing import Sequence

from .core import MomentVector, empirical_moments

__all__ = ["gossip_oracle", "departure_oracle", "arrival_oracle", "replacement_oracle",
           "MAX_ORACLE_N"]

MAX_ORACLE_N = 8


def _check(x: Sequence[float], lo: int) -> list[float]:
    x = [float(v) for v in x]
    if not lo <= len(x) <= MAX_ORACLE_N:
        raise ValueError(f"oracle needs {lo} <= n <= {MAX_ORACLE_N}, got n = {len(x)}")
    return x


def _average(branches: list[MomentVector]) -> MomentVector:
    k = len(branches)
    return MomentVector(math.fsum(b.sq_mean for b in branches) / k,
                        math.fsum(b.mean_sq for b in branches) / k)


def _arrival_values(sigma2: float) -> tuple[float, float]:
    s = math.sqrt(sigma2)
    return (-s, s)


def gossip_oracle(x: Sequence[float]) -> MomentVector:
    x = _check(x, 1)
    branches = []
    for i, j in itertools.product(range(len(x)), repeat=2):
        y = list(x)
        y[i] = y[j] = (x[i] + x[j]) / 2
        branches.append(empirical_moments(y))
    return _average(branches)


def departure_oracle(x: Sequence[float]) -> MomentVector:
    x = _check(x, 2)
    return _average([empirical_moments(x[:k] + x[k + 1:]) for k in range(len(x))])


def arrival_oracle(x: Sequence[float], sigma2: float) -> MomentVector:
    x = _check(x, 1)
    return _average([empirical_moments(x + [v]) for v in _arrival_values(sigma2)])


def replacement_oracle(x: Sequence[float], sigma2: float) -> MomentVector:
    x = _check(x, 2)
    branches = [empirical_moments(x[:k] + x[k + 1:] + [v])
                for k in range(len(x)) for v in _arrival_values(sigma2)]
    return _average(branches)
