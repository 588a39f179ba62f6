"""Shared value types: agent state, moment vectors, affine maps, arrival laws.

The two moments tracked everywhere are the squared empirical mean and the
empirical mean of squares.  Their difference is the (population) variance of
the agent values, which does not depend on the number of agents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SystemState",
    "MomentVector",
    "AffineMap2",
    "ArrivalDistribution",
    "Trajectory",
    "TRAJECTORY_KINDS",
    "DIST_KINDS",
    "empirical_moments",
    "apply_affine",
]

DIST_KINDS = ("uniform_centered", "gaussian", "two_point", "degenerate_zero")
TRAJECTORY_KINDS = ("empirical_single", "empirical_ensemble_mean", "empirical_ensemble_stderr",
                    "analytic")
TRAJECTORY_FIELDS = ("t", "n", "sq_mean", "mean_sq", "variance", "mean")


@dataclass(frozen=True)
class SystemState:
    """Values of the agents currently present.

    Labels are implicit: ``next_label`` counts every agent that ever joined,
    so a fresh arrival always receives a label that was never used before.
    """

    values: tuple[float, ...]
    next_label: int = -1
    time: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.next_label < 0:
            object.__setattr__(self, "next_label", len(self.values))
        if self.next_label < len(self.values):
            raise ValueError("next_label smaller than the number of agents")
        if self.time < 0:
            raise ValueError("time must be non-negative")

    @property
    def n(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "SystemState":
        return cls(tuple(values))


@dataclass(frozen=True)
class MomentVector:
    """The pair (squared mean, mean square)."""

    sq_mean: float
    mean_sq: float

    @property
    def variance(self) -> float:
        return self.mean_sq - self.sq_mean

    def as_array(self) -> np.ndarray:
        return np.array([self.sq_mean, self.mean_sq])

    @classmethod
    def from_array(cls, a) -> "MomentVector":
        return cls(float(a[0]), float(a[1]))

    def __iter__(self):
        yield self.sq_mean
        yield self.mean_sq


@dataclass(frozen=True)
class AffineMap2:
    """X -> A X + b on moment vectors, with A = ((a11, a12), (a21, a22))."""

    a11: float
    a12: float
    a21: float
    a22: float
    b1: float = 0.0
    b2: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def offset(self) -> np.ndarray:
        return np.array([self.b1, self.b2])

    @classmethod
    def from_arrays(cls, matrix, offset=(0.0, 0.0)) -> "AffineMap2":
        m = np.asarray(matrix, dtype=float)
        b = np.asarray(offset, dtype=float)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]),
                   float(b[0]), float(b[1]))

    @classmethod
    def identity(cls) -> "AffineMap2":
        return cls(1.0, 0.0, 0.0, 1.0)

    def __call__(self, X: MomentVector) -> MomentVector:
        return apply_affine(self, X)

    def compose(self, inner: "AffineMap2") -> "AffineMap2":
        """Return ``self ∘ inner`` (``inner`` is applied first)."""
        A = self.matrix @ inner.matrix
        b = self.matrix @ inner.offset + self.offset
        return AffineMap2.from_arrays(A, b)

    def max_abs_diff(self, other: "AffineMap2") -> float:
        return max(abs(u - v) for u, v in zip(self.coefficients(), other.coefficients()))

    def coefficients(self) -> tuple[float, ...]:
        return (self.a11, self.a12, self.a21, self.a22, self.b1, self.b2)


@dataclass(frozen=True)
class ArrivalDistribution:
    """Zero-mean law of the value carried by an arriving agent."""

    kind: str = "uniform_centered"
    sigma2: float = 1.0 / 12.0

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not self.sigma2 >= 0 or not math.isfinite(self.sigma2):
            raise ValueError("sigma2 must be finite and >= 0")
        if self.kind == "degenerate_zero" and self.sigma2 != 0:
            raise ValueError("degenerate_zero requires sigma2 = 0")

    @property
    def mean(self) -> float:
        return 0.0

    def transform(self, base: np.ndarray) -> np.ndarray:
        """Map base draws to values.

        ``base`` holds uniform [0, 1) draws for every kind except ``gaussian``,
        which takes standard normal draws.
        """
        s = math.sqrt(self.sigma2)
        if self.kind == "uniform_centered":
            return math.sqrt(3.0) * s * (2.0 * base - 1.0)
        if self.kind == "gaussian":
            return s * base
        if self.kind == "two_point":
            return np.where(base < 0.5, -s, s)
        return np.zeros_like(base)

    def draw_base(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        return rng.random(size)

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return float(self.transform(self.draw_base(rng, 1))[0])
        return self.transform(self.draw_base(rng, size))


def empirical_moments(state: SystemState | Sequence[float]) -> MomentVector:
    """Squared mean and mean of squares of the agent values.

    Sums are exactly rounded (``math.fsum``), so large systems keep full
    precision.
    """
    values = state.values if isinstance(state, SystemState) else tuple(state)
    n = len(values)
    if n == 0:
        raise ValueError("empty system")
    mean = math.fsum(values) / n
    mean_sq = math.fsum(v * v for v in values) / n
    return MomentVector(mean * mean, mean_sq)


def apply_affine(map: AffineMap2, X: MomentVector) -> MomentVector:
    return MomentVector(
        map.a11 * X.sq_mean + map.a12 * X.mean_sq + map.b1,
        map.a21 * X.sq_mean + map.a22 * X.mean_sq + map.b2,
    )


@dataclass
class Trajectory:
    """Column-oriented record of moments sampled over time.

    ``extra`` holds optional per-sample columns (event tags, departed and
    arrived values for single realizations).  ``values`` optionally stores the
    full agent vectors of a single fixed-size realization.
    """

    t: np.ndarray
    n: np.ndarray
    sq_mean: np.ndarray
    mean_sq: np.ndarray
    variance: np.ndarray
    mean: np.ndarray
    kind: str = "empirical_single"
    extra: dict = field(default_factory=dict)
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        for name in TRAJECTORY_FIELDS:
            setattr(self, name, np.asarray(getattr(self, name)))
        lengths = {len(getattr(self, name)) for name in TRAJECTORY_FIELDS}
        if len(lengths) != 1:
            raise ValueError("trajectory columns have different lengths")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        if name in TRAJECTORY_FIELDS:
            return getattr(self, name)
        return np.asarray(self.extra[name])

    def final(self) -> dict:
        return {name: getattr(self, name)[-1].item() for name in TRAJECTORY_FIELDS}

    @classmethod
    def analytic(cls, t, n, sq_mean, mean_sq, mean=None) -> "Trajectory":
        sq_mean = np.asarray(sq_mean, dtype=float)
        mean_sq = np.asarray(mean_sq, dtype=float)
        if mean is None:
            mean = np.full(len(sq_mean), np.nan)
        return cls(np.asarray(t), np.asarray(n), sq_mean, mean_sq, mean_sq - sq_mean,
                   np.asarray(mean, dtype=float), kind="analytic")
