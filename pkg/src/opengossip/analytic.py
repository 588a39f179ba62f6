"""Closed-form expected-moment dynamics of open gossip systems.

Every event type (gossip, arrival, departure, replacement) acts on the
expected moment vector ``(E mean**2, E mean_of_squares)`` as an affine map.
Mixing gossip and replacement with a constant probability gives a
time-invariant 2x2 affine system; a growing system without departures gives
a triangular time-varying one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .core import AffineMap2, MomentVector, Trajectory, apply_affine

__all__ = [
    "Spectrum2",
    "GrowingRecursionState",
    "gossip_map",
    "arrival_map",
    "departure_map",
    "replacement_map",
    "mixed_event_map",
    "fixed_point",
    "fixed_point_variance",
    "spectrum",
    "spectral_radius_regime",
    "inter_arrival_gamma",
    "inter_arrival_map",
    "growing_affine_map",
    "growing_step",
    "growing_recursion",
    "growing_limit",
    "appendix_bound",
    "closed_system_baseline",
    "closed_system_baseline_limit",
    "mixed_trajectory",
    "growing_trajectory",
    "iid_moments",
]

GOSSIP_DOMINATED = "gossip_dominated"
REPLACEMENT_DOMINATED = "replacement_dominated"
BOUNDARY = "boundary"


def _check_n(n, minimum: int, what: str) -> int:
    if int(n) != n or n < minimum:
        raise ValueError(f"{what} requires an integer n >= {minimum}, got {n}")
    return int(n)


def _check_prob(p: float, *, allow_zero: bool = True) -> float:
    if not (0.0 <= p <= 1.0) or (not allow_zero and p == 0.0):
        bounds = "[0, 1]" if allow_zero else "(0, 1]"
        raise ValueError(f"probability p must lie in {bounds}, got {p}")
    return float(p)


def gossip_map(n: int) -> AffineMap2:
    """One uniformly random pairwise average among ``n`` agents."""
    n = _check_n(n, 1, "gossip")
    return AffineMap2(1.0, 0.0, 1.0 / n, 1.0 - 1.0 / n)


def arrival_map(n: int, sigma2: float) -> AffineMap2:
    """Arrival of one agent into a system of ``n`` agents."""
    n = _check_n(n, 1, "arrival")
    m = n + 1
    return AffineMap2(n * n / (m * m), 0.0, 0.0, n / m, sigma2 / (m * m), sigma2 / m)


def departure_map(n: int) -> AffineMap2:
    """Departure of one uniformly chosen agent out of ``n``."""
    if int(n) != n or n < 2:
        raise ValueError("departure leaves empty system or is undefined (need n >= 2)")
    k = (n - 1) ** 2
    return AffineMap2((n * n - 2 * n) / k, 1.0 / k, 0.0, 1.0)


def replacement_map(n: int, sigma2: float) -> AffineMap2:
    """Departure immediately followed by an arrival; size stays ``n``."""
    n = _check_n(n, 2, "replacement")
    return AffineMap2((n - 2) / n, 1.0 / (n * n), 0.0, (n - 1) / n,
                      sigma2 / (n * n), sigma2 / n)


def mixed_event_map(n: int, p: float, sigma2: float) -> AffineMap2:
    """One event that is a replacement with probability ``p``, else a gossip."""
    n = _check_n(n, 2, "mixed event")
    p = _check_prob(p)
    return AffineMap2(1.0 - 2.0 * p / n, p / (n * n), (1.0 - p) / n, 1.0 - 1.0 / n,
                      sigma2 * p / (n * n), sigma2 * p / n)


def fixed_point(n: int, p: float, sigma2: float) -> MomentVector:
    """Equilibrium of :func:`mixed_event_map`.

    At ``p = 0`` every consensus state is fixed, so there is no unique answer.
    """
    n = _check_n(n, 2, "fixed point")
    p = _check_prob(p)
    if p == 0.0:
        raise ValueError("non-unique fixed point (p = 0)")
    d = p + 2 * n - 1
    return MomentVector(sigma2 * (p + 1) / d, sigma2 * ((1 + p * (2 * n - 1)) / d))


def fixed_point_variance(n: int, p: float, sigma2: float) -> float:
    """Equilibrium variance, computed without cancellation."""
    fixed_point(n, p, sigma2)
    return sigma2 * 2 * p * (n - 1) / (p + 2 * n - 1)


@dataclass(frozen=True)
class Spectrum2:
    """Eigen-decomposition of the mixed-event matrix.

    Eigenvectors are scaled so that their second component is 1, except at
    ``p = 1`` where the eigenvector of ``1 - 2/n`` is ``(1, 0)``.
    """

    r_plus: float
    r_minus: float
    v_plus: tuple[float, float]
    v_minus: tuple[float, float]
    delta: float

    def residuals(self, matrix: np.ndarray) -> tuple[float, float]:
        """Relative eigen-residuals ``|A v - r v| / |v|`` for both pairs."""
        out = []
        for r, v in ((self.r_plus, self.v_plus), (self.r_minus, self.v_minus)):
            v = np.asarray(v)
            out.append(float(np.linalg.norm(matrix @ v - r * v) / np.linalg.norm(v)))
        return out[0], out[1]


def spectrum(n: int, p: float) -> Spectrum2:
    n = _check_n(n, 2, "spectrum")
    p = _check_prob(p)
    delta = (1.0 - 2.0 * p) ** 2 + 4.0 * p * (1.0 - p) / n
    root = math.sqrt(delta)
    r_plus = (2 * n - 2 * p - 1 + root) / (2 * n)
    r_minus = (2 * n - 2 * p - 1 - root) / (2 * n)
    if p == 1.0:
        v_plus = (1.0 / n, 1.0)
        v_minus = (1.0, 0.0)
    else:
        v_plus = ((2 * p - 1 - root) / (2 * (p - 1)), 1.0)
        v_minus = ((2 * p - 1 + root) / (2 * (p - 1)), 1.0)
    return Spectrum2(r_plus, r_minus, v_plus, v_minus, delta)


def spectral_radius_regime(n: int, p: float, tol: float = 1e-9) -> str:
    """Which mechanism sets the slowest convergence rate.

    The dominant eigenvalue is compared with the two diagonal rates:
    ``1 - 1/n`` (contraction of the mean square, common to gossip and
    replacement) and ``1 - 2p/n`` (decay of the squared mean, which only
    replacements move).  Whichever it sits closer to names the regime; the
    two are equally close exactly at ``p = 1/2``.
    """
    spec = spectrum(n, p)
    dominant = max(spec.r_plus, spec.r_minus)
    to_gossip = abs(dominant - (1.0 - 1.0 / n))
    to_replacement = abs(dominant - (1.0 - 2.0 * p / n))
    if abs(to_gossip - to_replacement) <= tol / n:
        return BOUNDARY
    return GOSSIP_DOMINATED if to_gossip < to_replacement else REPLACEMENT_DOMINATED


def inter_arrival_gamma(n: int, p: float) -> float:
    """Variance contraction accumulated over the geometric gossip run."""
    n = _check_n(n, 1, "inter-arrival map")
    p = _check_prob(p, allow_zero=False)
    return n / (n - 1 + 1.0 / p)


def inter_arrival_map(n: int, p: float) -> AffineMap2:
    """Expected effect of the gossips preceding the next arrival.

    Sums ``p (1-p)^k A_g^k`` over the geometric number ``k`` of gossips.
    """
    g = inter_arrival_gamma(n, p)
    return AffineMap2(1.0, 0.0, 1.0 - g, g)


def growing_affine_map(n: int, p: float, sigma2: float) -> AffineMap2:
    """From just after arrival ``n`` to just after arrival ``n + 1``."""
    return arrival_map(n, sigma2).compose(inter_arrival_map(n, p))


@dataclass(frozen=True)
class GrowingRecursionState:
    """Expected moments of a growing system just after the ``n``-th arrival.

    ``w_n`` is the scaled variance ``n * var_n``.
    """

    n: int
    var_n: float
    sq_mean_n: float
    w_n: float

    @classmethod
    def initial(cls, sigma2: float, n: int = 1) -> "GrowingRecursionState":
        """``n`` i.i.d. agents drawn from the arrival law."""
        n = _check_n(n, 1, "growing recursion")
        w = (n - 1) * sigma2
        return cls(n, w / n, sigma2 / n, w)

    @classmethod
    def from_variance(cls, n: int, var_n: float, sq_mean_n: float) -> "GrowingRecursionState":
        return cls(n, var_n, sq_mean_n, n * var_n)


def growing_step(state: GrowingRecursionState, p_n: float, sigma2: float) -> GrowingRecursionState:
    """Advance the scaled-variance recursion by one arrival.

    Assumes ``sq_mean_n = sigma2 / n``, which holds whenever the system was
    assembled from agents drawn from the arrival law.
    """
    if not (0.0 < p_n <= 1.0):
        raise ValueError(f"p_n must lie in (0, 1], got {p_n}")
    n = state.n
    w = inter_arrival_gamma(n, p_n) * state.w_n + sigma2
    return GrowingRecursionState(n + 1, w / (n + 1), sigma2 / (n + 1), w)


def growing_recursion(n_max: int, schedule: Callable[[int], float], sigma2: float,
                      n0: int = 1) -> Iterator[GrowingRecursionState]:
    """Yield recursion states for ``n = n0, ..., n_max``."""
    state = GrowingRecursionState.initial(sigma2, n0)
    yield state
    while state.n < n_max:
        state = growing_step(state, schedule(state.n), sigma2)
        yield state


def growing_limit(p: float, sigma2: float) -> float:
    """Limit of the expected variance under a constant arrival probability."""
    p = _check_prob(p, allow_zero=False)
    return p * sigma2


def appendix_bound(n0: int, n: int, q: float, w_n0: float, sigma2: float) -> float:
    """Upper bound on the scaled variance ``W_n`` for ``n > n0``.

    Valid when the arrival probability stays at or below ``1/(1+q)`` from
    ``n0`` on.
    """
    if q <= 0:
        raise ValueError("q = 1/p - 1 must be > 0")
    if n0 < 2 or n <= n0:
        raise ValueError("need n0 >= 2 and n > n0")
    head = w_n0 * ((n0 + q) / (n + q)) ** q
    # (n+q+1)^(q+1) / (n+q)^q, arranged to avoid overflow
    tail = sigma2 * (n + q + 1) * ((n + q + 1) / (n + q)) ** q / (q + 1)
    return head + tail


def closed_system_baseline(n: int, K: float, sigma2: float) -> float:
    """Variance after ``n*K`` gossips on ``n`` i.i.d. agents, no churn."""
    n = _check_n(n, 2, "closed system baseline")
    if K < 0:
        raise ValueError("K must be >= 0")
    return sigma2 * ((n - 1) / n) * (1.0 - 1.0 / n) ** (n * K)


def closed_system_baseline_limit(K: float, sigma2: float) -> float:
    return sigma2 * math.exp(-K)


def iid_moments(n: int, sigma2: float) -> MomentVector:
    """Expected moments of ``n`` i.i.d. draws from the arrival law."""
    return MomentVector(sigma2 / n, sigma2)


def mixed_trajectory(n: int, p: float, sigma2: float, X0: MomentVector,
                     steps: int) -> Trajectory:
    """Iterate the mixed-event map ``steps`` times from ``X0``."""
    m = mixed_event_map(n, p, sigma2)
    sq = np.empty(steps + 1)
    ms = np.empty(steps + 1)
    X = X0
    sq[0], ms[0] = X
    for k in range(1, steps + 1):
        X = apply_affine(m, X)
        sq[k], ms[k] = X
    return Trajectory.analytic(np.arange(steps + 1), np.full(steps + 1, n), sq, ms)


def growing_trajectory(n_max: int, schedule: Callable[[int], float], sigma2: float,
                       n0: int = 1, X0: MomentVector | None = None) -> Trajectory:
    """Expected moments at arrival instants, indexed by arrival count.

    With ``X0`` the general affine recursion is iterated from that state;
    otherwise the system starts from ``n0`` i.i.d. agents and the scaled
    variance recursion is used.
    """
    ns = np.arange(n0, n_max + 1)
    sq = np.empty(len(ns))
    ms = np.empty(len(ns))
    if X0 is None:
        for k, st in enumerate(growing_recursion(n_max, schedule, sigma2, n0)):
            sq[k] = st.sq_mean_n
            ms[k] = st.sq_mean_n + st.var_n
    else:
        X = X0
        for k, n in enumerate(ns):
            sq[k], ms[k] = X
            if n < n_max:
                X = apply_affine(growing_affine_map(int(n), schedule(int(n)), sigma2), X)
    return Trajectory.analytic(ns - n0, ns, sq, ms)
