"""Seeded Monte Carlo simulation of open gossip systems.

Two modes are supported:

* ``fixed_size``: every event is a replacement with probability ``p``,
  otherwise a gossip between two agents picked independently and uniformly
  (self-pairs allowed, applied as no-ops).
* ``growing``: with ``n`` agents present, an arrival happens with probability
  ``p_n``, otherwise a gossip.  Nobody leaves.

Replicates run in lockstep as rows of a 2-D array, but every replicate
consumes random numbers only from its own stream, in fixed-size chunks.  A
replicate's trajectory is therefore independent of how many other replicates
share its batch.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .core import ArrivalDistribution, SystemState, Trajectory, TRAJECTORY_FIELDS

__all__ = [
    "Gossip", "Departure", "Arrival", "Replacement", "EventKind",
    "RngStream", "SimConfig", "EnsembleResult",
    "ConstantSchedule", "FixedRateSchedule", "LinearRateSchedule", "InverseSchedule",
    "TableSchedule",
    "apply_event", "sample_event_fixed", "sample_event_growing",
    "run_fixed", "run_growing", "run_ensemble",
]

CHUNK = 512


# --------------------------------------------------------------------------- events

@dataclass(frozen=True)
class Gossip:
    i: int
    j: int


@dataclass(frozen=True)
class Departure:
    i: int


@dataclass(frozen=True)
class Arrival:
    value: float


@dataclass(frozen=True)
class Replacement:
    i: int
    value: float


EventKind = Gossip | Departure | Arrival | Replacement


def _check_index(state: SystemState, i: int) -> None:
    if not 0 <= i < state.n:
        raise IndexError(f"agent index {i} out of range for n = {state.n}")


def apply_event(state: SystemState, ev: EventKind) -> SystemState:
    """Return the state after ``ev``; ``state`` itself is left untouched.

    A replacement keeps the storage slot of the departing agent for the
    newcomer, which receives a fresh label like any arrival.
    """
    x = list(state.values)
    label = state.next_label
    if isinstance(ev, Gossip):
        _check_index(state, ev.i)
        _check_index(state, ev.j)
        avg = (x[ev.i] + x[ev.j]) / 2
        x[ev.i] = x[ev.j] = avg
    elif isinstance(ev, Departure):
        if state.n == 0:
            raise ValueError("departure from empty system")
        _check_index(state, ev.i)
        del x[ev.i]
    elif isinstance(ev, Arrival):
        x.append(float(ev.value))
        label += 1
    elif isinstance(ev, Replacement):
        if state.n == 0:
            raise ValueError("replacement in empty system")
        _check_index(state, ev.i)
        x[ev.i] = float(ev.value)
        label += 1
    else:
        raise TypeError(f"not an event: {ev!r}")
    return SystemState(tuple(x), label, state.time + 1)


def _pick(u: np.ndarray, n) -> np.ndarray:
    """Uniform index in ``range(n)`` from a uniform [0, 1) draw."""
    return np.minimum((u * n).astype(np.int64), np.asarray(n) - 1)


def sample_event_fixed(n: int, p: float, rng: np.random.Generator,
                       dist: ArrivalDistribution | None = None) -> EventKind:
    if n < 2:
        raise ValueError("fixed-size events need n >= 2")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    dist = dist or ArrivalDistribution()
    if rng.random() < p:
        return Replacement(int(rng.integers(n)), dist.sample(rng))
    return Gossip(int(rng.integers(n)), int(rng.integers(n)))


def sample_event_growing(n: int, p_n: float, rng: np.random.Generator,
                         dist: ArrivalDistribution | None = None) -> EventKind:
    if n < 1:
        raise ValueError("growing events need n >= 1")
    if not 0.0 < p_n <= 1.0:
        raise ValueError("p_n must lie in (0, 1]")
    dist = dist or ArrivalDistribution()
    if rng.random() < p_n:
        return Arrival(dist.sample(rng))
    return Gossip(int(rng.integers(n)), int(rng.integers(n)))


# --------------------------------------------------------------------------- rng

@dataclass(frozen=True)
class RngStream:
    """One replicate's random stream: Philox keyed by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


class _ChunkedDraws:
    """Per-replicate uniforms consumed one event at a time, drawn in chunks."""

    def __init__(self, rng: np.random.Generator, dist: ArrivalDistribution):
        self.rng = rng
        self.dist = dist

    def next_chunk(self) -> np.ndarray:
        rng = self.rng
        return np.stack([rng.random(CHUNK), rng.random(CHUNK), rng.random(CHUNK),
                         self.dist.draw_base(rng, CHUNK)])


def _stacked_chunks(sources: Sequence[_ChunkedDraws]) -> np.ndarray:
    # shape (4, R, CHUNK): event selector, index i, index j, arrival base
    return np.stack([s.next_chunk() for s in sources], axis=1)


# --------------------------------------------------------------------------- schedules

@dataclass(frozen=True)
class ConstantSchedule:
    p: float

    def __call__(self, n: int) -> float:
        return self.p

    def describe(self) -> dict:
        return {"kind": "constant", "p": self.p}


@dataclass(frozen=True)
class FixedRateSchedule:
    """Arrivals at a constant rate, gossip rate growing with ``n``."""

    lam_a: float = 1.0
    lam_g: float = 1.0

    def __call__(self, n: int) -> float:
        return self.lam_a / (self.lam_a + self.lam_g * n)

    def describe(self) -> dict:
        return {"kind": "fixed_rate", "lam_a": self.lam_a, "lam_g": self.lam_g}


@dataclass(frozen=True)
class LinearRateSchedule:
    """Arrival and gossip rates both proportional to ``n``: constant ``p``."""

    lam_r: float = 1.0
    lam_g: float = 1.0

    def __call__(self, n: int) -> float:
        return self.lam_r / (self.lam_r + self.lam_g)

    def describe(self) -> dict:
        return {"kind": "linear_rate", "lam_r": self.lam_r, "lam_g": self.lam_g}


@dataclass(frozen=True)
class InverseSchedule:
    def __call__(self, n: int) -> float:
        return 1.0 / n

    def describe(self) -> dict:
        return {"kind": "inverse"}


@dataclass(frozen=True)
class TableSchedule:
    """``p_n`` looked up as ``table[n - start]``; the last entry is reused past the end."""

    table: tuple[float, ...]
    start: int = 1

    def __call__(self, n: int) -> float:
        k = n - self.start
        if k < 0:
            raise ValueError(f"schedule table starts at n = {self.start}")
        return self.table[min(k, len(self.table) - 1)]

    def describe(self) -> dict:
        return {"kind": "table", "start": self.start, "table": list(self.table)}


def _describe_schedule(s) -> dict:
    if hasattr(s, "describe"):
        return s.describe()
    return {"kind": "callable", "repr": repr(s)}


# --------------------------------------------------------------------------- config

MODES = ("fixed_size", "growing")
HORIZON_UNITS = ("events", "replacements", "arrivals")
INIT_KINDS = ("iid", "consensus", "explicit")


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce a run.

    ``horizon`` counts events (or replacements, single fixed-size runs only)
    in fixed-size mode and arrivals in growing mode.
    """

    mode: str = "fixed_size"
    n0: int = 25
    p: float = 0.05
    p_schedule: Callable[[int], float] | None = None
    dist: ArrivalDistribution = field(default_factory=ArrivalDistribution)
    horizon: int = 2000
    horizon_unit: str = ""
    replicates: int = 1
    seed: int = 0
    init: str = "iid"
    init_values: tuple[float, ...] = ()
    consensus_value: float = 0.0
    record_every_event: bool = False
    record_values: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.horizon_unit:
            object.__setattr__(self, "horizon_unit",
                               "events" if self.mode == "fixed_size" else "arrivals")
        if self.horizon_unit not in HORIZON_UNITS:
            raise ValueError(f"horizon_unit must be one of {HORIZON_UNITS}")
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}")
        if self.init == "explicit":
            object.__setattr__(self, "init_values", tuple(float(v) for v in self.init_values))
            object.__setattr__(self, "n0", len(self.init_values))
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.mode == "fixed_size":
            if self.n0 < 2:
                raise ValueError("fixed_size mode requires n0 >= 2")
            if not 0.0 <= self.p <= 1.0:
                raise ValueError("p must lie in [0, 1]")
            if self.horizon_unit == "arrivals":
                raise ValueError("fixed_size horizon counts events or replacements")
            if self.horizon_unit == "replacements" and self.p == 0.0:
                raise ValueError("replacement horizon never reached with p = 0")
        else:
            if self.n0 < 1:
                raise ValueError("growing mode requires n0 >= 1")
            if self.horizon_unit != "arrivals":
                raise ValueError("growing horizon counts arrivals")
            if self.p_schedule is None:
                if not 0.0 < self.p <= 1.0:
                    raise ValueError("p must lie in (0, 1] in growing mode")
                object.__setattr__(self, "p_schedule", ConstantSchedule(self.p))

    @property
    def sigma2(self) -> float:
        return self.dist.sigma2

    def schedule_table(self) -> np.ndarray:
        """``p_n`` for ``n = n0, ..., n0 + horizon - 1``."""
        ns = range(self.n0, self.n0 + self.horizon)
        table = np.array([float(self.p_schedule(n)) for n in ns])
        if np.any(~(table > 0.0)) or np.any(table > 1.0):
            raise ValueError("p_n must lie in (0, 1] for every n")
        return table

    def describe(self) -> dict:
        out = {
            "mode": self.mode, "n0": self.n0, "dist": self.dist.kind,
            "sigma2": self.dist.sigma2, "horizon": self.horizon,
            "horizon_unit": self.horizon_unit, "replicates": self.replicates,
            "seed": self.seed, "init": self.init,
        }
        if self.mode == "fixed_size":
            out["p"] = self.p
        else:
            out["p_schedule"] = _describe_schedule(self.p_schedule)
        if self.init == "explicit":
            out["init_values"] = list(self.init_values)
        elif self.init == "consensus":
            out["consensus_value"] = self.consensus_value
        return out


def _initial_values(config: SimConfig, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    R = len(rngs)
    if config.init == "explicit":
        return np.tile(np.asarray(config.init_values, dtype=float), (R, 1))
    if config.init == "consensus":
        return np.full((R, config.n0), float(config.consensus_value))
    return np.stack([config.dist.sample(rng, config.n0) for rng in rngs])


def _row_moments(x: np.ndarray) -> tuple[np.ndarray, ...]:
    mean = x.mean(axis=1)
    mean_sq = (x * x).mean(axis=1)
    variance = ((x - mean[:, None]) ** 2).mean(axis=1)
    return mean * mean, mean_sq, variance, mean


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite moment encountered (overflow?)")


# --------------------------------------------------------------------------- fixed-size kernel

@dataclass
class _FixedStep:
    t: int
    x: np.ndarray
    replaced: np.ndarray
    index: np.ndarray
    departed: np.ndarray
    arrived: np.ndarray


def _fixed_steps(config: SimConfig, streams: Sequence[RngStream]) -> Iterator[_FixedStep]:
    rngs = [s.generator() for s in streams]
    x = _initial_values(config, rngs)
    R, n = x.shape
    rows = np.arange(R)
    sources = [_ChunkedDraws(rng, config.dist) for rng in rngs]
    p = config.p
    by_replacements = config.horizon_unit == "replacements"
    if by_replacements and R != 1:
        raise ValueError("a replacement-count horizon is only defined for single runs")
    none = np.zeros(R, dtype=bool)
    nan = np.full(R, np.nan)
    yield _FixedStep(0, x, none, np.zeros(R, dtype=np.int64), nan, nan)
    t = 0
    replacements = 0
    draws = None
    while True:
        if by_replacements:
            if replacements >= config.horizon:
                break
        elif t >= config.horizon:
            break
        col = t % CHUNK
        if col == 0:
            draws = _stacked_chunks(sources)
        ue, ui, uj, base = draws[:, :, col]
        rep = ue < p
        i = _pick(ui, n)
        j = _pick(uj, n)
        xi = x[rows, i]
        avg = (xi + x[rows, j]) / 2
        gos = ~rep
        x[rows[gos], i[gos]] = avg[gos]
        x[rows[gos], j[gos]] = avg[gos]
        values = config.dist.transform(base)
        x[rows[rep], i[rep]] = values[rep]
        t += 1
        replacements += int(rep[0]) if by_replacements else 0
        yield _FixedStep(t, x, rep, i, np.where(rep, xi, np.nan), np.where(rep, values, np.nan))


def run_fixed(config: SimConfig, stream: RngStream | None = None) -> Trajectory:
    """Single fixed-size realization recorded after every event."""
    if config.mode != "fixed_size":
        raise ValueError("run_fixed needs mode = fixed_size")
    stream = stream or RngStream(config.seed, 0)
    cols = {name: [] for name in ("t", "sq_mean", "mean_sq", "variance", "mean")}
    events, departed, arrived, values = [], [], [], []
    for step in _fixed_steps(config, [stream]):
        sq, ms, var, mean = _row_moments(step.x)
        cols["t"].append(step.t)
        cols["sq_mean"].append(sq[0])
        cols["mean_sq"].append(ms[0])
        cols["variance"].append(var[0])
        cols["mean"].append(mean[0])
        if step.t == 0:
            events.append("init")
        else:
            events.append("replacement" if step.replaced[0] else "gossip")
        departed.append(step.departed[0])
        arrived.append(step.arrived[0])
        if config.record_values:
            values.append(step.x[0].copy())
    _check_finite(cols["mean_sq"])
    T = len(cols["t"])
    return Trajectory(
        np.asarray(cols["t"]), np.full(T, config.n0), np.asarray(cols["sq_mean"]),
        np.asarray(cols["mean_sq"]), np.asarray(cols["variance"]), np.asarray(cols["mean"]),
        kind="empirical_single",
        extra={"event": events, "departed": np.asarray(departed), "arrived": np.asarray(arrived)},
        values=np.asarray(values) if config.record_values else None,
    )


# --------------------------------------------------------------------------- growing kernel

@dataclass
class _GrowingStep:
    t: int
    x: np.ndarray
    n: np.ndarray
    arrived: np.ndarray
    arrivals: np.ndarray


def _growing_steps(config: SimConfig, streams: Sequence[RngStream]) -> Iterator[_GrowingStep]:
    rngs = [s.generator() for s in streams]
    x0 = _initial_values(config, rngs)
    R = len(rngs)
    cap = config.n0 + config.horizon
    x = np.zeros((R, cap))
    x[:, :config.n0] = x0
    n = np.full(R, config.n0, dtype=np.int64)
    arrivals = np.zeros(R, dtype=np.int64)
    rows = np.arange(R)
    table = config.schedule_table()
    sources = [_ChunkedDraws(rng, config.dist) for rng in rngs]
    yield _GrowingStep(0, x, n, np.ones(R, dtype=bool), arrivals)
    t = 0
    draws = None
    while True:
        active = arrivals < config.horizon
        if not active.any():
            break
        col = t % CHUNK
        if col == 0:
            draws = _stacked_chunks(sources)
        ue, ui, uj, base = draws[:, :, col]
        p_n = table[np.minimum(n - config.n0, config.horizon - 1)]
        arr = active & (ue < p_n)
        gos = active & ~arr
        g = rows[gos]
        if g.size:
            ng = n[gos]
            i = _pick(ui[gos], ng)
            j = _pick(uj[gos], ng)
            avg = (x[g, i] + x[g, j]) / 2
            x[g, i] = avg
            x[g, j] = avg
        a = rows[arr]
        if a.size:
            x[a, n[arr]] = config.dist.transform(base[arr])
            n[arr] += 1
            arrivals[arr] += 1
        t += 1
        yield _GrowingStep(t, x, n, arr, arrivals)


def _padded_moments(x: np.ndarray, n: np.ndarray) -> tuple[np.ndarray, ...]:
    # unused slots hold exact zeros, so full-row sums equal sums over present agents
    width = int(n.max())
    xs = x[:, :width]
    mean = xs.sum(axis=1) / n
    mean_sq = (xs * xs).sum(axis=1) / n
    sq = mean * mean
    return sq, mean_sq, mean_sq - sq, mean


def run_growing(config: SimConfig, stream: RngStream | None = None) -> Trajectory:
    """Single growing realization.

    Samples are taken just after every arrival (and at ``t = 0``), or after
    every event when ``config.record_every_event`` is set.
    """
    if config.mode != "growing":
        raise ValueError("run_growing needs mode = growing")
    stream = stream or RngStream(config.seed, 0)
    rec = {name: [] for name in TRAJECTORY_FIELDS}
    events = []
    for step in _growing_steps(config, [stream]):
        arrived = bool(step.arrived[0])
        if not (arrived or config.record_every_event):
            continue
        sq, ms, var, mean = _padded_moments(step.x[:1], step.n[:1])
        for name, v in zip(TRAJECTORY_FIELDS, (step.t, step.n[0], sq[0], ms[0], var[0], mean[0])):
            rec[name].append(v)
        events.append("init" if step.t == 0 else ("arrival" if arrived else "gossip"))
    _check_finite(rec["mean_sq"])
    return Trajectory(*(np.asarray(rec[name]) for name in TRAJECTORY_FIELDS),
                      kind="empirical_single", extra={"event": events})


# --------------------------------------------------------------------------- ensembles

@dataclass
class EnsembleResult:
    """Pointwise ensemble mean and standard error of the moment trajectories."""

    mean_trajectory: Trajectory
    stderr_trajectory: Trajectory
    replicates: int

    def final(self) -> dict:
        m = self.mean_trajectory.final()
        s = self.stderr_trajectory.final()
        return {"mean": m, "stderr": s}


_STAT_FIELDS = ("sq_mean", "mean_sq", "variance", "mean")


class _BatchStats:
    """Per-sample count, mean and sum of squared deviations (mergeable)."""

    def __init__(self, data: dict[str, np.ndarray]):
        # data[name] has shape (R, T)
        first = next(iter(data.values()))
        self.count = first.shape[0]
        self.mean = {k: v.mean(axis=0) for k, v in data.items()}
        self.m2 = {k: ((v - self.mean[k]) ** 2).sum(axis=0) for k, v in data.items()}

    def merge(self, other: "_BatchStats") -> "_BatchStats":
        na, nb = self.count, other.count
        tot = na + nb
        for k in self.mean:
            delta = other.mean[k] - self.mean[k]
            self.mean[k] = self.mean[k] + delta * (nb / tot)
            self.m2[k] = self.m2[k] + other.m2[k] + delta ** 2 * (na * nb / tot)
        self.count = tot
        return self

    def stderr(self) -> dict[str, np.ndarray]:
        return {k: np.sqrt(v / (self.count - 1)) / math.sqrt(self.count)
                for k, v in self.m2.items()}


def _fixed_batch(config: SimConfig, streams: Sequence[RngStream]) -> tuple[_BatchStats, np.ndarray]:
    per_step = {k: [] for k in _STAT_FIELDS}
    ts = []
    for step in _fixed_steps(config, streams):
        sq, ms, var, mean = _row_moments(step.x)
        for k, v in zip(_STAT_FIELDS, (sq, ms, var, mean)):
            per_step[k].append(v)
        ts.append(step.t)
    data = {k: np.stack(v, axis=1) for k, v in per_step.items()}
    _check_finite(data["mean_sq"])
    return _BatchStats(data), np.asarray(ts)


def _growing_batch(config: SimConfig, streams: Sequence[RngStream]) -> tuple[_BatchStats, np.ndarray]:
    R = len(streams)
    T = config.horizon + 1
    data = {k: np.empty((R, T)) for k in _STAT_FIELDS}
    t_event = np.empty((R, T))
    for step in _growing_steps(config, streams):
        rows = np.flatnonzero(step.arrived)
        if rows.size == 0:
            continue
        sq, ms, var, mean = _padded_moments(step.x[rows], step.n[rows])
        cols = step.arrivals[rows]
        for k, v in zip(_STAT_FIELDS, (sq, ms, var, mean)):
            data[k][rows, cols] = v
        t_event[rows, cols] = step.t
    _check_finite(data["mean_sq"])
    data["t_event"] = t_event
    return _BatchStats(data), np.arange(T)


def run_ensemble(config: SimConfig, base_seed: int | None = None, *,
                 batch_size: int = 1024, workers: int = 1) -> EnsembleResult:
    """Run ``config.replicates`` independent replicates and aggregate them.

    Replicate ``r`` uses stream ``(base_seed, r)``.  Batches may run on
    several threads; they are merged in replicate order, so the result does
    not depend on ``workers``.
    """
    R = config.replicates
    if R < 2:
        raise ValueError("an ensemble needs replicates >= 2 (stderr undefined)")
    seed = config.seed if base_seed is None else base_seed
    streams = [RngStream(seed, r) for r in range(R)]
    batches = [streams[k:k + batch_size] for k in range(0, R, batch_size)]
    runner = _fixed_batch if config.mode == "fixed_size" else _growing_batch
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda b: runner(config, b), batches))
    else:
        results = [runner(config, b) for b in batches]
    stats, t = results[0]
    for other, _ in results[1:]:
        stats.merge(other)
    se = stats.stderr()
    if config.mode == "fixed_size":
        n = np.full(len(t), config.n0)
        extra_m, extra_s = {}, {}
    else:
        n = config.n0 + t
        extra_m = {"t_event": stats.mean["t_event"]}
        extra_s = {"t_event": se["t_event"]}
    mean_traj = Trajectory(t, n, *(stats.mean[k] for k in _STAT_FIELDS),
                           kind="empirical_ensemble_mean", extra=extra_m)
    se_traj = Trajectory(t, n, *(se[k] for k in _STAT_FIELDS),
                         kind="empirical_ensemble_stderr", extra=extra_s)
    return EnsembleResult(mean_traj, se_traj, R)
