"""Empirical-vs-analytic comparison of moment trajectories."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import analytic
from .core import MomentVector, Trajectory, empirical_moments
from .sim import EnsembleResult, SimConfig, run_ensemble

__all__ = ["expected_initial_moments", "analytic_overlay", "compare_trajectories",
           "run_comparison"]


def expected_initial_moments(config: SimConfig) -> MomentVector:
    if config.init == "explicit":
        return empirical_moments(config.init_values)
    if config.init == "consensus":
        c2 = float(config.consensus_value) ** 2
        return MomentVector(c2, c2)
    return analytic.iid_moments(config.n0, config.sigma2)


def analytic_overlay(config: SimConfig, steps: int | None = None, *,
                     p: float | None = None) -> Trajectory:
    """Expected moments matching the sampling cadence of ``config``.

    ``p`` overrides the replacement probability (fixed size) or replaces the
    schedule by a constant (growing); used for negative controls.
    """
    sigma2 = config.sigma2
    X0 = expected_initial_moments(config)
    if config.mode == "fixed_size":
        if steps is None:
            if config.horizon_unit != "events":
                raise ValueError("steps required when the horizon is not an event count")
            steps = config.horizon
        return analytic.mixed_trajectory(config.n0, config.p if p is None else p, sigma2,
                                         X0, steps)
    schedule = config.p_schedule if p is None else (lambda n: p)
    n_max = config.n0 + (config.horizon if steps is None else steps)
    if config.init == "iid":
        return analytic.growing_trajectory(n_max, schedule, sigma2, config.n0)
    return analytic.growing_trajectory(n_max, schedule, sigma2, config.n0, X0=X0)


def _zscores(emp: np.ndarray, se: np.ndarray, ana: np.ndarray) -> np.ndarray:
    diff = np.abs(emp - ana)
    scale = np.maximum(np.abs(emp), np.abs(ana))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / se
    # zero stderr (deterministic sample): exact agreement up to rounding, else infinite
    degenerate = se == 0
    z[degenerate] = np.where(diff[degenerate] <= 1e-12 * scale[degenerate] + 1e-300, 0.0, np.inf)
    return z


def compare_trajectories(mean: Trajectory, stderr: Trajectory, analytic: Trajectory, *,
                         fields: Sequence[str] = ("sq_mean", "mean_sq", "variance"),
                         k: float = 4.0, min_fraction: float = 0.99,
                         start: int = 0) -> dict:
    """Pointwise ``|empirical - analytic| / stderr`` for each field.

    A field passes when at least ``min_fraction`` of the compared samples lie
    within ``k`` standard errors.  Samples before index ``start`` are skipped.
    """
    if len(mean) != len(analytic) or not np.array_equal(mean.t, analytic.t):
        raise ValueError(f"misaligned horizons: empirical has {len(mean)} samples, "
                         f"analytic has {len(analytic)}")
    out = {}
    for name in fields:
        z = _zscores(mean.column(name)[start:], stderr.column(name)[start:],
                     analytic.column(name)[start:])
        frac = float(np.mean(z <= k))
        worst = float(np.max(z))
        out[name] = {
            "k": k,
            "min_fraction": min_fraction,
            "fraction_within_k": frac,
            "max_abs_z": worst if math.isfinite(worst) else None,
            "points": int(z.size),
            "pass": frac >= min_fraction,
        }
    return out


def run_comparison(config: SimConfig, *, k: float = 4.0, min_fraction: float = 0.99,
                   start: int = 0, analytic_p: float | None = None,
                   analytic_steps: int | None = None,
                   fields: Sequence[str] | None = None,
                   workers: int = 1) -> tuple[EnsembleResult, Trajectory, dict]:
    ens = run_ensemble(config, workers=workers)
    overlay = analytic_overlay(config, analytic_steps, p=analytic_p)
    if fields is None:
        fields = (("sq_mean", "mean_sq", "variance") if config.mode == "fixed_size"
                  else ("sq_mean", "variance"))
    verdicts = compare_trajectories(ens.mean_trajectory, ens.stderr_trajectory, overlay,
                                    fields=fields, k=k, min_fraction=min_fraction, start=start)
    return ens, overlay, verdicts
