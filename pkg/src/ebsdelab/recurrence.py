"""Recurrence and invariant-measure audits for the forward process.

Two empirical consequences of mixing are checked: every path enters a small
ball around the origin (hitting-time CDFs with Wilson confidence bands), and
the long-run statistics of one path agree with large-time ensemble averages
regardless of the starting point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .forward import simulate_ensemble
from .model import DriftField, ModelSpec


@dataclass(frozen=True)
class HittingReport:
    """Empirical P(tau^x < T) over a ladder of horizons, tau^x the first
    grid time with |X^x_t| < epsilon."""

    epsilon: float
    horizons: np.ndarray
    hit_prob: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_mc: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "horizons", np.asarray(self.horizons, float))
        object.__setattr__(self, "hit_prob", np.asarray(self.hit_prob, float))
        object.__setattr__(self, "ci_low", np.asarray(self.ci_low, float))
        object.__setattr__(self, "ci_high", np.asarray(self.ci_high, float))
        if np.any(self.hit_prob < 0) or np.any(self.hit_prob > 1):
            raise ValueError("hit probabilities must lie in [0, 1]")
        if np.any(np.diff(self.hit_prob) < -1e-12):
            raise ValueError("hit probabilities must be nondecreasing in T")


def wilson_interval(successes: np.ndarray, n: int, z: float = None):
    """Wilson score interval for binomial proportions (95% by default)."""
    if z is None:
        z = float(norm.ppf(0.975))
    p = successes / n
    denom = 1.0 + z ** 2 / n
    center = (p + z ** 2 / (2 * n)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / n + z ** 2 / (4 * n ** 2))
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


def hitting_time_cdf(model: ModelSpec, drift_f: DriftField, x, epsilon: float,
                     horizons, n_mc: int, seed: int, dt: float = 1e-2) -> HittingReport:
    """Empirical CDF of the first entry into the epsilon-ball around 0.

    Detection is on the simulation grid (first sampled state inside the
    ball), which underestimates continuum hitting; halving dt must move the
    probabilities only within the confidence bands.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    horizons = np.sort(np.asarray(horizons, float))
    n_steps = int(round(horizons[-1] / dt))
    t_grid = np.arange(n_steps + 1) * dt
    states, _ = simulate_ensemble(model, drift_f, x, t_grid, seed,
                                  n_paths=n_mc, tags=("hitting",), keep_dw=False)
    inside = np.linalg.norm(states, axis=-1) < epsilon
    first = np.where(np.any(inside, axis=1), np.argmax(inside, axis=1), n_steps + 1)
    hit_idx = np.round(horizons / dt).astype(int)
    counts = np.array([np.sum(first < k) for k in hit_idx], dtype=float)
    # a horizon of 0 counts the t = 0 sample itself
    counts[hit_idx == 0] = np.sum(first == 0)
    prob = counts / n_mc
    lo, hi = wilson_interval(counts, n_mc)
    return HittingReport(epsilon=float(epsilon), horizons=horizons, hit_prob=prob,
                         ci_low=lo, ci_high=hi, n_mc=n_mc, seed=seed)


def invariant_measure_estimate(model: ModelSpec, drift_f: DriftField,
                               probe_fns: Sequence[Callable],
                               burn_in: Optional[float] = None,
                               horizon: Optional[float] = None,
                               n_paths: int = 400, seed: int = 0,
                               dt: float = 1e-2, x0=None, x1=None) -> dict:
    """Time average of one long path versus large-time ensemble averages.

    For each bounded probe phi the two estimates of int phi dmu must agree
    within 3 combined standard errors, and the large-time ensemble averages
    from two starting points must agree as well (mixing).  Standard errors of
    the time average use batch means to absorb serial correlation.
    """
    if burn_in is None:
        burn_in = 10.0 / model.k_diss
    if horizon is None:
        horizon = 200.0 / model.k_diss
    if horizon <= 2 * burn_in:
        raise ValueError("horizon must exceed twice the burn-in")
    n = model.n_modes
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, float)
    x1 = np.ones(n) if x1 is None else np.asarray(x1, float)

    n_steps = int(round(horizon / dt))
    t_grid = np.arange(n_steps + 1) * dt
    long_path, _ = simulate_ensemble(model, drift_f, x0, t_grid, seed,
                                     n_paths=1, tags=("inv-long",), keep_dw=False)
    k0 = int(round(burn_in / dt))
    tail = long_path[0, k0:, :]

    t_big = burn_in + 0.5 * (horizon - burn_in)
    n_big = int(round(t_big / dt))
    t_grid_e = np.arange(n_big + 1) * dt
    ens0, _ = simulate_ensemble(model, drift_f, x0, t_grid_e, seed,
                                n_paths=n_paths, tags=("inv-ens", 0), keep_dw=False)
    ens1, _ = simulate_ensemble(model, drift_f, x1, t_grid_e, seed,
                                n_paths=n_paths, tags=("inv-ens", 1), keep_dw=False)
    end0, end1 = ens0[:, -1, :], ens1[:, -1, :]

    n_batches = 20
    rows = []
    all_ok, mixing_ok = True, True
    for j, phi in enumerate(probe_fns):
        series = np.asarray(phi(tail), float)
        time_avg = float(series.mean())
        batches = np.array_split(series, n_batches)
        bmeans = np.array([b.mean() for b in batches])
        time_se = float(bmeans.std(ddof=1) / np.sqrt(n_batches))
        e0 = np.asarray(phi(end0), float)
        e1 = np.asarray(phi(end1), float)
        ens_avg = float(e0.mean())
        ens_se = float(e0.std(ddof=1) / np.sqrt(n_paths))
        gap = abs(time_avg - ens_avg)
        band = 3.0 * np.hypot(time_se, ens_se)
        agree = bool(gap <= band or gap <= 1e-12)
        mix_gap = abs(e0.mean() - e1.mean())
        mix_band = 3.0 * np.hypot(ens_se, float(e1.std(ddof=1) / np.sqrt(n_paths)))
        mixed = bool(mix_gap <= mix_band or mix_gap <= 1e-12)
        all_ok &= agree
        mixing_ok &= mixed
        rows.append({"probe": j, "time_avg": time_avg, "time_se": time_se,
                     "ens_avg": ens_avg, "ens_se": ens_se, "agree": agree,
                     "mix_gap": mix_gap, "mixed": mixed})
    out = {
        "probes": rows,
        "agree": bool(all_ok),
        "mixing": bool(mixing_ok),
        "passed": bool(all_ok and mixing_ok),
        "burn_in": float(burn_in),
        "horizon": float(horizon),
        "seed": seed,
    }
    if not all_ok:
        out["suggestion"] = "double burn_in and horizon; time/ensemble averages disagree"
    return out
