"""Independent oracles used by the verification suite.

These deliberately use different discretization families from the grid
solver: a dense upwind finite-difference solve of the stationary elliptic
equation in one dimension, Gauss-Hermite quadrature against the stationary
Gaussian law, and direct Monte Carlo time-quadrature of the discounted
functional along exact Ornstein-Uhlenbeck paths.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .forward import simulate_ensemble
from .model import ControlSpec, DriftField, DriverSpec, ModelSpec, zero_drift
from .rng import generator


def fd_solve_1d(model: ModelSpec, drift_f: DriftField, driver, alpha: float,
                box, n_nodes: int = 401, tol: float = 1e-10, max_iter: int = 200):
    """Upwind finite-difference solve of the 1-D stationary equation

        alpha v - 1/2 g^2 v'' - (a x + F(x)) v' - psi(x, v' g) = 0.

    `driver` may be a ControlSpec (solved by policy iteration: the control
    part of psi contributes an upwinded convection g r(u) and a source
    L(x, u)) or a DriverSpec (solved by Picard iteration on the source).
    Boundary nodes use the first-order upwind equation without diffusion;
    the interior drift points inward so the error stays local.

    Returns (x nodes, v values).
    """
    if model.n_modes != 1:
        raise ValueError("the dense oracle is one-dimensional")
    lo, hi = float(box[0]), float(box[1])
    x = np.linspace(lo, hi, n_nodes)
    dx = x[1] - x[0]
    gsq = float(model.g[0, 0] ** 2)
    g = float(model.g[0, 0])
    b_base = model.a[0] * x + drift_f(x[:, None])[:, 0]

    is_control = isinstance(driver, ControlSpec)
    if is_control:
        rvals = np.array([float(np.atleast_1d(driver.r(u))[0]) for u in driver.controls])
        lvals = np.stack([np.asarray(driver.cost(x[:, None], u), float)
                          for u in driver.controls], axis=-1)   # (n_nodes, n_u)

    def assemble_and_solve(b: np.ndarray, source: np.ndarray) -> np.ndarray:
        # hybrid convection stencil: central where the cell Peclet number
        # allows (second order), full upwind otherwise (keeps the M-matrix
        # property when convection dominates)
        peclet_ok = np.abs(b) * dx <= gsq
        bp = np.where(peclet_ok, 0.5 * b, np.maximum(b, 0.0))
        bm = np.where(peclet_ok, -0.5 * b, np.maximum(-b, 0.0))
        diag = alpha + (bp + bm) / dx + gsq / dx ** 2
        upper = -bp / dx - 0.5 * gsq / dx ** 2
        lower = -bm / dx - 0.5 * gsq / dx ** 2
        # boundary rows: first-order upwind convection only
        b0p, b0m = max(b[0], 0.0), max(-b[0], 0.0)
        bNp, bNm = max(b[-1], 0.0), max(-b[-1], 0.0)
        diag[0] = alpha + (b0p + b0m) / dx
        upper[0] = -b0p / dx
        diag[-1] = alpha + (bNp + bNm) / dx
        lower[-1] = -bNm / dx
        bp, bm = np.maximum(b, 0.0), np.maximum(-b, 0.0)
        if bm[0] > 0 or bp[-1] > 0:
            raise ValueError("drift points outward at the oracle boundary; widen the box")
        ab = np.zeros((3, n_nodes))
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        return solve_banded((1, 1), ab, source)

    v = np.zeros(n_nodes)
    for _ in range(max_iter):
        vp = np.gradient(v, dx)
        if is_control:
            z = vp * g
            total = lvals + z[:, None] * (g * rvals)[None, :]
            pol = np.argmin(total, axis=1)
            b = b_base + g * rvals[pol]
            source = lvals[np.arange(n_nodes), pol]
        else:
            b = b_base
            source = np.asarray(driver.psi(x[:, None], (vp * g)[:, None]), float)
        v_new = assemble_and_solve(b, source)
        change = float(np.max(np.abs(v_new - v)))
        v = v_new
        if change < tol:
            break
    else:
        raise RuntimeError("finite-difference oracle did not converge")
    return x, v


def fd_vanishing_discount_1d(model: ModelSpec, drift_f: DriftField, driver,
                             alpha_schedule, box, n_nodes: int = 401):
    """Ergodic constant from the dense oracle along the same alpha ladder."""
    x = None
    lam_trace = []
    v = None
    for alpha in alpha_schedule:
        x, v = fd_solve_1d(model, drift_f, driver, alpha, box, n_nodes)
        i0 = int(np.argmin(np.abs(x)))
        lam_trace.append(alpha * v[i0])
    i0 = int(np.argmin(np.abs(x)))
    return {
        "lambda": lam_trace[-1],
        "lambda_trace": np.asarray(lam_trace),
        "x": x,
        "v_bar": v - v[i0],
    }


def gauss_hermite_nodes(model: ModelSpec, n_pts: int = 41):
    """Nodes/weights integrating against the stationary OU Gaussian."""
    h_nodes, h_w = np.polynomial.hermite_e.hermegauss(n_pts)
    h_w = h_w / np.sqrt(2 * np.pi)
    n = model.n_modes
    chol = np.linalg.cholesky(model.stationary_cov())
    grids = np.meshgrid(*([h_nodes] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1) @ chol.T
    ws = np.ones(pts.shape[0])
    for g in np.meshgrid(*([h_w] * n), indexing="ij"):
        ws = ws * g.ravel()
    return pts, ws


def stationary_average(model: ModelSpec, fn: Callable[[np.ndarray], np.ndarray],
                       n_pts: int = 41) -> float:
    """E[fn(X)] under the stationary OU Gaussian, by Gauss-Hermite quadrature."""
    pts, ws = gauss_hermite_nodes(model, n_pts)
    return float(np.sum(ws * np.asarray(fn(pts), float)))


def ou_discounted_value_mc(model: ModelSpec, psi_x: Callable[[np.ndarray], np.ndarray],
                           x, alpha: float, T: float = 60.0, dt: float = 0.02,
                           n_paths: int = 4000, seed: int = 0):
    """Monte Carlo quadrature of v(x) = int_0^inf e^{-alpha t} E[psi(U^x_t)] dt
    for a z-free driver psi over the zero-drift (OU) dynamics.

    The time integral is truncated at T with tail e^{-alpha T} psi_bar / alpha
    (psi_bar the stationary average); the OU step is exact in law for any dt.
    Returns (estimate, standard error).
    """
    n_steps = int(round(T / dt))
    t_grid = np.arange(n_steps + 1) * dt
    states, _ = simulate_ensemble(model, zero_drift(model.n_modes), x, t_grid,
                                  seed, n_paths=n_paths, tags=("ou-oracle",),
                                  keep_dw=False)
    vals = np.asarray(psi_x(states.reshape(-1, model.n_modes)), float)
    vals = vals.reshape(n_paths, n_steps + 1) * np.exp(-alpha * t_grid)
    per_path = np.trapezoid(vals, dx=dt, axis=1)
    tail = np.exp(-alpha * T) / alpha * stationary_average(model, psi_x)
    est = float(per_path.mean() + tail)
    se = float(per_path.std(ddof=1) / np.sqrt(n_paths))
    return est, se
