"""Vanishing-discount limit and the audits built on top of it.

The ergodic triple (lambda_bar, v_bar, Z_bar) is obtained by driving the
discount alpha down a ladder: each rung solves the discounted problem warm-
started from the previous one, lambda_alpha = alpha * v^alpha(anchor) is
recorded, and the last rung supplies v_bar = v^alpha - v^alpha(anchor) and
Z_bar = grad v_bar . G.  The audits then check the defining identities of the
limit object: the integrated backward identity along simulated paths, its
mild (semigroup) counterpart, anchor-independence of lambda_bar, run-to-run
uniqueness of (v_bar, lambda_bar), and alpha-uniformity of the gradient and
increment bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bsde import ValueFunction, residual_allowance, solve_discounted
from .forward import simulate_ensemble
from .model import DriftField, DriverSpec, ModelSpec


@dataclass(frozen=True)
class ErgodicSolution:
    """Output of the vanishing-discount limit.

    v_bar reuses the grid representation with its alpha field set to 0; it is
    anchored, v_bar(anchor) = 0.  lambda_trace holds alpha * v^alpha(anchor)
    per ladder rung and convergence_report the successive sup-norm distances
    of the anchored iterates.
    """

    lambda_bar: float
    v_bar: ValueFunction
    alpha_schedule: np.ndarray
    lambda_trace: np.ndarray
    convergence_report: dict = field(compare=False)

    def __post_init__(self):
        sched = np.asarray(self.alpha_schedule, float)
        trace = np.asarray(self.lambda_trace, float)
        object.__setattr__(self, "alpha_schedule", sched)
        object.__setattr__(self, "lambda_trace", trace)
        if np.any(sched <= 0) or np.any(np.diff(sched) >= 0):
            raise ValueError("alpha_schedule must be positive and strictly decreasing")
        if trace.shape != sched.shape:
            raise ValueError("one lambda per ladder rung expected")

    @property
    def rung_gap(self) -> float:
        """|lambda at the last rung - lambda at the previous rung|."""
        if len(self.lambda_trace) < 2:
            return float("nan")
        return float(abs(self.lambda_trace[-1] - self.lambda_trace[-2]))

    def z_bar(self, model: ModelSpec, x: np.ndarray) -> np.ndarray:
        """Z_bar(x) = grad v_bar(x) . G."""
        return self.v_bar.gradient(x) @ model.g


DEFAULT_ALPHA_SCHEDULE = (0.5, 0.25, 0.1, 0.05, 0.02, 0.01)


def vanishing_discount(model: ModelSpec, drift_f: DriftField, driver: DriverSpec,
                       alpha_schedule=DEFAULT_ALPHA_SCHEDULE, anchor=None,
                       cauchy_tol: float = 0.5, keep_rungs: bool = False,
                       **solver_kwargs) -> ErgodicSolution:
    """Run the alpha ladder and return the ergodic triple.

    Each rung is warm-started from the previous anchored iterate.  The
    lambda trace must look convergent: a final rung gap exceeding cauchy_tol
    times the largest gap (plus an absolute floor) raises, since the limit
    exists and divergence means a solver or grid defect.  A merely
    non-monotone gap sequence is recorded as an advisory flag.
    """
    sched = np.asarray(alpha_schedule, float)
    lam_trace = []
    distances = []
    vf = None
    prev_anchored = None
    warm = None
    rungs = []
    for alpha in sched:
        vf = solve_discounted(model, drift_f, driver, float(alpha),
                              warm_start=warm, anchor=anchor, **solver_kwargs)
        anchor_idx = vf.solver_info["anchor_index"]
        flat = vf.values.ravel()
        lam_trace.append(float(alpha) * float(flat[anchor_idx]))
        anchored = flat - flat[anchor_idx]
        if prev_anchored is not None:
            distances.append(float(np.max(np.abs(anchored - prev_anchored))))
        prev_anchored = anchored
        warm = anchored
        if keep_rungs:
            rungs.append(vf)
    lam_trace = np.asarray(lam_trace)
    gaps = np.abs(np.diff(lam_trace))
    monotone = bool(np.all(np.diff(gaps) <= 1e-12)) if len(gaps) > 1 else True
    if len(gaps) > 1 and gaps[-1] > cauchy_tol * np.max(gaps) + 1e-4:
        raise RuntimeError(
            f"lambda trace is not settling (final gap {gaps[-1]:.3e} vs "
            f"max gap {np.max(gaps):.3e}); solver or grid defect")
    v_bar = ValueFunction(alpha=0.0, lows=vf.lows, highs=vf.highs,
                          values=prev_anchored.reshape(vf.shape),
                          solver_info=vf.solver_info)
    report = {
        "v_distances": np.asarray(distances),
        "lambda_gaps": gaps,
        "gaps_decreasing": monotone,
        "rung_gap": float(gaps[-1]) if len(gaps) else float("nan"),
        "bound_l": driver.l,
        "lambda_within_l": bool(np.all(np.abs(lam_trace) <= driver.l + 1e-9)),
    }
    if keep_rungs:
        report["rungs"] = rungs
    return ErgodicSolution(lambda_bar=float(lam_trace[-1]), v_bar=v_bar,
                           alpha_schedule=sched, lambda_trace=lam_trace,
                           convergence_report=report)


def ebsde_residual(model: ModelSpec, drift_f: DriftField, driver: DriverSpec,
                   sol: ErgodicSolution, x0, T: float, n_mc: int, seed: int,
                   dt: float = 1e-2, allowance: Optional[float] = None,
                   lambda_override: Optional[float] = None) -> dict:
    """Integrated residual of the ergodic backward identity along paths.

    m = E[v_bar(X_T)] - v_bar(x0) + E[int_0^T (psi(X_s, Z_bar(X_s)) - lambda_bar) ds]
    vanishes for the true solution; pass iff |m| <= 3 SE + allowance.
    lambda_override substitutes a perturbed constant (negative-control runs).
    """
    lam = sol.lambda_bar if lambda_override is None else float(lambda_override)
    n_steps = int(round(T / dt))
    t_grid = np.arange(n_steps + 1) * dt
    states, _ = simulate_ensemble(model, drift_f, x0, t_grid, seed,
                                  n_paths=n_mc, tags=("ebsde-residual",), keep_dw=False)
    flat = states.reshape(-1, model.n_modes)
    z = sol.v_bar.gradient(flat) @ model.g
    integrand = (np.asarray(driver.psi(flat, z), float) - lam).reshape(n_mc, n_steps + 1)
    integral = np.trapezoid(integrand, dx=dt, axis=1)
    v0 = float(sol.v_bar(np.asarray(x0, float)[None])[0])
    per_path = sol.v_bar(states[:, -1, :]) - v0 + integral
    m = float(per_path.mean())
    se = float(per_path.std(ddof=1) / np.sqrt(n_mc))
    if allowance is None:
        allowance = residual_allowance(sol.v_bar, driver, T, dt)
    return {
        "m": m,
        "se": se,
        "allowance": float(allowance),
        "passed": bool(abs(m) <= 3 * se + allowance),
        "T": T,
        "n_mc": n_mc,
        "seed": seed,
    }


def hjb_mild_residual(model: ModelSpec, drift_f: DriftField, driver: DriverSpec,
                      sol: ErgodicSolution, T: float, x_list, n_mc: int,
                      seed: int = 0, dt: float = 1e-2,
                      allowance: Optional[float] = None,
                      lambda_override: Optional[float] = None) -> dict:
    """Semigroup-form residual at probe points.

    r(x) = P_T[v_bar](x) + int_0^T (P_s[psi(., Z_bar)](x) - lambda_bar) ds - v_bar(x),
    with both semigroup applications estimated by Monte Carlo over the same
    path bundle.  Tests the same identity as ebsde_residual in mild form, so
    the two must agree in pass/fail.
    """
    lam = sol.lambda_bar if lambda_override is None else float(lambda_override)
    n_steps = int(round(T / dt))
    t_grid = np.arange(n_steps + 1) * dt
    x_list = [np.asarray(x, float) for x in x_list]
    rows = []
    for j, x in enumerate(x_list):
        states, _ = simulate_ensemble(model, drift_f, x, t_grid, seed,
                                      n_paths=n_mc, tags=("hjb-mild", j), keep_dw=False)
        flat = states.reshape(-1, model.n_modes)
        z = sol.v_bar.gradient(flat) @ model.g
        integrand = (np.asarray(driver.psi(flat, z), float) - lam).reshape(n_mc, n_steps + 1)
        per_path = sol.v_bar(states[:, -1, :]) + np.trapezoid(integrand, dx=dt, axis=1)
        r = float(per_path.mean()) - float(sol.v_bar(x[None])[0])
        se = float(per_path.std(ddof=1) / np.sqrt(n_mc))
        rows.append({"x": x.tolist(), "r": r, "se": se})
    if allowance is None:
        allowance = residual_allowance(sol.v_bar, driver, T, dt)
    passed = all(abs(row["r"]) <= 3 * row["se"] + allowance for row in rows)
    return {
        "points": rows,
        "allowance": float(allowance),
        "passed": bool(passed),
        "T": T,
        "n_mc": n_mc,
        "seed": seed,
    }


def lambda_uniqueness_audit(model: ModelSpec, drift_f: DriftField, driver: DriverSpec,
                            x_list, alpha_schedule=DEFAULT_ALPHA_SCHEDULE,
                            tol: float = 2e-2, **solver_kwargs) -> dict:
    """Recompute lambda_bar with the ladder re-anchored at each probe point.

    lambda_alpha = alpha v^alpha(x) differs from the 0-anchored value by
    alpha (v^alpha(x) - v^alpha(0)) = O(alpha), so all anchors must agree at
    the bottom of the ladder; pass iff the max pairwise gap <= tol.
    """
    lams = []
    for x in x_list:
        sol = vanishing_discount(model, drift_f, driver, alpha_schedule,
                                 anchor=np.asarray(x, float), **solver_kwargs)
        lams.append(sol.lambda_bar)
    lams = np.asarray(lams)
    gap = float(np.max(lams) - np.min(lams))
    return {
        "anchors": [np.asarray(x, float).tolist() for x in x_list],
        "lambdas": lams,
        "max_pairwise_gap": gap,
        "tol": tol,
        "passed": bool(gap <= tol),
    }


def markovian_uniqueness_audit(model: ModelSpec, drift_f: DriftField,
                               driver: DriverSpec, config_a: dict, config_b: dict,
                               lambda_tol: float = 2e-2,
                               v_tol: Optional[float] = None) -> dict:
    """Two independent ladder runs must produce the same (v_bar, lambda_bar).

    config_a/config_b are keyword dicts for vanishing_discount (schedules,
    grids, seeds...).  v_bar fields are compared on the common box; the
    default sup-norm tolerance combines both runs' cell sizes.
    """
    sol_a = vanishing_discount(model, drift_f, driver, **config_a)
    sol_b = vanishing_discount(model, drift_f, driver, **config_b)
    lows = np.maximum(sol_a.v_bar.lows, sol_b.v_bar.lows)
    highs = np.minimum(sol_a.v_bar.highs, sol_b.v_bar.highs)
    axes = [np.linspace(lo, hi, 41) for lo, hi in zip(lows, highs)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    gap_v = float(np.max(np.abs(sol_a.v_bar(pts) - sol_b.v_bar(pts))))
    gap_lam = float(abs(sol_a.lambda_bar - sol_b.lambda_bar))
    if v_tol is None:
        scale = max(1.0, driver.l)
        cells = float(np.max(sol_a.v_bar.cells) ** 2 + np.max(sol_b.v_bar.cells) ** 2)
        dts = sol_a.v_bar.solver_info["dt"] + sol_b.v_bar.solver_info["dt"]
        v_tol = 10.0 * scale * (cells + dts)
    passed = gap_lam <= lambda_tol and gap_v <= v_tol
    return {
        "lambda_a": sol_a.lambda_bar,
        "lambda_b": sol_b.lambda_bar,
        "lambda_gap": gap_lam,
        "v_sup_gap": gap_v,
        "lambda_tol": lambda_tol,
        "v_tol": float(v_tol),
        "passed": bool(passed),
    }


def uniform_bounds_audit(solutions: Sequence[ValueFunction],
                         ratio_tol: float = 2.0) -> dict:
    """alpha-uniformity of the quadratic-growth constants across a ladder.

    For each discounted solution computes c_grad = max |grad v|/(1+|x|^2)
    and c_inc = max |v(x)-v(x')|/(1+|x|^2+|x'|^2) over grid nodes (increments
    against the node nearest the origin and against the box corners); pass
    iff max c / min c <= ratio_tol for both families and all values finite.
    """
    c_grads, c_incs = [], []
    for vf in solutions:
        nodes = vf.node_matrix()
        nrm2 = np.sum(nodes ** 2, axis=1)
        grad = np.stack([g.ravel() for g in vf.nodal_gradient()], axis=-1)
        c_grads.append(float(np.max(np.linalg.norm(grad, axis=1) / (1.0 + nrm2))))
        vals = vf.values.ravel()
        refs = [int(np.argmin(nrm2)), 0, len(vals) - 1]
        c = 0.0
        for r in refs:
            quot = np.abs(vals - vals[r]) / (1.0 + nrm2 + nrm2[r])
            c = max(c, float(np.max(quot)))
        c_incs.append(c)
    c_grads, c_incs = np.asarray(c_grads), np.asarray(c_incs)
    finite = bool(np.all(np.isfinite(c_grads)) and np.all(np.isfinite(c_incs)))

    def ratio(c):
        lo = float(np.min(c))
        return 1.0 if lo <= 1e-12 and float(np.max(c)) <= 1e-12 else float(np.max(c) / max(lo, 1e-300))

    r_grad, r_inc = ratio(c_grads), ratio(c_incs)
    return {
        "c_grad": c_grads,
        "c_increment": c_incs,
        "grad_ratio": r_grad,
        "increment_ratio": r_inc,
        "ratio_tol": ratio_tol,
        "passed": bool(finite and r_grad <= ratio_tol and r_inc <= ratio_tol),
    }
