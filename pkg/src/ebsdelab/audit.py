"""Acceptance audits.

Each criterion is a callable returning {"name", "passed", "detail"}; the CLI
full-audit command and the acceptance test suite share these.  Expensive
artifacts (discount ladders per scenario) are built once per AuditContext
and reused across criteria.
"""

from __future__ import annotations

import numpy as np

from . import coupling as cpl
from . import control as ctl
from . import recurrence as rec
from .bsde import default_box, solve_discounted
from .config import (Scenario, build_control, build_driver, build_model,
                     default_config_path, load_config)
from .ergodic import (ErgodicSolution, ebsde_residual, hjb_mild_residual,
                      lambda_uniqueness_audit, markovian_uniqueness_audit,
                      uniform_bounds_audit, vanishing_discount)
from .forward import simulate_ensemble
from .model import DriverSpec, ModelSpec, build_heat_model, zero_drift
from .oracles import fd_solve_1d, fd_vanishing_discount_1d, ou_discounted_value_mc, stationary_average
from .reports import csv_payload


class AuditContext:
    """Shared scenario objects and cached ladder solutions."""

    def __init__(self, config_path: str = None, workers: int = 1):
        self.scenarios = load_config(config_path or default_config_path())
        self.workers = workers
        self._cache = {}

    def scenario(self, sid: str) -> Scenario:
        return self.scenarios[sid]

    def bundle(self, sid: str):
        """(model, drift, control, driver) of a scenario, cached."""
        key = ("bundle", sid)
        if key not in self._cache:
            scn = self.scenario(sid)
            model, drift = build_model(scn)
            control = build_control(scn, model)
            driver = build_driver(scn, model, control)
            self._cache[key] = (model, drift, control, driver)
        return self._cache[key]

    def ladder(self, sid: str) -> ErgodicSolution:
        """Vanishing-discount solution for a scenario, cached."""
        key = ("ladder", sid)
        if key not in self._cache:
            scn = self.scenario(sid)
            model, drift, _, driver = self.bundle(sid)
            self._cache[key] = vanishing_discount(
                model, drift, driver,
                alpha_schedule=scn.ergodic.get("alpha_schedule",
                                               (0.5, 0.25, 0.1, 0.05, 0.02, 0.01)),
                keep_rungs=True, seed=scn.seed, **_solver_kwargs(scn))
        return self._cache[key]


def _solver_kwargs(scn: Scenario) -> dict:
    out = {}
    if "grid" in scn.solver:
        out["grid"] = scn.solver["grid"]
    if "dt" in scn.solver:
        out["dt"] = float(scn.solver["dt"])
    if "n_mc" in scn.solver:
        out["n_mc"] = int(scn.solver["n_mc"])
    return out


def _result(name: str, passed: bool, detail: str, extra: dict = None) -> dict:
    out = {"name": name, "passed": bool(passed), "detail": detail}
    if extra:
        out["extra"] = extra
    return out


# --------------------------------------------------------------------------- 1


def criterion_constant_driver(ctx: AuditContext) -> dict:
    sol = ctx.ladder("heat-n2-constant")
    lam_err = float(np.max(np.abs(sol.lambda_trace - 1.0)))
    v_err = float(np.max(np.abs(sol.v_bar.values)))
    passed = lam_err <= 1e-8 and abs(sol.lambda_bar - 1.0) <= 1e-8 and v_err <= 1e-8
    return _result("constant-driver exactness", passed,
                   f"max |lambda_alpha - 1| = {lam_err:.2e}, max |v_bar| = {v_err:.2e}")


# --------------------------------------------------------------------------- 2


def criterion_zfree_oracle(ctx: AuditContext) -> dict:
    model, _, _, _ = ctx.bundle("heat-n2")
    drift = zero_drift(model.n_modes)
    driver = DriverSpec(psi=lambda x, z: np.tanh(np.asarray(x, float)[..., 0]), l=1.0)
    alpha = 0.1
    vf = solve_discounted(model, drift, driver, alpha, grid=(41, 41),
                          dt=0.01, n_mc=256, seed=2)
    std = model.stationary_std()
    probes = [np.array([sx * 1.5 * std[0], sy * 1.5 * std[1]])
              for sx in (-1, 0, 1) for sy in (-1, 0, 1)]
    allow = 2.0 * (vf.solver_info["dt"] + float(np.mean(vf.cells ** 2)))
    worst = 0.0
    ok = True
    for j, p in enumerate(probes):
        est, se = ou_discounted_value_mc(model, lambda s: np.tanh(s[..., 0]), p,
                                         alpha, T=60.0, dt=0.05, n_paths=3000,
                                         seed=100 + j)
        gap = abs(float(vf(p[None])[0]) - est)
        tol = max(2.0 * se, allow)
        worst = max(worst, gap - tol)
        ok &= gap <= tol
    sol = vanishing_discount(model, drift, driver, grid=(41, 41), dt=0.01,
                             n_mc=256, seed=2)
    lam_oracle = stationary_average(model, lambda s: np.tanh(s[..., 0]))
    lam_gap = abs(sol.lambda_bar - lam_oracle)
    ok &= lam_gap <= 1e-2
    return _result("z-free oracle", ok,
                   f"worst probe excess = {worst:+.3e}, lambda gap = {lam_gap:.2e}")


# --------------------------------------------------------------------------- 3


def criterion_fd_oracle(ctx: AuditContext) -> dict:
    scn = ctx.scenario("heat-n1")
    model, drift, control, driver = ctx.bundle("heat-n1")
    lo, hi = default_box(model)
    xo, _ = fd_solve_1d(model, drift, control, 0.1, (lo[0], hi[0]))
    sup_gaps = {}
    ok = True
    for alpha in (0.1, 0.02):
        vf = solve_discounted(model, drift, driver, alpha, seed=scn.seed,
                              **_solver_kwargs(scn))
        _, vo = fd_solve_1d(model, drift, control, alpha, (lo[0], hi[0]))
        gap = float(np.max(np.abs(vf(xo[:, None]) - vo)))
        sup_gaps[alpha] = gap
        ok &= gap <= 1e-2
    sol = ctx.ladder("heat-n1")
    orc = fd_vanishing_discount_1d(model, drift, control, sol.alpha_schedule,
                                   (lo[0], hi[0]))
    lam_gap = abs(sol.lambda_bar - orc["lambda"])
    ok &= lam_gap <= 1e-2
    return _result("1-D dense-oracle match", ok,
                   f"sup gaps {sup_gaps[0.1]:.2e} (a=0.1), {sup_gaps[0.02]:.2e} "
                   f"(a=0.02), lambda gap {lam_gap:.2e}")


# --------------------------------------------------------------------------- 4


def criterion_residuals(ctx: AuditContext) -> dict:
    model, drift, _, driver = ctx.bundle("heat-n2")
    sol = ctx.ladder("heat-n2")
    x0 = np.zeros(model.n_modes)
    res = ebsde_residual(model, drift, driver, sol, x0, T=2.0, n_mc=400, seed=21)
    probes = [x0, 0.3 * np.ones(model.n_modes), -0.3 * np.ones(model.n_modes)]
    mild = hjb_mild_residual(model, drift, driver, sol, T=2.0, x_list=probes,
                             n_mc=300, seed=22)
    neg_lam = ebsde_residual(model, drift, driver, sol, x0, T=2.0, n_mc=400,
                             seed=21, lambda_override=sol.lambda_bar + 0.1)
    bad_vals = sol.v_bar.values + 1.5 * np.square(sol.v_bar.node_matrix()[:, 0]).reshape(sol.v_bar.shape)
    bad = ErgodicSolution(lambda_bar=sol.lambda_bar,
                          v_bar=type(sol.v_bar)(alpha=0.0, lows=sol.v_bar.lows,
                                                highs=sol.v_bar.highs, values=bad_vals,
                                                solver_info=sol.v_bar.solver_info),
                          alpha_schedule=sol.alpha_schedule,
                          lambda_trace=sol.lambda_trace,
                          convergence_report=sol.convergence_report)
    neg_v = hjb_mild_residual(model, drift, driver, bad, T=2.0, x_list=probes,
                              n_mc=300, seed=22)
    ok = (res["passed"] and mild["passed"]
          and not neg_lam["passed"] and not neg_v["passed"])
    return _result("integrated and mild residuals", ok,
                   f"|m| = {abs(res['m']):.3e} (band {3*res['se']+res['allowance']:.3e}), "
                   f"mild pass = {mild['passed']}, negatives flagged = "
                   f"{not neg_lam['passed']}/{not neg_v['passed']}")


# --------------------------------------------------------------------------- 5


def criterion_ladder_stability(ctx: AuditContext) -> dict:
    sol = ctx.ladder("heat-n2")
    gaps = sol.convergence_report["lambda_gaps"]
    decreasing = bool(np.all(np.diff(gaps) <= 1e-12))
    final = float(gaps[-1])
    passed = decreasing and final <= 2e-2
    return _result("vanishing-discount stability", passed,
                   f"gaps {np.array2string(gaps, precision=2)} decreasing={decreasing}, "
                   f"final={final:.2e}")


# --------------------------------------------------------------------------- 6


def criterion_uniform_bounds(ctx: AuditContext) -> dict:
    sol = ctx.ladder("heat-n2")
    rep = uniform_bounds_audit(sol.convergence_report["rungs"])
    return _result("alpha-uniform growth constants", rep["passed"],
                   f"gradient ratio {rep['grad_ratio']:.2f}, "
                   f"increment ratio {rep['increment_ratio']:.2f} (tol 2)")


# --------------------------------------------------------------------------- 7


def criterion_uniqueness(ctx: AuditContext) -> dict:
    scn = ctx.scenario("heat-n1")
    model, drift, _, driver = ctx.bundle("heat-n1")
    sched = scn.ergodic["alpha_schedule"]
    anchors = [np.zeros(1), np.array([1.0]), np.array([-1.0])]
    lam_rep = lambda_uniqueness_audit(model, drift, driver, anchors, sched,
                                      seed=scn.seed, **_solver_kwargs(scn))
    cfg_a = dict(alpha_schedule=sched, grid=(61,), dt=0.005, n_mc=512, seed=0)
    cfg_b = dict(alpha_schedule=(0.4, 0.2, 0.08, 0.04, 0.015),
                 grid=(101,), dt=0.0025, n_mc=512, seed=123)
    markov = markovian_uniqueness_audit(model, drift, driver, cfg_a, cfg_b)
    passed = lam_rep["passed"] and markov["passed"]
    return _result("lambda and Markovian uniqueness", passed,
                   f"anchor gap {lam_rep['max_pairwise_gap']:.2e} (tol 2e-2), "
                   f"run gap lambda {markov['lambda_gap']:.2e}, "
                   f"v {markov['v_sup_gap']:.2e} (tol {markov['v_tol']:.2e})")


# --------------------------------------------------------------------------- 8


def criterion_coupling_suite(ctx: AuditContext) -> dict:
    notes = []
    ok = True

    # discrete-toy maximal coupling reproduces 1 - TV
    p = np.array([0.5, 0.3, 0.2])
    q = np.array([0.2, 0.3, 0.5])
    n_toy = 20000
    z1, z2 = cpl.maximal_coupling_discrete(p, q, n_toy, seed=7)
    agree = float(np.mean(z1 == z2))
    target = 1.0 - 0.5 * float(np.sum(np.abs(p - q)))
    se = np.sqrt(target * (1 - target) / n_toy)
    toy_ok = abs(agree - target) <= 3 * se
    ok &= toy_ok
    notes.append(f"toy |P(match)-(1-TV)| = {abs(agree-target):.4f} (3SE {3*se:.4f})")

    scn = ctx.scenario("heat-n2")
    model, drift, _, _ = ctx.bundle("heat-n2")
    ccfg = cpl.default_coupling_config(model, drift, seed=scn.seed,
                                       n_mc=int(scn.coupling.get("n_mc", 200)),
                                       k_max=int(scn.coupling.get("k_max", 40)))
    x, y = np.array([0.3, -0.2]), np.array([-0.25, 0.15])

    # marginal preservation of the coupled second leg at t = period
    ends = []
    met = 0
    n_rep = 200
    for s in range(n_rep):
        out = cpl.bridge_maximal_coupling(model, drift, x, y, ccfg, seed=1000 + s)
        ends.append(out["path2"][-1])
        met += out["met"]
    ends = np.asarray(ends)
    t_grid = np.linspace(0.0, ccfg.period, int(round(ccfg.period / ccfg.dt)) + 1)
    direct, _ = simulate_ensemble(model, drift, y, t_grid, seed=77,
                                  n_paths=4000, tags=("marginal",), keep_dw=False)
    dend = direct[:, -1, :]
    marg_ok = True
    for stat in (lambda s: s, lambda s: s ** 2):
        a, b = stat(ends), stat(dend)
        gap = np.abs(a.mean(axis=0) - b.mean(axis=0))
        band = 3.0 * np.hypot(a.std(axis=0, ddof=1) / np.sqrt(len(a)),
                              b.std(axis=0, ddof=1) / np.sqrt(len(b)))
        marg_ok &= bool(np.all(gap <= band))
    ok &= marg_ok
    notes.append(f"marginals ok = {marg_ok}")

    kappa4 = cpl.girsanov_density_moment(model, drift, x, y, ccfg, seed=5, n_mc=300)
    met_frac = met / n_rep
    met_ok = met_frac >= 1.0 / (4.0 * kappa4) - 3 * np.sqrt(met_frac * (1 - met_frac) / n_rep)
    ok &= met_ok
    notes.append(f"met {met_frac:.2f} >= 1/(4k4) = {1/(4*kappa4):.3f}")

    stats = cpl.iterated_coupling(model, drift, np.array([0.8, 0.5]),
                                  np.array([-0.6, 0.3]), ccfg, seed=2)
    it_ok = (stats.extras.get("gamma_hat", 0.0) > 0
             and stats.extras.get("r_squared", 0.0) >= 0.9)
    ok &= it_ok
    notes.append(f"gamma {stats.extras.get('gamma_hat', float('nan')):.2f}, "
                 f"R2 {stats.extras.get('r_squared', float('nan')):.3f}")

    ou = ModelSpec(n_modes=1, a=np.array([-1.0]), k_diss=1.0, g=np.eye(1))
    tv = cpl.tv_decay_estimate(ou, zero_drift(1), np.array([1.0]), np.array([-1.0]),
                               times=np.arange(0.5, 4.01, 0.5), n_mc=20000, seed=6)
    eta = tv.get("eta_hat", 0.0)
    ou_ok = abs(eta - 1.0) <= 0.2
    ok &= ou_ok
    notes.append(f"OU eta {eta:.3f} (target 1 +- 20%)")
    return _result("coupling suite", ok, "; ".join(notes))


# --------------------------------------------------------------------------- 9


def criterion_drift_invariance(ctx: AuditContext) -> dict:
    fa = lambda xi, eta: 0.5 * np.sin(eta)
    fb = lambda xi, eta: 0.5 * np.cos(eta)
    fa.sup = fb.sup = 0.5
    model, drift_a = build_heat_model(1, fa, lambda xi: np.ones_like(xi), 4)
    _, drift_b = build_heat_model(1, fb, lambda xi: np.ones_like(xi), 4)
    rep = cpl.drift_invariance_audit(model, drift_a, drift_b,
                                     np.array([0.6]), np.array([-0.6]),
                                     times=np.arange(0.05, 0.41, 0.05),
                                     n_mc=20000, seed=9)
    comparable = rep.get("comparable", False)
    return _result("drift-invariant decay constants", bool(comparable),
                   f"eta ratio {rep.get('eta_ratio', float('nan')):.2f}, "
                   f"c ratio {rep.get('c_ratio', float('nan')):.2f} (factor 3)")


# -------------------------------------------------------------------------- 10


def criterion_recurrence(ctx: AuditContext) -> dict:
    ok = True
    notes = []
    for sid, x0 in (("heat-n1", np.array([0.9])),
                    ("heat-n1-outward", np.array([0.9])),
                    ("ou-scalar", np.array([2.0]))):
        scn = ctx.scenario(sid)
        model, drift, _, _ = ctx.bundle(sid)
        rcfg = scn.recurrence
        rep = rec.hitting_time_cdf(model, drift, x0, float(rcfg["epsilon"]),
                                   rcfg["horizons"], int(rcfg["n_mc"]), scn.seed)
        final = float(rep.hit_prob[-1])
        ok &= final >= 0.99
        ok &= bool(np.all(np.diff(rep.hit_prob) >= -1e-12))
        notes.append(f"{sid}: {final:.3f}")
    scn = ctx.scenario("heat-n1")
    model, drift, _, _ = ctx.bundle("heat-n1")
    probs = []
    for eps in (0.3, 0.5, 0.7):
        rep = rec.hitting_time_cdf(model, drift, np.array([0.9]), eps,
                                   scn.recurrence["horizons"],
                                   int(scn.recurrence["n_mc"]), scn.seed)
        probs.append(rep.hit_prob)
    eps_mono = bool(np.all(np.diff(np.stack(probs), axis=0) >= -1e-12))
    ok &= eps_mono
    notes.append(f"epsilon-monotone = {eps_mono}")
    return _result("recurrence", ok, "; ".join(notes))


# -------------------------------------------------------------------------- 11


def criterion_control_optimality(ctx: AuditContext) -> dict:
    scn = ctx.scenario("heat-n1")
    model, drift, control, _ = ctx.bundle("heat-n1")
    sol = ctx.ladder("heat-n1")
    policy = ctl.feedback_from_solution(sol, control, model)
    run = scn.control_run
    audit = ctl.optimality_gap_audit(model, drift, control, sol,
                                     ctl.standard_alternates(policy),
                                     np.zeros(1),
                                     burn_in=float(run.get("burn_in", 2.0)),
                                     horizon=float(run.get("horizon", 30.0)),
                                     n_mc=int(run.get("n_mc", 300)),
                                     seed=scn.seed, allowance=0.01)
    cross = ctl.reweighted_cost_crosscheck(model, drift, control, policy,
                                           np.zeros(1), T=2.0, n_mc=2000,
                                           seed=scn.seed + 1)
    passed = audit["passed"] and cross["passed"]
    worst = min(r["gap_vs_lambda"] for r in audit["policies"][1:])
    return _result("control optimality", passed,
                   f"|J* - lambda| = {abs(audit['policies'][0]['gap_vs_lambda']):.3e}, "
                   f"worst alternate gap {worst:+.3e}, verification gap "
                   f"{audit['verification_gap']:.1e}, reweighting gap {cross['gap']:.3e} "
                   f"(band {cross['band']:.3e})")


# -------------------------------------------------------------------------- 12


def criterion_scheme_sanity(ctx: AuditContext) -> dict:
    scn = ctx.scenario("heat-n1")
    model, drift, control, driver = ctx.bundle("heat-n1")
    ok = True
    notes = []

    # dt-halving: hitting probabilities stay within joint confidence bands
    reps = [rec.hitting_time_cdf(model, drift, np.array([0.9]), 0.5,
                                 [1, 2, 5, 10], 2000, scn.seed, dt=dt)
            for dt in (0.01, 0.005)]
    overlap = bool(np.all((reps[0].ci_low <= reps[1].ci_high)
                          & (reps[1].ci_low <= reps[0].ci_high)))
    ok &= overlap
    notes.append(f"hitting CI overlap = {overlap}")

    # dt-halving: ergodic cost moves within 3 combined SE
    sol = ctx.ladder("heat-n1")
    policy = ctl.feedback_from_solution(sol, control, model)
    costs = [ctl.ergodic_cost(model, drift, control, policy, np.zeros(1),
                              2.0, 20.0, 200, scn.seed, dt=dt)
             for dt in (0.01, 0.005)]
    gap = abs(costs[0]["J"] - costs[1]["J"])
    band = 3.0 * float(np.hypot(costs[0]["se"], costs[1]["se"])) + 0.01
    cost_ok = gap <= band
    ok &= cost_ok
    notes.append(f"cost dt-gap {gap:.3e} (band {band:.3e})")

    # dt-halving: discounted value at the origin
    vals = [solve_discounted(model, drift, driver, 0.1, grid=(101,), dt=dt,
                             n_mc=512, seed=scn.seed) for dt in (0.01, 0.005)]
    v_gap = abs(float(vals[0](np.zeros((1, 1)))[0]) - float(vals[1](np.zeros((1, 1)))[0]))
    v_ok = v_gap <= 5e-3
    ok &= v_ok
    notes.append(f"v(0) dt-gap {v_gap:.2e}")

    # worker invariance: byte-identical ensemble CSV payload
    from .forward import simulate_ensemble_chunked
    t_grid = np.arange(0, 101) * 0.01
    payloads = []
    for workers in (1, 3):
        states = simulate_ensemble_chunked(model, drift, np.zeros(1), t_grid,
                                           scn.seed, n_paths=64, workers=workers)
        rows = [(p, t, *states[p, i]) for p in range(states.shape[0])
                for i, t in enumerate(t_grid)]
        payloads.append(csv_payload(["path", "t", "x_1"], rows))
    worker_ok = payloads[0] == payloads[1]
    ok &= worker_ok
    notes.append(f"worker-count byte-identical = {worker_ok}")
    return _result("scheme sanity", ok, "; ".join(notes))


ALL_CRITERIA = [
    criterion_constant_driver,
    criterion_zfree_oracle,
    criterion_fd_oracle,
    criterion_residuals,
    criterion_ladder_stability,
    criterion_uniform_bounds,
    criterion_uniqueness,
    criterion_coupling_suite,
    criterion_drift_invariance,
    criterion_recurrence,
    criterion_control_optimality,
    criterion_scheme_sanity,
]


def run_all(ctx: AuditContext = None, quiet: bool = False) -> dict:
    if ctx is None:
        ctx = AuditContext()
    results = []
    for i, crit in enumerate(ALL_CRITERIA, start=1):
        res = crit(ctx)
        res["index"] = i
        results.append(res)
        if not quiet:
            status = "PASS" if res["passed"] else "FAIL"
            print(f"[{status}] criterion {i:2d} — {res['name']}: {res['detail']}")
    return {"results": results, "passed": all(r["passed"] for r in results)}
