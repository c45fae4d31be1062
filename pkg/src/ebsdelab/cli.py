"""Command-line entry point.

Subcommands run one module each against a named scenario from a YAML config
(the shipped file by default) and write CSV payloads plus a JSON summary
embedding the resolved configuration and seed.  `full-audit` runs the whole
acceptance suite.  Exit codes: 0 pass, 1 audit failure, 2 configuration
error.  Identical config and seed give byte-identical CSVs at any worker
count.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import control as ctl
from . import coupling as cpl
from . import recurrence as rec
from .audit import AuditContext, run_all
from .bsde import solve_discounted
from .config import (ConfigError, Scenario, apply_overrides, build_control,
                     build_driver, build_model, default_config_path, load_config)
from .ergodic import ebsde_residual, hjb_mild_residual, vanishing_discount
from .forward import simulate_ensemble_chunked
from .reports import ensure_dir, report_name, write_csv, write_json


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebsdelab",
                                description="numerical laboratory for ergodic "
                                            "BSDEs on a truncated heat equation")
    p.add_argument("command",
                   choices=["simulate", "solve-alpha", "ergodic", "coupling",
                            "recurrence", "control", "hjb-check", "full-audit"])
    p.add_argument("--config", default=None, help="scenario YAML (shipped default)")
    p.add_argument("--scenario", default=None, help="scenario id (default: first)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, e.g. solver.dt=0.005")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override base seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.1, help="discount (solve-alpha)")
    p.add_argument("--quiet", action="store_true")
    return p


class _Run:
    """Resolved scenario plus output bookkeeping (partial outputs are removed
    if the command aborts)."""

    def __init__(self, args):
        self.args = args
        path = args.config or default_config_path()
        scenarios = load_config(path)
        sid = args.scenario or next(iter(scenarios))
        if sid not in scenarios:
            raise ConfigError(f"config.scenarios: no scenario with id {sid!r}")
        scn = apply_overrides(scenarios[sid], args.set)
        if args.seed is not None:
            scn = Scenario(**{**asdict(scn), "seed": args.seed})
        self.scn = scn
        self.model, self.drift = build_model(scn)
        self.control = build_control(scn, self.model)
        self.driver = build_driver(scn, self.model, self.control)
        stamp = time.strftime("%Y%m%dT%H%M%S")
        self.out_dir = args.out or os.path.join("reports", f"{scn.id}-{stamp}")
        ensure_dir(self.out_dir)
        self.files = []

    def path(self, kind: str, ext: str) -> str:
        p = os.path.join(self.out_dir,
                         report_name(self.scn.id, kind, self.scn.seed, ext))
        self.files.append(p)
        return p

    def summary(self, kind: str, payload: dict) -> str:
        return write_json(self.path(kind, "json"), {
            "scenario": asdict(self.scn),
            "files": [os.path.basename(f) for f in self.files if f.endswith(".csv")],
            **payload,
        })

    def cleanup(self):
        for f in self.files:
            if os.path.exists(f):
                os.remove(f)

    def say(self, msg: str):
        if not self.args.quiet:
            print(msg)


def _solver_kwargs(scn: Scenario) -> dict:
    out = {}
    if "grid" in scn.solver:
        out["grid"] = scn.solver["grid"]
    if "dt" in scn.solver:
        out["dt"] = float(scn.solver["dt"])
    if "n_mc" in scn.solver:
        out["n_mc"] = int(scn.solver["n_mc"])
    return out


def _cmd_simulate(run: _Run) -> int:
    cfg = run.scn.simulate
    dt = float(cfg.get("dt", 0.01))
    horizon = float(cfg.get("horizon", 5.0))
    n_paths = int(cfg.get("n_paths", 8))
    t_grid = np.arange(int(round(horizon / dt)) + 1) * dt
    states = simulate_ensemble_chunked(run.model, run.drift,
                                       np.zeros(run.model.n_modes), t_grid,
                                       run.scn.seed, n_paths,
                                       workers=run.args.workers)
    header = ["path", "t"] + [f"x_{k+1}" for k in range(run.model.n_modes)]
    rows = [(p, t, *states[p, i]) for p in range(n_paths)
            for i, t in enumerate(t_grid)]
    write_csv(run.path("trajectories", "csv"), header, rows)
    run.summary("simulate", {"n_paths": n_paths, "dt": dt, "horizon": horizon})
    run.say(f"wrote {run.out_dir}")
    return 0


def _cmd_solve_alpha(run: _Run) -> int:
    vf = solve_discounted(run.model, run.drift, run.driver, run.args.alpha,
                          seed=run.scn.seed, **_solver_kwargs(run.scn))
    if run.model.n_modes <= 2:
        with open(run.path("value", "csv"), "w") as fh:
            fh.write(vf.to_csv())
    with open(run.path("value", "bin"), "wb") as fh:
        fh.write(vf.to_bytes())
    run.summary("solve-alpha", {"alpha": run.args.alpha, "info": vf.solver_info})
    run.say(f"wrote {run.out_dir}")
    return 0


def _cmd_ergodic(run: _Run) -> int:
    sched = run.scn.ergodic.get("alpha_schedule", (0.5, 0.25, 0.1, 0.05, 0.02, 0.01))
    sol = vanishing_discount(run.model, run.drift, run.driver, sched,
                             seed=run.scn.seed, **_solver_kwargs(run.scn))
    gaps = np.concatenate([[float("nan")],
                           np.abs(np.diff(sol.lambda_trace))])
    write_csv(run.path("lambda-trace", "csv"), ["alpha", "lambda", "gap"],
              zip(sol.alpha_schedule, sol.lambda_trace, gaps))
    if run.model.n_modes <= 2:
        with open(run.path("v-bar", "csv"), "w") as fh:
            fh.write(sol.v_bar.to_csv())
    rep = dict(sol.convergence_report)
    rep.pop("rungs", None)
    run.summary("ergodic", {"lambda_bar": sol.lambda_bar, "report": rep})
    run.say(f"lambda_bar = {sol.lambda_bar!r}")
    return 0


def _cmd_coupling(run: _Run) -> int:
    ccfg = cpl.default_coupling_config(
        run.model, run.drift, seed=run.scn.seed,
        n_mc=int(run.scn.coupling.get("n_mc", 300)),
        k_max=int(run.scn.coupling.get("k_max", 40)))
    n = run.model.n_modes
    x = np.full(n, 0.8)
    y = np.full(n, -0.6)
    stats = cpl.iterated_coupling(run.model, run.drift, x, y, ccfg, run.scn.seed)
    write_csv(run.path("met-fraction", "csv"), ["k", "met_fraction"],
              enumerate(stats.met_fraction_by_k))
    counts = np.bincount(stats.meeting_times, minlength=ccfg.k_max + 1)
    write_csv(run.path("meeting-times", "csv"), ["k", "count"], enumerate(counts))
    times = np.arange(0.5, 4.01, 0.5)
    tv = cpl.tv_decay_estimate(run.model, run.drift, x, y, times,
                               n_mc=4000, seed=run.scn.seed)
    write_csv(run.path("tv-decay", "csv"), ["t", "tv_estimate", "se"],
              zip(tv["times"], tv["tv_estimate"], tv["se"]))
    run.summary("coupling", {
        "config": {"R": ccfg.ball_radius_sq, "period": ccfg.period, "eta": ccfg.eta},
        "return_time_moment": stats.return_time_moment,
        "girsanov_density_moment": stats.girsanov_density_moment,
        "fit": stats.extras,
        "tv_fit": {k: tv[k] for k in ("eta_hat", "c_hat", "r_squared", "fit_window")
                   if k in tv},
    })
    run.say(f"gamma_hat = {stats.extras.get('gamma_hat')!r}")
    return 0


def _cmd_recurrence(run: _Run) -> int:
    rcfg = run.scn.recurrence
    x0 = np.full(run.model.n_modes, 0.9)
    rep = rec.hitting_time_cdf(run.model, run.drift, x0,
                               float(rcfg.get("epsilon", 0.5)),
                               rcfg.get("horizons", [1, 2, 5, 10, 20]),
                               int(rcfg.get("n_mc", 2000)), run.scn.seed)
    write_csv(run.path("hitting-cdf", "csv"),
              ["T", "hit_prob", "ci_low", "ci_high"],
              zip(rep.horizons, rep.hit_prob, rep.ci_low, rep.ci_high))
    probes = [lambda s: np.tanh(s[..., 0]),
              lambda s: np.exp(-np.sum(s ** 2, axis=-1))]
    inv = rec.invariant_measure_estimate(run.model, run.drift, probes,
                                         seed=run.scn.seed)
    run.summary("recurrence", {
        "epsilon": rep.epsilon,
        "final_hit_prob": float(rep.hit_prob[-1]),
        "invariant_measure": inv,
    })
    run.say(f"hit_prob({float(rep.horizons[-1])!r}) = {float(rep.hit_prob[-1])!r}")
    return int(not (rep.hit_prob[-1] >= 0.99 and inv["passed"]))


def _cmd_control(run: _Run) -> int:
    if run.control is None:
        raise ConfigError(f"scenarios[{run.scn.id}].control: required by this command")
    sched = run.scn.ergodic.get("alpha_schedule", (0.5, 0.25, 0.1, 0.05, 0.02, 0.01))
    sol = vanishing_discount(run.model, run.drift, run.driver, sched,
                             seed=run.scn.seed, **_solver_kwargs(run.scn))
    policy = ctl.feedback_from_solution(sol, run.control, run.model)
    rcfg = run.scn.control_run
    audit = ctl.optimality_gap_audit(
        run.model, run.drift, run.control, sol, ctl.standard_alternates(policy),
        np.zeros(run.model.n_modes),
        burn_in=float(rcfg.get("burn_in", 2.0)),
        horizon=float(rcfg.get("horizon", 30.0)),
        n_mc=int(rcfg.get("n_mc", 200)), seed=run.scn.seed, allowance=0.01)
    write_csv(run.path("policy-costs", "csv"),
              ["policy_id", "J", "se", "gap_vs_lambda"],
              [(r["policy"], r["J"], r["se"], r["gap_vs_lambda"])
               for r in audit["policies"]])
    run.summary("control", {k: v for k, v in audit.items() if k != "policies"})
    run.say(f"lambda_bar = {sol.lambda_bar!r}, passed = {audit['passed']}")
    return int(not audit["passed"])


def _cmd_hjb_check(run: _Run) -> int:
    sched = run.scn.ergodic.get("alpha_schedule", (0.5, 0.25, 0.1, 0.05, 0.02, 0.01))
    sol = vanishing_discount(run.model, run.drift, run.driver, sched,
                             seed=run.scn.seed, **_solver_kwargs(run.scn))
    n = run.model.n_modes
    x0 = np.zeros(n)
    res = ebsde_residual(run.model, run.drift, run.driver, sol, x0, T=2.0,
                         n_mc=400, seed=run.scn.seed)
    probes = [x0, 0.3 * np.ones(n), -0.3 * np.ones(n)]
    mild = hjb_mild_residual(run.model, run.drift, run.driver, sol, T=2.0,
                             x_list=probes, n_mc=300, seed=run.scn.seed + 1)
    run.summary("hjb-check", {"integrated": res, "mild": mild,
                              "lambda_bar": sol.lambda_bar})
    run.say(f"integrated pass = {res['passed']}, mild pass = {mild['passed']}")
    return int(not (res["passed"] and mild["passed"]))


def _cmd_full_audit(run: _Run) -> int:
    ctx = AuditContext(run.args.config, workers=run.args.workers)
    out = run_all(ctx, quiet=run.args.quiet)
    run.summary("full-audit", out)
    run.say(f"all criteria passed = {out['passed']}")
    return int(not out["passed"])


_COMMANDS = {
    "simulate": _cmd_simulate,
    "solve-alpha": _cmd_solve_alpha,
    "ergodic": _cmd_ergodic,
    "coupling": _cmd_coupling,
    "recurrence": _cmd_recurrence,
    "control": _cmd_control,
    "hjb-check": _cmd_hjb_check,
    "full-audit": _cmd_full_audit,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        run = _Run(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](run)
    except ConfigError as exc:
        run.cleanup()
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        run.cleanup()
        raise


if __name__ == "__main__":
    sys.exit(main())
