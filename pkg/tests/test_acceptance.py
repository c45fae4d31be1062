"""Acceptance gate.

Criteria 1-12 run the shared audit suite (one test per criterion, each
emitting a single pass/fail line).  Criterion 13 exercises the figure
renderer end to end: every CSV report kind produced by the command-line
tools must render to SVG through the Node CLI, the constant-driver
lambda trace must draw as a flat line, and the TV-decay figure must carry
its fitted-exponential overlay.

The audit context (scenario bundles and discount ladders) is built once per
session and shared, so the whole gate runs in a few minutes.
"""

import os
import re
import shutil
import subprocess

import numpy as np
import pytest

from ebsdelab import audit
from ebsdelab import control as ctl
from ebsdelab.cli import main as cli_main
from ebsdelab.reports import write_csv

from conftest import ACCEPTANCE_LINES

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FRONTEND = os.path.join(ROOT, "frontend")


@pytest.fixture(scope="session")
def ctx():
    return audit.AuditContext()


def _record(index, name, passed, detail):
    status = "PASS" if passed else "FAIL"
    line = f"[{status}] criterion {index:2d} — {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


@pytest.mark.parametrize(
    "index,criterion",
    [(i, c) for i, c in enumerate(audit.ALL_CRITERIA, start=1)],
    ids=[c.__name__.replace("criterion_", "") for c in audit.ALL_CRITERIA],
)
def test_criterion(ctx, index, criterion):
    res = criterion(ctx)
    line = _record(index, res["name"], res["passed"], res["detail"])
    assert res["passed"], line


# -- criterion 13: figure rendering ------------------------------------------


@pytest.fixture(scope="session")
def figure_cli():
    """Path to the built Node figure renderer; builds it if dist/ is stale."""
    cli = os.path.join(FRONTEND, "dist", "cli.js")
    node = shutil.which("node")
    if node is None:
        pytest.fail("node is required to render figures but is not installed")
    if not os.path.exists(cli):
        npm = shutil.which("npm")
        if npm is None:
            pytest.fail("figure renderer is not built and npm is unavailable")
        if not os.path.isdir(os.path.join(FRONTEND, "node_modules")):
            subprocess.run([npm, "install"], cwd=FRONTEND, check=True,
                           capture_output=True)
        subprocess.run([npm, "run", "build"], cwd=FRONTEND, check=True,
                       capture_output=True)
    return [node, cli]


@pytest.fixture(scope="session")
def report_csvs(ctx, tmp_path_factory):
    """One real CSV per figure kind, written by the report pipeline."""
    out = tmp_path_factory.mktemp("reports")
    d = str(out)
    csvs = {}

    code = cli_main(["simulate", "--scenario", "ou-scalar", "--quiet",
                     "--set", "simulate.horizon=1.0", "--out", d])
    assert code == 0
    csvs["trajectories"] = os.path.join(d, "ou-scalar-trajectories-seed3.csv")

    code = cli_main(["solve-alpha", "--scenario", "ou-scalar", "--quiet",
                     "--set", "solver.grid=41", "--set", "solver.n_mc=64",
                     "--alpha", "0.5", "--out", d])
    assert code == 0
    csvs["value"] = os.path.join(d, "ou-scalar-value-seed3.csv")

    code = cli_main(["ergodic", "--scenario", "heat-n2-constant", "--quiet",
                     "--set", "solver.grid=11", "--set", "solver.n_mc=16",
                     "--set", "ergodic.alpha_schedule=[0.5,0.25,0.1]",
                     "--out", d])
    assert code == 0
    csvs["lambda-trace"] = os.path.join(d, "heat-n2-constant-lambda-trace-seed5.csv")
    csvs["v-bar"] = os.path.join(d, "heat-n2-constant-v-bar-seed5.csv")

    code = cli_main(["recurrence", "--scenario", "ou-scalar", "--quiet",
                     "--set", "recurrence.n_mc=500", "--out", d])
    assert code == 0
    csvs["hitting-cdf"] = os.path.join(d, "ou-scalar-hitting-cdf-seed3.csv")

    code = cli_main(["coupling", "--scenario", "ou-scalar", "--quiet",
                     "--set", "coupling.n_mc=300", "--set", "coupling.k_max=20",
                     "--out", d])
    assert code == 0
    csvs["tv-decay"] = os.path.join(d, "ou-scalar-tv-decay-seed3.csv")
    csvs["meeting-times"] = os.path.join(d, "ou-scalar-meeting-times-seed3.csv")
    csvs["met-fraction"] = os.path.join(d, "ou-scalar-met-fraction-seed3.csv")

    # policy costs from the cached 1-D ladder (same rows the control command
    # writes, with a short evaluation horizon)
    scn = ctx.scenario("heat-n1")
    model, drift, control, _ = ctx.bundle("heat-n1")
    sol = ctx.ladder("heat-n1")
    policy = ctl.feedback_from_solution(sol, control, model)
    rep = ctl.optimality_gap_audit(model, drift, control, sol,
                                   ctl.standard_alternates(policy),
                                   np.zeros(1), burn_in=1.0, horizon=10.0,
                                   n_mc=50, seed=scn.seed, allowance=0.05)
    csvs["policy-costs"] = write_csv(
        os.path.join(d, "heat-n1-policy-costs-seed11.csv"),
        ["policy_id", "J", "se", "gap_vs_lambda"],
        [(r["policy"], r["J"], r["se"], r["gap_vs_lambda"])
         for r in rep["policies"]])

    for kind, path in csvs.items():
        assert os.path.exists(path), f"{kind} report missing: {path}"
    return csvs


def _polyline_ys(svg, cls):
    m = re.search(rf'<polyline class="{cls}" points="([^"]*)"', svg)
    assert m, f"polyline {cls} missing"
    return [float(p.split(",")[1]) for p in m.group(1).split(" ")]


def test_criterion_13_figures(figure_cli, report_csvs, tmp_path):
    svgs = {}
    for kind, csv in sorted(report_csvs.items()):
        out = str(tmp_path / f"{kind}.svg")
        proc = subprocess.run([*figure_cli, kind, csv, out],
                              capture_output=True, text=True)
        assert proc.returncode == 0, f"{kind}: {proc.stderr}"
        with open(out) as fh:
            svgs[kind] = fh.read()
        assert svgs[kind].startswith("<svg"), f"{kind}: not an SVG"

    flat = len(set(_polyline_ys(svgs["lambda-trace"], "trace"))) == 1
    fit = 'class="fit"' in svgs["tv-decay"]
    passed = flat and fit
    line = _record(
        13, "figure rendering", passed,
        f"{len(svgs)} kinds rendered; constant-driver trace flat = {flat}, "
        f"TV-decay fit overlay = {fit}")
    assert passed, line
