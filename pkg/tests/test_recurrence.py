import numpy as np
import pytest

from ebsdelab.model import ModelSpec, zero_drift
from ebsdelab.recurrence import (HittingReport, hitting_time_cdf,
                                 invariant_measure_estimate, wilson_interval)


def ou_model():
    return ModelSpec(n_modes=1, a=np.array([-1.0]), k_diss=1.0, g=np.eye(1))


def test_wilson_interval_contains_point_estimate():
    lo, hi = wilson_interval(np.array([50.0]), 100)
    assert lo[0] < 0.5 < hi[0]
    lo0, hi0 = wilson_interval(np.array([0.0]), 100)
    assert lo0[0] == pytest.approx(0.0, abs=1e-12) and hi0[0] > 0.0


def test_hitting_report_rejects_decreasing_probs():
    with pytest.raises(ValueError):
        HittingReport(epsilon=0.5, horizons=[1.0, 2.0],
                      hit_prob=[0.9, 0.8], ci_low=[0.8, 0.7],
                      ci_high=[1.0, 0.9], n_mc=10, seed=0)


def test_start_inside_ball_hits_at_time_zero():
    m = ou_model()
    rep = hitting_time_cdf(m, zero_drift(1), np.zeros(1), epsilon=0.5,
                           horizons=[0.0, 1.0], n_mc=50, seed=1)
    assert rep.hit_prob[0] == 1.0


def test_ou_hitting_probability_reaches_one():
    m = ou_model()
    rep = hitting_time_cdf(m, zero_drift(1), np.array([2.0]), epsilon=0.5,
                           horizons=[1, 2, 5, 10], n_mc=1000, seed=2)
    assert np.all(np.diff(rep.hit_prob) >= -1e-12)
    assert rep.hit_prob[-1] >= 0.99
    assert np.all(rep.ci_low <= rep.hit_prob) and np.all(rep.hit_prob <= rep.ci_high)


def test_hitting_monotone_in_epsilon():
    m = ou_model()
    reps = [hitting_time_cdf(m, zero_drift(1), np.array([1.5]), eps,
                             horizons=[1, 2, 5], n_mc=1000, seed=3)
            for eps in (0.3, 0.6)]
    assert np.all(reps[1].hit_prob >= reps[0].hit_prob - 1e-12)


def test_hitting_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        hitting_time_cdf(ou_model(), zero_drift(1), np.zeros(1), epsilon=0.0,
                         horizons=[1.0], n_mc=10, seed=0)


def test_invariant_measure_time_vs_ensemble():
    m = ou_model()
    probes = [lambda s: np.tanh(s[..., 0]),
              lambda s: np.exp(-np.sum(s ** 2, axis=-1))]
    rep = invariant_measure_estimate(m, zero_drift(1), probes, n_paths=300,
                                     seed=4)
    assert rep["passed"]
    # the stationary mean of tanh is 0 by symmetry
    assert abs(rep["probes"][0]["ens_avg"]) <= 4 * rep["probes"][0]["ens_se"] + 0.02


def test_invariant_measure_rejects_short_horizon():
    with pytest.raises(ValueError):
        invariant_measure_estimate(ou_model(), zero_drift(1),
                                   [lambda s: s[..., 0]], burn_in=5.0,
                                   horizon=8.0)
