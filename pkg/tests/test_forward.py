import numpy as np
import pytest

from ebsdelab.forward import (Trajectory, girsanov_logweight,
                              girsanov_logweights, load_trajectory,
                              moment_audit, save_trajectory, simulate_ensemble,
                              simulate_ensemble_chunked, simulate_ou,
                              simulate_path, step_ops, trajectory_to_csv)
from ebsdelab.model import DriftField, ModelSpec, zero_drift


def scalar_model(a=-1.0, g=1.0):
    return ModelSpec(n_modes=1, a=np.array([a]), k_diss=abs(a),
                     g=g * np.eye(1))


def test_noise_free_decay_is_exact():
    m = ModelSpec(n_modes=2, a=np.array([-1.0, -2.0]), k_diss=1.0,
                  g=np.zeros((2, 2)))
    t_grid = np.linspace(0.0, 1.0, 11)
    traj = simulate_path(m, zero_drift(2), np.array([1.0, 0.0]), t_grid, seed=0)
    assert traj.states[-1] == pytest.approx([np.exp(-1.0), 0.0], abs=1e-12)


def test_exact_convolution_covariance_scalar():
    m = scalar_model()
    ops = step_ops(m, 0.25)
    expected = (1.0 - np.exp(-2 * 0.25)) / 2.0
    assert ops.cov[0, 0] == pytest.approx(expected, rel=1e-12)
    assert ops.to_dw @ ops.from_dw == pytest.approx(np.eye(1))


def test_constant_drift_long_time_mean():
    # dX = (-X + 0.5) dt + dW has long-time mean 0.5
    m = scalar_model()
    drift = DriftField(eval=lambda x: np.full_like(x, 0.5), sup_bound=0.5)
    t_grid = np.arange(0, 801) * 0.01
    states, _ = simulate_ensemble(m, drift, np.zeros(1), t_grid, seed=4,
                                  n_paths=10_000, keep_dw=False)
    end = states[:, -1, 0]
    se = end.std(ddof=1) / np.sqrt(len(end))
    assert abs(end.mean() - 0.5) <= 3 * se


def test_ou_variance_matches_closed_form():
    m = scalar_model(a=-1.0)
    t = 0.7
    t_grid = np.arange(0, int(round(t / 0.01)) + 1) * 0.01
    states, _ = simulate_ensemble(m, zero_drift(1), np.zeros(1), t_grid, seed=11,
                                  n_paths=10_000, keep_dw=False)
    end = states[:, -1, 0]
    var = end.var(ddof=1)
    target = (1.0 - np.exp(-2 * t)) / 2.0
    se = var * np.sqrt(2.0 / (len(end) - 1))      # SE of a Gaussian variance
    assert abs(var - target) <= 3 * se


def test_same_seed_bitwise_identical():
    m = scalar_model()
    t_grid = np.linspace(0, 1, 21)
    t1 = simulate_path(m, zero_drift(1), np.ones(1), t_grid, seed=5)
    t2 = simulate_path(m, zero_drift(1), np.ones(1), t_grid, seed=5)
    assert np.array_equal(t1.states, t2.states)
    assert np.array_equal(t1.noise_increments, t2.noise_increments)


def test_chunked_ensemble_worker_invariant():
    m = scalar_model()
    t_grid = np.linspace(0, 0.5, 11)
    runs = [simulate_ensemble_chunked(m, zero_drift(1), np.zeros(1), t_grid,
                                      seed=2, n_paths=100, chunk=16, workers=w)
            for w in (1, 4)]
    assert np.array_equal(runs[0], runs[1])


def test_nonuniform_grid_rejected():
    m = scalar_model()
    with pytest.raises(ValueError):
        simulate_path(m, zero_drift(1), np.zeros(1), [0.0, 0.1, 0.3], seed=0)


def test_girsanov_zero_tilt_is_zero():
    m = scalar_model()
    traj = simulate_ou(m, np.zeros(1), np.linspace(0, 1, 51), seed=1)
    assert girsanov_logweight(traj, m, zero_drift(1)) == 0.0


def test_girsanov_single_step_hand_case():
    # one step, G = I, tilt = 1, dt = 0.01, dW = 0.3:
    # log rho = -1*0.3 - 0.5*0.01 = -0.305
    m = scalar_model()
    states = np.zeros((1, 2, 1))
    dw = np.full((1, 1, 1), 0.3)
    tilt = DriftField(eval=lambda x: np.ones_like(x), sup_bound=1.0)
    lw = girsanov_logweights(states, dw, 0.01, m, tilt)
    assert lw[0] == pytest.approx(-0.305, abs=1e-14)


def test_girsanov_weights_are_a_martingale():
    m = scalar_model()
    t_grid = np.arange(0, 51) * 0.01
    states, dw = simulate_ensemble(m, zero_drift(1), np.zeros(1), t_grid,
                                   seed=13, n_paths=10_000)
    tilt = DriftField(eval=lambda x: 0.5 * np.tanh(x), sup_bound=0.5)
    w = np.exp(girsanov_logweights(states, dw, 0.01, m, tilt))
    se = w.std(ddof=1) / np.sqrt(len(w))
    # exact for the linear term; quadratic term leaves an O(dt) bias
    assert abs(w.mean() - 1.0) <= 3 * se + 0.01


def test_girsanov_rejects_noise_free():
    m = ModelSpec(n_modes=1, a=np.array([-1.0]), k_diss=1.0, g=np.zeros((1, 1)))
    with pytest.raises(ValueError):
        girsanov_logweights(np.zeros((1, 2, 1)), np.zeros((1, 1, 1)), 0.01, m,
                            zero_drift(1))


def test_moment_audit_ratios_stay_bounded():
    # the running sup of an OU path creeps up logarithmically, so the trend
    # test may fire; the uniformity claim itself is that the ratio stays O(1)
    m = scalar_model()
    rep = moment_audit(m, zero_drift(1), np.zeros(1), [1, 2, 4, 8], p=2,
                       n_mc=2000, seed=3)
    assert np.all(rep["ratios"] > 0) and np.all(rep["ratios"] < 10.0)
    assert rep["ses"].shape == rep["ratios"].shape
    assert np.isfinite(rep["slope"]) and rep["slope_se"] > 0


def test_moment_audit_noise_free_ratio_below_one():
    m = ModelSpec(n_modes=1, a=np.array([-1.0]), k_diss=1.0, g=np.zeros((1, 1)))
    rep = moment_audit(m, zero_drift(1), np.ones(1), [1, 2, 4], p=2,
                       n_mc=8, seed=0)
    # sup over [0, T] of a decaying deterministic path is |x0|^2 = 1 < 2^2
    assert np.all(rep["ratios"] < 1.0)
    assert not rep["growth_flag"]


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.0, 0.1]), states=np.zeros((3, 1)),
                   noise_increments=np.zeros((1, 1)), seed=0)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.0, 0.1]), states=np.zeros((2, 1)),
                   noise_increments=np.zeros((2, 1)), seed=0)


def test_trajectory_csv_and_binary_roundtrip(tmp_path):
    m = scalar_model()
    traj = simulate_path(m, zero_drift(1), np.ones(1), np.linspace(0, 1, 11), seed=9)
    csv = trajectory_to_csv(traj)
    assert csv.splitlines()[0] == "t,x_1"
    assert len(csv.splitlines()) == 12
    p = tmp_path / "traj.npz"
    save_trajectory(traj, str(p))
    back = load_trajectory(str(p))
    assert np.array_equal(back.states, traj.states)
    assert back.seed == traj.seed
