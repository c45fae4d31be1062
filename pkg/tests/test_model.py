import numpy as np
import pytest

from ebsdelab.model import (ControlSpec, DriverSpec, ModelSpec, build_heat_model,
                            composite_gl, driver_from_control, hamiltonian,
                            hamiltonian_batch, zero_drift)


def three_control_spec():
    return ControlSpec(controls=[-1.0, 0.0, 1.0],
                       r=lambda u: np.array([u]),
                       cost=lambda x, u: abs(u) * np.ones(np.asarray(x).shape[:-1]),
                       bound_c=1.0)


def test_model_spec_rejects_unstable_eigenvalue():
    with pytest.raises(ValueError):
        ModelSpec(n_modes=1, a=np.array([0.5]), k_diss=1.0, g=np.eye(1))


def test_model_spec_rejects_bad_inverse():
    with pytest.raises(ValueError):
        ModelSpec(n_modes=1, a=np.array([-1.0]), k_diss=1.0, g=np.eye(1),
                  g_inv=2.0 * np.eye(1))


def test_stationary_cov_scalar():
    m = ModelSpec(n_modes=1, a=np.array([-1.0]), k_diss=1.0, g=np.eye(1))
    assert np.allclose(m.stationary_cov(), [[0.5]])


def test_noise_free_mode():
    m = ModelSpec(n_modes=2, a=np.array([-1.0, -2.0]), k_diss=1.0,
                  g=np.zeros((2, 2)))
    assert m.noise_free and m.g_inv is None


def test_composite_gl_integrates_polynomials():
    xi, w = composite_gl(4)
    # 6-point panels are exact through degree 11
    for k in range(12):
        assert np.sum(w * xi ** k) == pytest.approx(1.0 / (k + 1), abs=1e-13)


def test_zero_nonlinearity_gives_zero_drift():
    f = lambda xi, eta: np.zeros(np.broadcast(xi, eta).shape)
    f.sup = 0.0
    _, drift = build_heat_model(2, f, lambda xi: np.ones_like(xi), 4)
    assert drift.sup_bound == 0.0
    assert np.all(drift(np.array([[0.3, -0.4]])) == 0.0)


def test_unit_sigma_gives_identity_noise_operator():
    f = lambda xi, eta: np.zeros(np.broadcast(xi, eta).shape)
    f.sup = 0.0
    model, _ = build_heat_model(3, f, lambda xi: np.ones_like(xi), 6)
    assert np.max(np.abs(model.g - np.eye(3))) < 1e-10
    assert np.allclose(model.a, -(np.arange(1, 4) * np.pi) ** 2)
    assert model.k_diss == pytest.approx(np.pi ** 2)


def test_nemytskii_projection_closed_form():
    # f(xi, eta) = cos(eta) at x = 0: F_1(0) = int sqrt(2) sin(pi xi) = 2 sqrt(2)/pi
    f = lambda xi, eta: np.cos(eta)
    f.sup = 1.0
    _, drift = build_heat_model(1, f, lambda xi: np.ones_like(xi), 4)
    assert drift(np.zeros((1, 1)))[0, 0] == pytest.approx(2 * np.sqrt(2) / np.pi,
                                                          abs=1e-12)


def test_heat_model_rejects_small_quadrature_and_vanishing_sigma():
    f = lambda xi, eta: np.zeros(np.broadcast(xi, eta).shape)
    f.sup = 0.0
    with pytest.raises(ValueError):
        build_heat_model(3, f, lambda xi: np.ones_like(xi), 5)
    with pytest.raises(ValueError):
        build_heat_model(1, f, lambda xi: np.zeros_like(xi), 4)


def test_hamiltonian_singleton_and_zero_covector():
    spec = ControlSpec(controls=[2.0], r=lambda u: np.array([u]),
                       cost=lambda x, u: 0.1 * np.ones(np.asarray(x).shape[:-1]),
                       bound_c=2.0)
    val, u = hamiltonian(spec, np.zeros(1), np.array([0.5]))
    assert u == 2.0 and val == pytest.approx(0.1 + 1.0)
    spec3 = three_control_spec()
    val, u = hamiltonian(spec3, np.zeros(1), np.zeros(1))
    assert val == 0.0 and u == 0.0


def test_hamiltonian_three_control_enumeration():
    # U = {-1,0,1}, cost |u|, z = -3: min{0, 1-3, 1+3} = -2 at u = 1
    val, u = hamiltonian(three_control_spec(), np.zeros(1), np.array([-3.0]))
    assert val == pytest.approx(-2.0) and u == 1.0


def test_hamiltonian_tie_breaks_to_first_control():
    spec = ControlSpec(controls=[0.0, 1.0], r=lambda u: np.array([0.0]),
                       cost=lambda x, u: np.ones(np.asarray(x).shape[:-1]),
                       bound_c=1.0)
    _, u = hamiltonian(spec, np.zeros(1), np.zeros(1))
    assert u == 0.0


def test_driver_from_control_closed_form_and_lipschitz():
    spec = three_control_spec()
    drv = driver_from_control(spec)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1000, 1))
    z = rng.normal(size=(1000, 1), scale=3)
    zp = rng.normal(size=(1000, 1), scale=3)
    # psi(x, z) = min(0, 1 - |z1|) for this spec
    assert np.allclose(drv.psi(x, z), np.minimum(0.0, 1.0 - np.abs(z[:, 0])))
    lip = np.abs(drv.psi(x, z) - drv.psi(x, zp))
    assert np.all(lip <= drv.l * np.abs(z - zp)[:, 0] + 1e-12)


def test_finite_minimum_is_exact():
    spec = three_control_spec()
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 1))
    z = rng.normal(size=(200, 1), scale=2)
    val, idx = hamiltonian_batch(spec, x, z)
    for u in spec.controls:
        alt = np.abs(u) + z[:, 0] * u
        assert np.all(alt >= val - 1e-14)


def test_driver_spec_callable():
    drv = DriverSpec(psi=lambda x, z: np.tanh(x[..., 0]), l=1.0)
    assert drv(np.array([[0.5]]), np.zeros((1, 1)))[0] == pytest.approx(np.tanh(0.5))


def test_zero_drift_shapes():
    d = zero_drift(3)
    out = d(np.ones((4, 3)))
    assert out.shape == (4, 3) and np.all(out == 0)
