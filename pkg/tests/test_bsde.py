import numpy as np
import pytest

from ebsdelab.bsde import (ValueFunction, bsde_residual, default_box,
                           linearization_field, residual_allowance,
                           solve_discounted)
from ebsdelab.model import DriftField, DriverSpec, ModelSpec, zero_drift


def scalar_model():
    return ModelSpec(n_modes=1, a=np.array([-1.0]), k_diss=1.0, g=np.eye(1))


def grid_vf(fn, lo=-2.0, hi=2.0, n=41, alpha=0.1):
    x = np.linspace(lo, hi, n)
    return ValueFunction(alpha=alpha, lows=np.array([lo]), highs=np.array([hi]),
                         values=fn(x))


# -- representation ----------------------------------------------------------


def test_interpolation_reproduces_nodes_and_is_linear_between():
    vf = grid_vf(lambda x: 3.0 * x - 1.0)
    pts = np.linspace(-2, 2, 313)[:, None]
    assert np.allclose(vf(pts), 3.0 * pts[:, 0] - 1.0, atol=1e-12)


def test_constant_extrapolation_outside_box():
    vf = grid_vf(lambda x: x)
    assert vf(np.array([[5.0]]))[0] == pytest.approx(2.0)
    assert vf(np.array([[-9.0]]))[0] == pytest.approx(-2.0)


def test_gradient_constant_and_linear_exact():
    assert np.allclose(grid_vf(lambda x: np.full_like(x, 4.0)).gradient(
        np.array([[0.3]])), 0.0)
    g = grid_vf(lambda x: -2.5 * x).gradient(np.linspace(-1.5, 1.5, 7)[:, None])
    assert np.allclose(g, -2.5, atol=1e-12)


def test_gradient_smooth_field_converges_on_refinement():
    # central differences are exact on quadratics; a quartic exposes the
    # O(cell^2) truncation error, which must shrink under grid refinement
    errs = []
    for n in (21, 41, 81):
        vf = grid_vf(lambda x: x ** 4, n=n)
        pts = np.linspace(-1.0, 1.0, 17)[:, None]
        errs.append(np.max(np.abs(vf.gradient(pts) - 4.0 * pts ** 3)))
    errs = np.array(errs)
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] <= 0.3 * errs[0]


def test_validation_rejects_bad_boxes_and_nan():
    with pytest.raises(ValueError):
        ValueFunction(alpha=0.1, lows=np.array([1.0]), highs=np.array([0.0]),
                      values=np.zeros(5))
    with pytest.raises(ValueError):
        ValueFunction(alpha=0.1, lows=np.array([0.0]), highs=np.array([1.0]),
                      values=np.array([0.0, np.nan, 0.0]))


def test_binary_roundtrip_and_csv():
    vf = grid_vf(lambda x: np.sin(x), n=11)
    back = ValueFunction.from_bytes(vf.to_bytes())
    assert np.array_equal(back.values, vf.values)
    assert back.alpha == vf.alpha
    lines = vf.to_csv().splitlines()
    assert lines[0] == "x_1,v" and len(lines) == 12
    with pytest.raises(ValueError):
        ValueFunction.from_bytes(b"nope" + vf.to_bytes()[4:])


def test_default_box_scalar():
    m = scalar_model()
    lo, hi = default_box(m, drift_bound=0.5)
    assert hi[0] == pytest.approx(4.0 * np.sqrt(0.5) + 0.5)
    assert lo[0] == -hi[0]


# -- solver ------------------------------------------------------------------


def test_constant_driver_solved_exactly():
    # psi = c: v^alpha = c / alpha at every node, for every alpha
    m = scalar_model()
    driver = DriverSpec(psi=lambda x, z: np.full(np.asarray(x).shape[:-1], 0.7),
                        l=0.7)
    for alpha in (0.5, 0.05):
        vf = solve_discounted(m, zero_drift(1), driver, alpha, grid=(21,),
                              dt=0.01, n_mc=16, seed=0)
        assert np.max(np.abs(vf.values - 0.7 / alpha)) < 1e-8
        assert vf.solver_info["converged"]


def test_solver_respects_l_over_alpha_bound():
    m = scalar_model()
    driver = DriverSpec(psi=lambda x, z: np.tanh(x[..., 0]), l=1.0)
    vf = solve_discounted(m, zero_drift(1), driver, 0.1, grid=(41,),
                          dt=0.01, n_mc=64, seed=1)
    assert np.max(np.abs(vf.values)) <= 1.0 / 0.1 + 1e-6
    assert vf.solver_info["bound_overshoot"] <= 1e-6


def test_solver_rejects_nonpositive_alpha():
    m = scalar_model()
    driver = DriverSpec(psi=lambda x, z: np.zeros(np.asarray(x).shape[:-1]), l=1.0)
    with pytest.raises(ValueError):
        solve_discounted(m, zero_drift(1), driver, 0.0)


def test_warm_start_matches_cold_fixed_point():
    m = scalar_model()
    driver = DriverSpec(psi=lambda x, z: np.cos(x[..., 0]), l=1.0)
    cold = solve_discounted(m, zero_drift(1), driver, 0.2, grid=(31,),
                            dt=0.01, n_mc=64, seed=3, tol=1e-9)
    warm = solve_discounted(m, zero_drift(1), driver, 0.2, grid=(31,),
                            dt=0.01, n_mc=64, seed=3, tol=1e-9,
                            warm_start=cold.values + 5.0)
    assert np.max(np.abs(cold.values - warm.values)) < 1e-7


# -- linearization -----------------------------------------------------------


def scalar_z_driver():
    return DriverSpec(psi=lambda x, z: np.asarray(z, float)[..., 0], l=1.0)


def test_linearization_zero_when_fields_coincide():
    drv = scalar_z_driver()
    z = lambda x: np.stack([x[..., 0]], axis=-1)
    out = linearization_field(drv, z, z, np.linspace(-1, 1, 9)[:, None])
    assert np.all(out == 0.0)


def test_linearization_scalar_hand_case():
    # psi = z, zeta = 2, zeta' = 1: secant slope (2-1)/(2-1) = 1
    drv = scalar_z_driver()
    out = linearization_field(drv,
                              lambda x: np.full(x.shape[:-1] + (1,), 2.0),
                              lambda x: np.full(x.shape[:-1] + (1,), 1.0),
                              np.zeros((3, 1)))
    assert np.allclose(out, 1.0)


def test_linearization_exact_secant_identity_and_bound():
    drv = DriverSpec(psi=lambda x, z: np.minimum(0.0, 1.0 - np.abs(z[..., 0])),
                     l=1.0)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1000, 1))
    za = rng.normal(size=(1000, 1), scale=2)
    zb = rng.normal(size=(1000, 1), scale=2)
    ups = linearization_field(drv, lambda s: za, lambda s: zb, x)
    assert np.all(np.linalg.norm(ups, axis=-1) <= drv.l + 1e-12)
    lhs = drv.psi(x, za)
    rhs = drv.psi(x, zb) + np.sum(ups * (za - zb), axis=-1)
    assert np.allclose(lhs, rhs, atol=1e-10)


# -- residual audit ----------------------------------------------------------


def test_bsde_residual_passes_and_flags_corruption():
    m = scalar_model()
    driver = DriverSpec(psi=lambda x, z: np.tanh(x[..., 0]), l=1.0)
    vf = solve_discounted(m, zero_drift(1), driver, 0.2, grid=(61,),
                          dt=0.005, n_mc=256, seed=5)
    good = bsde_residual(m, zero_drift(1), driver, vf, np.zeros(1), T=2.0,
                         n_mc=400, seed=6)
    assert good["passed"]
    # corrupt half the grid by +1: the identity breaks far beyond the band
    bad_vals = vf.values.copy()
    bad_vals[: len(bad_vals) // 2] += 1.0
    bad_vf = ValueFunction(alpha=vf.alpha, lows=vf.lows, highs=vf.highs,
                           values=bad_vals)
    bad = bsde_residual(m, zero_drift(1), driver, bad_vf, np.zeros(1), T=2.0,
                        n_mc=400, seed=6)
    assert not bad["passed"]


def test_residual_allowance_scales():
    vf = grid_vf(lambda x: x, n=41)
    drv = DriverSpec(psi=lambda x, z: x[..., 0], l=2.0)
    a1 = residual_allowance(vf, drv, T=1.0, dt=0.01)
    a2 = residual_allowance(vf, drv, T=3.0, dt=0.01)
    assert a2 == pytest.approx(3.0 * a1)
    assert a1 > 0
