"""Truncated forward-equation coefficients, heat-equation instance and
Hamiltonian drivers.

States live in R^N after spectral Galerkin truncation; covectors are plain
N-vectors acting by dot product.  All evaluation callables are pure and
vectorized over a leading batch shape: drift fields map (..., N) -> (..., N),
drivers map ((..., N), (..., N)) -> (...).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_INV_TOL = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients of the truncated linear SDE dX = (AX + drift)dt + G dW.

    `a` holds the eigenvalues of the diagonal operator A (all <= -k_diss),
    `g` the truncated noise operator.  `g` may be the zero matrix, which
    disables noise entirely (deterministic test mode); otherwise it must be
    invertible and `g_inv` caches the inverse.
    """

    n_modes: int
    a: np.ndarray
    k_diss: float
    g: np.ndarray
    g_inv: Optional[np.ndarray] = None
    drift_bound: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "g", g)
        if self.n_modes <= 0:
            raise ValueError("n_modes must be a positive integer")
        if a.shape != (self.n_modes,):
            raise ValueError("eigenvalue vector has wrong shape")
        if self.k_diss <= 0:
            raise ValueError("k_diss must be positive")
        if np.any(a > -self.k_diss):
            raise ValueError("every eigenvalue must satisfy a_i <= -k_diss < 0")
        if g.shape != (self.n_modes, self.n_modes):
            raise ValueError("noise operator has wrong shape")
        if self.noise_free:
            object.__setattr__(self, "g_inv", None)
        else:
            g_inv = np.linalg.inv(g) if self.g_inv is None else np.asarray(self.g_inv, float)
            if np.max(np.abs(g @ g_inv - np.eye(self.n_modes))) > _INV_TOL:
                raise ValueError("g_inv is not an inverse of g to 1e-12 per entry")
            object.__setattr__(self, "g_inv", g_inv)

    @property
    def noise_free(self) -> bool:
        return bool(np.all(self.g == 0.0))

    def stationary_cov(self) -> np.ndarray:
        """Covariance of the stationary OU law, int_0^inf e^{As} GG^T e^{As} ds."""
        gg = self.g @ self.g.T
        return gg / -(self.a[:, None] + self.a[None, :])

    def stationary_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.stationary_cov()))


@dataclass(frozen=True)
class DriftField:
    """Bounded measurable drift with a certified sup bound."""

    eval: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    lipschitz: Optional[float] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.eval(x)


def zero_drift(n_modes: int) -> DriftField:
    return DriftField(eval=lambda x: np.zeros_like(x), sup_bound=0.0, lipschitz=0.0)


@dataclass(frozen=True)
class DriverSpec:
    """Backward-equation nonlinearity psi(x, z), Lipschitz in z with constant l
    and |psi(., 0)| <= l."""

    psi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    l: float

    def __call__(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.psi(x, z)


@dataclass(frozen=True)
class ControlSpec:
    """Finite control set with action covectors r(u) and running cost L(x, u).

    |r(u)| <= bound_c, |L| <= bound_c and L is bound_c-Lipschitz in x.
    `cost` is vectorized over the state batch for a fixed control point.
    """

    controls: Sequence
    r: Callable[[object], np.ndarray]
    cost: Callable[[np.ndarray, object], np.ndarray]
    bound_c: float
    labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        if len(self.controls) == 0:
            raise ValueError("control set must be nonempty")
        if self.bound_c <= 0:
            raise ValueError("bound_c must be positive")

    def action_matrix(self, n_modes: int) -> np.ndarray:
        """(n_controls, N) matrix of action covectors."""
        rows = [np.broadcast_to(np.asarray(self.r(u), float), (n_modes,)) for u in self.controls]
        return np.stack(rows)


def hamiltonian_batch(spec: ControlSpec, x: np.ndarray, z: np.ndarray):
    """min_u [L(x,u) + <z, r(u)>] over the batch; ties go to the first control.

    x, z: (..., N).  Returns (values (...,), argmin indices (...,)).
    """
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    n_modes = x.shape[-1]
    rmat = spec.action_matrix(n_modes)              # (n_u, N)
    zr = z @ rmat.T                                  # (..., n_u)
    costs = np.stack([np.asarray(spec.cost(x, u), float) for u in spec.controls], axis=-1)
    total = costs + zr
    idx = np.argmin(total, axis=-1)
    value = np.take_along_axis(total, idx[..., None], axis=-1)[..., 0]
    return value, idx


def hamiltonian(spec: ControlSpec, x: np.ndarray, z: np.ndarray):
    """Pointwise Hamiltonian; returns (value, minimizing control point)."""
    value, idx = hamiltonian_batch(spec, np.asarray(x, float), np.asarray(z, float))
    if value.ndim == 0:
        return float(value), spec.controls[int(idx)]
    take = np.asarray([spec.controls[i] for i in idx.ravel()]).reshape(idx.shape)
    return value, take


def driver_from_control(spec: ControlSpec) -> DriverSpec:
    """Driver psi(x,z) = min_u [L(x,u) + <z, r(u)>]; Lipschitz in z with
    constant max_u |r(u)| and |psi(.,0)| <= bound_c."""
    def psi(x, z):
        return hamiltonian_batch(spec, x, z)[0]

    r_norms = [np.linalg.norm(np.atleast_1d(np.asarray(spec.r(u), float))) for u in spec.controls]
    return DriverSpec(psi=psi, l=spec.bound_c * max(1.0, max(r_norms)))


# ---------------------------------------------------------------------------
# Heat-equation instance: Dirichlet Laplacian on [0,1], space-time white noise
# shaped by sigma, Nemytskii nonlinearity f.
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


def composite_gl(n_panels: int):
    """Nodes/weights of composite 6-point Gauss-Legendre on [0,1]."""
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    xi = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
    w = np.broadcast_to(half * _GL_WEIGHTS, (n_panels, 6)).ravel()
    return xi, w


def dirichlet_basis(xi: np.ndarray, n_modes: int) -> np.ndarray:
    """(len(xi), n_modes) matrix of e_k(xi) = sqrt(2) sin(k pi xi)."""
    k = np.arange(1, n_modes + 1)
    return np.sqrt(2.0) * np.sin(np.pi * xi[:, None] * k[None, :])


def build_heat_model(n_modes: int, f, sigma, n_quad: int, f_sup: Optional[float] = None,
                     f_lip: Optional[float] = None):
    """Spectral truncation of the controlled stochastic heat equation.

    f(xi, eta): bounded nonlinearity, vectorized in both arguments;
    sigma(xi): noise intensity, bounded away from zero.  n_quad is the number
    of composite Gauss-Legendre panels (must be >= 2 n_modes).  f_sup may be
    supplied as a certified sup |f|; otherwise it is read from an `sup`
    attribute on f or probed on a coarse (xi, eta) lattice.

    Returns (ModelSpec, DriftField) with a_k = -(k pi)^2, k_diss = pi^2,
    G_jk = <sigma e_j, e_k> and the projected Nemytskii drift.
    """
    if n_quad < 2 * n_modes:
        raise ValueError("n_quad too small: need n_quad >= 2 * n_modes")
    xi, w = composite_gl(n_quad)
    basis = dirichlet_basis(xi, n_modes)

    sig = np.asarray(sigma(xi), float)
    sig = np.broadcast_to(sig, xi.shape)
    if np.min(np.abs(sig)) < 1e-8:
        raise ValueError("sigma is below the positive floor at a quadrature node")
    g = basis.T @ (w[:, None] * sig[:, None] * basis)

    k = np.arange(1, n_modes + 1)
    a = -((k * np.pi) ** 2)

    if f_sup is None:
        f_sup = getattr(f, "sup", None)
    if f_sup is None:
        eta_probe = np.linspace(-20.0, 20.0, 401)
        f_sup = float(np.max(np.abs(f(xi[:, None], eta_probe[None, :]))))
    if f_lip is None:
        f_lip = getattr(f, "lipschitz", None)

    def nemytskii(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        u = x @ basis.T                       # (..., n_q) field values at nodes
        fv = f(xi, u)
        return (fv * w) @ basis

    sup_bound = float(np.sqrt(n_modes) * np.sqrt(2.0) * f_sup)
    lip = None if f_lip is None else float(np.sqrt(2.0) * n_modes * f_lip)
    drift = DriftField(eval=nemytskii, sup_bound=sup_bound, lipschitz=lip)
    spec = ModelSpec(n_modes=n_modes, a=a, k_diss=float(np.pi ** 2), g=g,
                     drift_bound=sup_bound)
    return spec, drift
