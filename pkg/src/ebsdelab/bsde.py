"""Discounted Markovian value function on a grid.

v^alpha is computed as the fixed point of the one-step discounted
dynamic-programming operator

    (T v)(x) = E[e^{-alpha h} v(X_h^x)] + E[int_0^h e^{-alpha s} psi(X_s, grad v(X_s) G) ds]

evaluated per grid node with common random numbers across sweeps.  The inner
samples are seeded scrambled-Sobol standard normals: they behave like Monte
Carlo draws (seed-dependent, shared across sweeps) but integrate the smooth
one-step expectation at far better than n^{-1/2}, which keeps the
O(error/h) amplification of the ergodic constant under control.

The fixed point is reached by relative value iteration: the plain sweep
contracts like e^{-alpha h} and stalls as alpha -> 0, so each sweep is
re-split into an anchored shape and an exactly-resolved anchor level
(T(v + c) = T(v) + e^{-alpha h} c makes the split exact and leaves the fixed
point unchanged).  Convergence is then geometric at the mixing rate of the
one-step transition, uniformly in alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .forward import advance, simulate_ensemble, step_ops
from .model import DriftField, DriverSpec, ModelSpec
from .rng import sobol_normals

_DEGENERATE_SECANT = 1e-14


@dataclass(frozen=True)
class ValueFunction:
    """Grid representation with multilinear interpolation and constant
    extrapolation outside the box."""

    alpha: float
    lows: np.ndarray
    highs: np.ndarray
    values: np.ndarray
    solver_info: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        lows = np.asarray(self.lows, float)
        highs = np.asarray(self.highs, float)
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "values", np.asarray(self.values, float))
        if self.values.ndim != len(lows):
            raise ValueError("values tensor rank must equal the state dimension")
        if np.any(highs <= lows):
            raise ValueError("box bounds must satisfy low < high per dimension")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite everywhere")

    @property
    def n_dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def cells(self) -> np.ndarray:
        return (self.highs - self.lows) / (np.asarray(self.shape) - 1)

    def nodes_1d(self):
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lows, self.highs, self.shape)]

    def node_matrix(self) -> np.ndarray:
        """(n_nodes, N) matrix of grid nodes, row-major order."""
        mesh = np.meshgrid(*self.nodes_1d(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    # -- interpolation machinery ------------------------------------------

    def locate(self, x: np.ndarray):
        """Cell index and fractional offset for a batch of points (clipped)."""
        x = np.asarray(x, float)
        shape = np.asarray(self.shape)
        u = (x - self.lows) / self.cells
        u = np.clip(u, 0.0, shape - 1.0)
        i0 = np.minimum(u.astype(np.int64), shape - 2)
        return i0, u - i0

    def _corner_offsets(self):
        n = self.n_dim
        corners = np.stack(np.meshgrid(*([np.array([0, 1])] * n), indexing="ij"),
                           axis=-1).reshape(-1, n)
        strides = np.array([int(np.prod(self.shape[d + 1:])) for d in range(n)])
        return corners, strides

    def gather(self, flat_field: np.ndarray, i0: np.ndarray, frac: np.ndarray) -> np.ndarray:
        """Multilinear combination of a flattened nodal field at located points."""
        corners, strides = self._corner_offsets()
        base = i0 @ strides
        out = 0.0
        for c in corners:
            w = np.prod(np.where(c.astype(bool), frac, 1.0 - frac), axis=-1)
            out = out + w * flat_field[base + c @ strides]
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        i0, frac = self.locate(x)
        return self.gather(self.values.ravel(), i0, frac)

    def nodal_gradient(self):
        """Central-difference gradient on the grid (one-sided at the boundary)."""
        cells = self.cells
        if self.n_dim == 1:
            return [np.gradient(self.values, cells[0])]
        return list(np.gradient(self.values, *cells))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Finite-difference gradient at x (interpolated nodal differences).

        Returns the plain gradient; callers multiply by G for the Z-field.
        """
        i0, frac = self.locate(x)
        grads = self.nodal_gradient()
        return np.stack([self.gather(g.ravel(), i0, frac) for g in grads], axis=-1)

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        import json
        header = json.dumps({
            "alpha": self.alpha,
            "lows": self.lows.tolist(),
            "highs": self.highs.tolist(),
            "grid": list(self.shape),
        }).encode()
        return b"VFN1" + len(header).to_bytes(8, "little") + header + self.values.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ValueFunction":
        import json
        if blob[:4] != b"VFN1":
            raise ValueError("not a value-function dump")
        hlen = int.from_bytes(blob[4:12], "little")
        header = json.loads(blob[12:12 + hlen])
        values = np.frombuffer(blob[12 + hlen:], dtype=float).reshape(header["grid"]).copy()
        return cls(alpha=header["alpha"], lows=np.asarray(header["lows"]),
                   highs=np.asarray(header["highs"]), values=values)

    def to_csv(self) -> str:
        """CSV dump (N <= 2): node coordinates plus value."""
        if self.n_dim > 2:
            raise ValueError("CSV export is defined for N <= 2 only")
        nodes = self.node_matrix()
        cols = [f"x_{k+1}" for k in range(self.n_dim)]
        lines = [",".join(cols + ["v"])]
        for row, v in zip(nodes, self.values.ravel()):
            lines.append(",".join(repr(float(c)) for c in (*row, v)))
        return "\n".join(lines) + "\n"


def default_box(model: ModelSpec, drift_bound: Optional[float] = None,
                widen: float = 0.0):
    """[-B, B]^N with B = 4 * stationary std + drift_bound / k_diss per mode."""
    bound = model.drift_bound if drift_bound is None else drift_bound
    b = 4.0 * model.stationary_std() + bound / model.k_diss + widen
    return -b, b


def _grid_shape(grid, n_dim: int):
    if grid is None:
        grid = 61 if n_dim <= 2 else 31
    if np.isscalar(grid):
        return (int(grid),) * n_dim
    return tuple(int(g) for g in grid)


def solve_discounted(model: ModelSpec, drift_f: DriftField, driver: DriverSpec,
                     alpha: float, box=None, grid=None, h: Optional[float] = None,
                     n_mc: int = 64, tol: float = 1e-6, max_iter: int = 4000,
                     dt: float = 1e-2, seed: int = 0, warm_start: Optional[np.ndarray] = None,
                     anchor=None) -> ValueFunction:
    """Solve for v^alpha on the grid.  See the module docstring for the scheme.

    `h` defaults to five dt substeps: a longer horizon divides the per-sweep
    interpolation error amplification (which scales like 1/h) while the
    substep count keeps the time quadrature of the driver fine.  The returned
    ValueFunction carries a `solver_info` dict (iterations, residual,
    contraction estimate, box-exit fraction, warnings).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    n = model.n_modes
    if box is None:
        lows, highs = default_box(model, drift_f.sup_bound)
    else:
        lows, highs = (np.asarray(b, float) for b in box)
        lows, highs = np.broadcast_to(lows, (n,)), np.broadcast_to(highs, (n,))
    shape = _grid_shape(grid, n)
    if h is None:
        h = 5.0 * dt
    n_sub = max(1, int(round(h / dt)))
    dt_sub = h / n_sub
    ops = step_ops(model, dt_sub)

    proto = ValueFunction(alpha=alpha, lows=lows, highs=highs,
                          values=np.zeros(shape))
    nodes = proto.node_matrix()                                  # (n_nodes, N)
    n_nodes = nodes.shape[0]

    # CRN inner samples, shared across sweeps
    eta = sobol_normals(seed, n_mc, n_sub * n, "dp-inner").reshape(n_mc, n_sub, n)

    # propagate substep states once; they do not depend on v
    states = [nodes[:, None, :]]
    x = np.broadcast_to(nodes[:, None, :], (n_nodes, n_mc, n))
    for s in range(n_sub):
        xi = eta[:, s, :] @ ops.chol.T
        x = advance(x, drift_f, ops, xi)
        states.append(x)
    exit_frac = float(np.mean(np.any((states[-1] < lows) | (states[-1] > highs), axis=-1)))

    disc_end = np.exp(-alpha * h)
    # right-endpoint rule for int_0^h e^{-alpha s} psi ds: every psi sees a
    # noise-smoothed state, so the 1/cell gradient amplification of the raw
    # s = 0 node never enters the sweep (it would break contraction)
    tw = dt_sub * np.exp(-alpha * dt_sub * np.arange(1, n_sub + 1))
    # normalize so a constant driver integrates to (1 - e^{-alpha h})/alpha
    # exactly; constant drivers then reproduce lambda_alpha = c to rounding
    tw *= (1.0 - disc_end) / (alpha * tw.sum())

    located = [proto.locate(s) for s in states[1:]]

    def sweep(values: np.ndarray) -> np.ndarray:
        vf = ValueFunction(alpha=alpha, lows=lows, highs=highs, values=values)
        grads = [g.ravel() for g in vf.nodal_gradient()]
        acc = 0.0
        for s in range(1, n_sub + 1):
            i0, frac = located[s - 1]
            zs = np.stack([vf.gather(g, i0, frac) for g in grads], axis=-1) @ model.g
            acc = acc + tw[s - 1] * driver.psi(states[s], zs).mean(axis=1)
        v_end = vf.gather(values.ravel(), *located[-1]).mean(axis=1)
        return disc_end * v_end + acc

    anchor_pt = np.zeros(n) if anchor is None else np.asarray(anchor, float)
    anchor_idx = int(np.argmin(np.sum((nodes - anchor_pt) ** 2, axis=1)))

    # iterate on the anchored shape w (w(anchor) = 0); the level follows from
    # T(w + m) = T(w) + e^{-alpha h} m, i.e. m = [T(w)](anchor) / (1 - e^{-alpha h})
    if warm_start is None:
        w = np.zeros(n_nodes)
    else:
        w = np.asarray(warm_start, float).ravel().copy()
        w -= w[anchor_idx]
    m_level = 0.0
    deltas = []
    converged = False
    for it in range(max_iter):
        raw = sweep(w.reshape(shape)).ravel()
        t0 = float(raw[anchor_idx])
        w_new = raw - t0
        m_new = t0 / (1.0 - disc_end)
        delta_w = float(np.max(np.abs(w_new - w)))
        delta_level = abs(m_new - m_level)
        deltas.append(delta_w)
        w, m_level = w_new, m_new
        if delta_w < tol and alpha * delta_level < 10 * tol:
            converged = True
            break
    v = w + m_level
    tail = [d2 / d1 for d1, d2 in zip(deltas[-11:-1], deltas[-10:]) if d1 > 0]
    info = {
        "iterations": len(deltas),
        "residual": deltas[-1] if deltas else 0.0,
        "converged": converged,
        "contraction_estimate": float(np.median(tail)) if tail else 0.0,
        "box_exit_fraction": exit_frac,
        "warnings": [],
        "h": h,
        "dt": dt_sub,
        "n_mc": n_mc,
        "seed": seed,
        "anchor_index": anchor_idx,
    }
    if not converged:
        info["warnings"].append(f"no convergence in {max_iter} sweeps, residual {deltas[-1]:.3e}")
    if exit_frac > 0.05:
        info["warnings"].append(f"box-exit fraction {exit_frac:.1%} exceeds 5%")
    bound = driver.l / alpha
    overshoot = float(np.max(np.abs(v)) - bound)
    info["bound_overshoot"] = overshoot
    if overshoot > max(10 * tol, 1e-3 * bound):
        info["warnings"].append(f"values exceed l/alpha bound by {overshoot:.3e}")
    return ValueFunction(alpha=alpha, lows=lows, highs=highs,
                         values=v.reshape(shape), solver_info=info)


def linearization_field(driver: DriverSpec, zeta: Callable, zeta_prime: Callable,
                        x: np.ndarray) -> np.ndarray:
    """Secant field of the driver between two covector fields.

    Returns [psi(x, zeta) - psi(x, zeta')] (zeta - zeta') / |zeta - zeta'|^2,
    zero on the degenerate branch; its norm never exceeds driver.l (enforced,
    it is a secant slope of an l-Lipschitz function).
    """
    x = np.asarray(x, float)
    zv = np.asarray(zeta(x), float)
    zp = np.asarray(zeta_prime(x), float)
    diff = zv - zp
    nrm2 = np.sum(diff * diff, axis=-1)
    num = driver.psi(x, zv) - driver.psi(x, zp)
    safe = np.maximum(nrm2, _DEGENERATE_SECANT ** 2)
    out = (num / safe)[..., None] * diff
    out = np.where(np.sqrt(nrm2)[..., None] <= _DEGENERATE_SECANT, 0.0, out)
    norm = np.linalg.norm(out, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        out = np.where(norm > driver.l, out * (driver.l / np.maximum(norm, 1e-300)), out)
    return out


def bsde_residual(model: ModelSpec, drift_f: DriftField, driver: DriverSpec,
                  vf: ValueFunction, x0, T: float, n_mc: int, seed: int,
                  dt: float = 1e-2, allowance: Optional[float] = None) -> dict:
    """Integrated-mean residual of the discounted backward equation.

    m = E[v(X_T)] - v(x0) + E[int_0^T (psi(X_s, grad v(X_s) G) - alpha v(X_s)) ds]
    should vanish up to the martingale fluctuation; pass iff
    |m| <= 3 SE + allowance.
    """
    n_steps = int(round(T / dt))
    t_grid = np.arange(n_steps + 1) * dt
    states, _ = simulate_ensemble(model, drift_f, x0, t_grid, seed,
                                  n_paths=n_mc, tags=("bsde-residual",), keep_dw=False)
    flat = states.reshape(-1, model.n_modes)
    z = vf.gradient(flat) @ model.g
    integrand = (driver.psi(flat, z) - vf.alpha * vf(flat)).reshape(n_mc, n_steps + 1)
    integral = np.trapezoid(integrand, dx=dt, axis=1)
    v0 = float(vf(np.asarray(x0, float)[None])[0])
    per_path = vf(states[:, -1, :]) - v0 + integral
    m = float(per_path.mean())
    se = float(per_path.std(ddof=1) / np.sqrt(n_mc))
    if allowance is None:
        allowance = residual_allowance(vf, driver, T, dt)
    return {
        "m": m,
        "se": se,
        "allowance": float(allowance),
        "passed": bool(abs(m) <= 3 * se + allowance),
        "n_mc": n_mc,
        "T": T,
        "seed": seed,
    }


# Allowance coefficient for all residual audits, calibrated once on the
# z-free oracle scenario (observed deterministic bias stays below 0.7
# allowance units over 8 seeds) and frozen.
RESIDUAL_ALLOWANCE_COEFF = 1.0


def residual_allowance(vf: ValueFunction, driver: DriverSpec, T: float, dt: float) -> float:
    cell2 = float(np.mean(vf.cells ** 2))
    return RESIDUAL_ALLOWANCE_COEFF * (dt + cell2) * max(1.0, driver.l) * max(1.0, T)
