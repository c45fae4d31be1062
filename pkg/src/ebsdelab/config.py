"""Scenario configuration: YAML schema, presets, and builders.

A config file holds a schema version and a list of scenarios.  Each scenario
names a model (spectral heat truncation or an explicit diagonal system),
drift and noise presets, an optional finite control set, and per-module
run parameters.  Builders turn a scenario into the concrete model objects;
validation errors carry the dotted path of the offending key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .model import (ControlSpec, DriftField, DriverSpec, ModelSpec,
                    build_heat_model, driver_from_control, zero_drift)

SCHEMA_VERSION = 1


def default_config_path() -> str:
    """Path of the shipped scenario file."""
    import os
    return os.path.join(os.path.dirname(__file__), "data", "scenarios.yaml")


class ConfigError(ValueError):
    """Schema violation; message carries the dotted key path."""


@dataclass(frozen=True)
class Scenario:
    """One named experiment: model + presets + module parameters."""

    id: str
    seed: int
    model: dict
    driver: dict = field(default_factory=dict)
    control: Optional[dict] = None
    solver: dict = field(default_factory=dict)
    ergodic: dict = field(default_factory=dict)
    coupling: dict = field(default_factory=dict)
    recurrence: dict = field(default_factory=dict)
    control_run: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"{path}.{key}: required key missing")
    return mapping[key]


def load_config(path: str) -> dict:
    """Parse and validate a YAML config; returns {scenario id: Scenario}."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    version = _require(raw, "schema_version", "config")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config.schema_version: expected {SCHEMA_VERSION}, got {version}")
    entries = _require(raw, "scenarios", "config")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("config.scenarios: must be a nonempty list")
    out = {}
    known = {f.name for f in Scenario.__dataclass_fields__.values()}
    for i, entry in enumerate(entries):
        path_i = f"config.scenarios[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{path_i}: must be a mapping")
        sid = _require(entry, "id", path_i)
        _require(entry, "seed", path_i)
        _require(entry, "model", path_i)
        unknown = set(entry) - known
        if unknown:
            raise ConfigError(f"{path_i}.{sorted(unknown)[0]}: unknown key")
        if sid in out:
            raise ConfigError(f"{path_i}.id: duplicate scenario id {sid!r}")
        out[sid] = Scenario(**entry)
    return out


def apply_overrides(scn: Scenario, overrides) -> Scenario:
    """Return a copy of the scenario with dotted-path overrides applied,
    e.g. ('solver.dt=0.005', 'seed=3').  Values parse as YAML scalars."""
    import copy
    from dataclasses import asdict

    data = copy.deepcopy(asdict(scn))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = yaml.safe_load(value)
    return Scenario(**data)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def _f_preset(cfg: dict, path: str):
    preset = _require(cfg, "preset", path)
    amp = float(cfg.get("amplitude", 0.5))
    if preset == "zero":
        fn = lambda xi, eta: np.zeros(np.broadcast(xi, eta).shape)
        fn.sup = 0.0
    elif preset == "tanh":
        fn = lambda xi, eta: amp * np.tanh(eta)
        fn.sup = amp
    elif preset == "cos":
        fn = lambda xi, eta: amp * np.cos(eta)
        fn.sup = amp
    elif preset == "sin":
        fn = lambda xi, eta: amp * np.sin(eta)
        fn.sup = amp
    elif preset == "outward":
        # bounded field pushing away from 0 (recurrence stress case)
        fn = lambda xi, eta: amp * np.tanh(5.0 * eta)
        fn.sup = amp
    else:
        raise ConfigError(f"{path}.preset: unknown drift preset {preset!r}")
    return fn


def _sigma_preset(cfg: dict, path: str):
    preset = cfg.get("preset", "const")
    if preset == "const":
        value = float(cfg.get("value", 1.0))
        return lambda xi: np.full_like(np.asarray(xi, float), value)
    if preset == "ripple":
        amp = float(cfg.get("amplitude", 0.2))
        return lambda xi: 1.0 + amp * np.cos(np.pi * np.asarray(xi, float))
    raise ConfigError(f"{path}.preset: unknown sigma preset {preset!r}")


def build_model(scn: Scenario):
    """(ModelSpec, DriftField) from the scenario's model block."""
    cfg = scn.model
    path = f"scenarios[{scn.id}].model"
    kind = cfg.get("kind", "heat")
    if kind == "heat":
        n_modes = int(_require(cfg, "n_modes", path))
        n_quad = int(cfg.get("n_quad", max(2 * n_modes, 4)))
        f = _f_preset(_require(cfg, "f", path), path + ".f")
        sigma = _sigma_preset(cfg.get("sigma", {}), path + ".sigma")
        return build_heat_model(n_modes, f, sigma, n_quad)
    if kind == "diagonal":
        a = np.asarray(_require(cfg, "a", path), float)
        g_scale = float(cfg.get("g_scale", 1.0))
        model = ModelSpec(n_modes=len(a), a=a, k_diss=float(-np.max(a)),
                          g=g_scale * np.eye(len(a)))
        return model, zero_drift(len(a))
    raise ConfigError(f"{path}.kind: unknown model kind {kind!r}")


def build_control(scn: Scenario, model: ModelSpec) -> Optional[ControlSpec]:
    if scn.control is None:
        return None
    cfg = scn.control
    path = f"scenarios[{scn.id}].control"
    levels = [float(u) for u in _require(cfg, "levels", path)]
    weight = float(cfg.get("cost_weight", 0.5))
    state_cost = cfg.get("state_cost", "tanh_sq")
    if state_cost == "tanh_sq":
        lx = lambda x: np.tanh(x[..., 0]) ** 2
    elif state_cost == "bump":
        lx = lambda x: 1.0 - np.exp(-np.sum(x ** 2, axis=-1))
    else:
        raise ConfigError(f"{path}.state_cost: unknown preset {state_cost!r}")
    direction = np.zeros(model.n_modes)
    direction[0] = 1.0
    bound = float(cfg.get("bound_c", weight * max(abs(u) for u in levels) ** 2 + 1.0))
    return ControlSpec(
        controls=levels,
        r=lambda u, d=direction: u * d,
        cost=lambda x, u, lx=lx, w=weight: w * u * u + lx(np.asarray(x, float)),
        bound_c=bound,
        labels=[str(u) for u in levels],
    )


def build_driver(scn: Scenario, model: ModelSpec,
                 control: Optional[ControlSpec]) -> DriverSpec:
    cfg = scn.driver
    path = f"scenarios[{scn.id}].driver"
    preset = cfg.get("preset", "control" if control is not None else "zfree_tanh")
    if preset == "control":
        if control is None:
            raise ConfigError(f"{path}.preset: 'control' needs a control block")
        return driver_from_control(control)
    if preset == "constant":
        c = float(cfg.get("value", 1.0))
        return DriverSpec(psi=lambda x, z: np.full(np.asarray(x).shape[:-1], c),
                          l=max(abs(c), 1e-12))
    if preset == "zfree_tanh":
        return DriverSpec(psi=lambda x, z: np.tanh(np.asarray(x, float)[..., 0]), l=1.0)
    if preset == "zfree_cos":
        return DriverSpec(psi=lambda x, z: np.cos(np.asarray(x, float)[..., 0]), l=1.0)
    raise ConfigError(f"{path}.preset: unknown driver preset {preset!r}")
