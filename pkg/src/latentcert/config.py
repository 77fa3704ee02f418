"""Run configuration: defaults, JSON overrides, and upfront validation.

A run config is the DEFAULTS tree with a user JSON file deep-merged on
top. Merging rejects keys that do not exist in the defaults (typos fail
loudly instead of silently training with a default), and validation
rejects physically meaningless values before any compute starts.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .jsonio import load_json

DEFAULTS: dict = {
    "experiment": "cartpole",
    "seed": 0,
    "out": "runs/cartpole",
    "cartpole": {
        "g": 9.8, "m_c": 0.5, "m_p": 0.05, "l": 0.5, "dt": 0.02,
    },
    "collect": {
        "points_per_dim": 3, "input_levels": 7, "T1": 16,
        "state_box": 0.1, "u_min": -3.0, "u_max": 3.0,
        "theta_cap": float(np.pi / 2),
    },
    "model": {"n_z": 2, "hidden": 64},
    "loss_weights": {
        "fwd": 5.0, "bwd": 1.0, "left": 1.0, "right": 1.0,
        "origin": 1.0, "iso": 1.0,
    },
    "train": {"lr": 1e-3, "epochs": 3000, "optimizer": "adam",
              "whiten": True},
    "lyapunov": {
        "lr": 1e-3, "epochs": 1500, "optimizer": "adam", "rho": 0.85,
        "hidden": 256, "quad_weight": 0.1, "box_halfwidth": 1.5,
        "seeds_per_axis": 11, "rollout_steps": 40,
    },
    "controller": {"u_max": 10.0},
    "certify": {
        "rho": 0.85,
        "r1": 1.5, "T": 300, "dz_density": 11,
        "r2": 0.5, "T_prime": 300, "eps": 0.01, "dx_density": 7,
        "dz_grid_density": 41,
        "gamma_max_samples": 20000, "gamma_jitter_samples": 5000,
        "lipschitz_pairs": 10000,
        "alpha0_density": 15, "alpha0_tol": 1e-3,
        "horizon": 300, "n_trajectories": 100, "n_invariance_seeds": 20,
        "trajectory_tol": 1e-9,
        "slice_density": 61, "slice_halfwidth": 1.0,
        "zero_set_density": 9, "zero_set_halfwidth": 0.5,
        "zero_set_tol": 0.05,
    },
    "omni": {
        "alpha": 2.0, "beta": 4.5, "beta_prime": 5.0,
        "u_max": 5.0, "d_max": 1.0,
        "wheel_radius": 0.02, "frame_radius": 0.2,
        "dt": 0.01, "duration": 30.0,
        "active_start": [15.0, -10.0, 0.0],
        "passive_start": [0.0, 0.0], "passive_heading": 0.0,
        "goal": [0.0, 0.0], "gain": 1.0,
        "nominal_only": False,
        "gamma_samples": 500,
    },
}


def merge_config(base: dict, override: dict, path: str = "") -> dict:
    """Recursive merge of override into a deep copy of base.

    Keys absent from base are rejected, as is replacing a block with a
    scalar or vice versa.
    """
    merged = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) != isinstance(val, dict):
            raise ConfigError(f"config key '{where}' has the wrong shape")
        merged[key] = (merge_config(base[key], val, where)
                       if isinstance(val, dict) else copy.deepcopy(val))
    return merged


def _positive(cfg: dict, block: str, keys) -> None:
    for k in keys:
        if not cfg[block][k] > 0:
            raise ConfigError(f"{block}.{k} must be positive")


def _validate(cfg: dict) -> None:
    if cfg["experiment"] not in ("cartpole", "omni"):
        raise ConfigError("experiment must be 'cartpole' or 'omni'")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer")
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ConfigError("out must be a nonempty path")

    _positive(cfg, "cartpole", ("g", "m_c", "m_p", "l", "dt"))
    c = cfg["collect"]
    if c["u_min"] > c["u_max"]:
        raise ConfigError(
            f"collect input range [{c['u_min']}, {c['u_max']}] is empty")
    if c["T1"] < 2:
        raise ConfigError("collect.T1 must be at least 2")
    _positive(cfg, "collect", ("points_per_dim", "input_levels",
                               "state_box", "theta_cap"))
    _positive(cfg, "model", ("n_z", "hidden"))
    if min(cfg["loss_weights"].values()) < 0:
        raise ConfigError("loss weights must be nonnegative")
    for block in ("train", "lyapunov"):
        _positive(cfg, block, ("lr",))
        if cfg[block]["epochs"] < 0:
            raise ConfigError(f"{block}.epochs must be nonnegative")
    if not isinstance(cfg["train"]["whiten"], bool):
        raise ConfigError("train.whiten must be a boolean")
    if not 0.0 <= cfg["lyapunov"]["rho"] < 1.0:
        raise ConfigError("lyapunov.rho must lie in [0, 1)")
    _positive(cfg, "controller", ("u_max",))

    ct = cfg["certify"]
    if not 0.0 <= ct["rho"] < 1.0:
        raise ConfigError("certify.rho must lie in [0, 1)")
    if ct["eps"] < 0 or ct["T"] < 0 or ct["T_prime"] < 0:
        raise ConfigError("certify domain parameters must be nonnegative")
    _positive(cfg, "certify", ("r1", "r2", "dz_density", "dx_density",
                               "dz_grid_density", "alpha0_density",
                               "alpha0_tol", "horizon", "n_trajectories",
                               "n_invariance_seeds", "slice_density",
                               "slice_halfwidth", "zero_set_density",
                               "zero_set_halfwidth", "zero_set_tol"))

    o = cfg["omni"]
    _positive(cfg, "omni", ("alpha", "beta_prime", "u_max", "wheel_radius",
                            "frame_radius", "dt", "duration"))
    if o["d_max"] < 0:
        raise ConfigError("omni.d_max must be nonnegative")
    if o["beta"] > o["beta_prime"]:
        raise ConfigError("omni.beta must not exceed beta_prime")
    for key, n in (("active_start", 3), ("passive_start", 2), ("goal", 2)):
        if not (isinstance(o[key], list) and len(o[key]) == n):
            raise ConfigError(f"omni.{key} must be a list of {n} numbers")


@dataclass
class RunConfig:
    raw: dict

    @property
    def experiment(self) -> str:
        return self.raw["experiment"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def out(self) -> str:
        return self.raw["out"]

    def block(self, name: str) -> dict:
        return copy.deepcopy(self.raw[name])


def load_run_config(path: Optional[str] = None, seed: Optional[int] = None,
                    out: Optional[str] = None) -> RunConfig:
    """DEFAULTS, then the JSON file, then --seed/--out overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        override = load_json(path)
        if not isinstance(override, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        cfg = merge_config(cfg, override)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    _validate(cfg)
    return RunConfig(cfg)
