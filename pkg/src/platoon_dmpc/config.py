"""
Scenario configuration, presets and the YAML config file format.

A config file is a nested mapping; every key is optional and falls back to
the ``reference`` preset. ``platoon-dmpc config --preset reference`` prints the
complete document.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import markov, topology
from .dmpc import ControllerParams
from .dynamics import PLANT_LEVELS, LeaderProfile, PlantParams, constant_speed_leader
from .riccati import DEFAULT_P, ObserverDesign, terminal_gain


class ConfigError(ValueError):
    pass


REFERENCE_PRESET = {
    "n_followers": 5,
    "d0": 20.0,
    "dt": 0.1,
    "dt_sub": 0.01,
    "horizon": 10,
    "t_end": 100.0,
    "weights": {
        "R": 0.1,
        "F": [[5.0, 2.5, 1.0], [5.0, 2.5, 1.0], [5.0, 2.5, 1.0], [5.0, 2.5, 1.0], [0.0, 0.0, 0.0]],
        "S": [5.0, 2.5, 1.0],
        "G": [50.0, 25.0, 10.0],
    },
    "beta": 0.6,
    "input_bounds": [-3.0, 3.0],
    "topology": {
        "modes": ["LPF", "LPF-failure", "PF", "PF-failure"],
        "mu": markov.DEFAULT_MU.tolist(),
        "initial_mode": 1,
    },
    "leader": {"profile": "reference"},
    "initial_positions": "zero-error",
    "plant": {"level": "ideal", "params": {
        "m": 1500.0, "eta": 0.9, "r_w": 0.3, "C_A": 0.5, "g": 9.8, "f": 0.01, "delta": 0.4,
    }},
    "observer": {"P": DEFAULT_P.tolist(), "psi_exponent": 0.25, "varrho0": 1.0},
    "terminal_gain": {"mode": "fixed", "law": "scheduled", "margin": 20.0, "penalty": 1.0e4},
    "eps_floor": 0.01,
    "slack_weight": 1.0e6,
    "slack_linear_weight": 0.0,
    "max_stale": 5,
    "qp_tol": 1.0e-6,
    "seed": 1,
}

PRESETS = {"reference": REFERENCE_PRESET}


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("params",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ScenarioConfig:
    raw: dict = field(default_factory=lambda: preset("reference"))

    def __post_init__(self):
        self.raw = _merge(REFERENCE_PRESET, self.raw)
        self._validate()

    # -- construction

    @classmethod
    def from_preset(cls, name: str = "reference", **overrides):
        return cls(_merge(preset(name), overrides))

    @classmethod
    def load(cls, path_or_name) -> "ScenarioConfig":
        """Load a YAML file, or a preset when given a preset name."""
        if str(path_or_name) in PRESETS:
            return cls.from_preset(str(path_or_name))
        path = Path(path_or_name)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base = data.pop("preset", "reference")
        return cls(_merge(preset(base), data))

    def replace(self, **overrides) -> "ScenarioConfig":
        return ScenarioConfig(_merge(self.raw, overrides))

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False, default_flow_style=None)

    def hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    # -- validation

    def _validate(self):
        r = self.raw
        n = r["n_followers"]
        if not isinstance(n, int) or n < 1:
            raise ConfigError("n_followers must be a positive integer")
        dt, dt_sub, t_end = r["dt"], r["dt_sub"], r["t_end"]
        if dt <= 0 or dt_sub <= 0:
            raise ConfigError("dt and dt_sub must be positive")
        if abs(round(dt / dt_sub) * dt_sub - dt) > 1e-9:
            raise ConfigError(f"dt_sub={dt_sub} does not divide dt={dt}")
        if abs(round(t_end / dt) * dt - t_end) > 1e-9:
            raise ConfigError(f"t_end={t_end} is not a multiple of dt={dt}")
        if r["plant"]["level"] not in PLANT_LEVELS:
            raise ConfigError(f"plant level must be one of {PLANT_LEVELS}")
        if r["initial_positions"] not in ("zero-error", "ahead-at-rest"):
            raise ConfigError("initial_positions must be 'zero-error' or 'ahead-at-rest'")
        bad = markov.generator_violations(r["topology"]["mu"])
        if bad:
            raise ConfigError(f"topology.mu: {bad[0]}")
        if len(r["topology"]["mu"]) != len(r["topology"]["modes"]):
            raise ConfigError("topology.mu size must match the number of modes")
        self.topologies()  # raises on malformed graphs
        self.controller_params(1)

    # -- derived objects

    @property
    def n(self) -> int:
        return self.raw["n_followers"]

    @property
    def n_steps(self) -> int:
        return int(round(self.raw["t_end"] / self.raw["dt"]))

    @property
    def n_sub(self) -> int:
        return int(round(self.raw["dt"] / self.raw["dt_sub"]))

    @property
    def mu(self) -> np.ndarray:
        return np.array(self.raw["topology"]["mu"], dtype=float)

    def topologies(self) -> topology.TopologySet:
        graphs = []
        for spec in self.raw["topology"]["modes"]:
            if isinstance(spec, str):
                graphs.append(topology.builtin(spec, self.n))
            elif isinstance(spec, dict):
                nbs = spec.get("in_neighbors")
                if nbs is None or len(nbs) != self.n:
                    raise ConfigError("custom topology needs one in_neighbors list per follower")
                graphs.append(topology.DirectedGraph.from_in_neighbors(
                    nbs, spec.get("leader", []), name=spec.get("name", "custom")))
            else:
                raise ConfigError(f"cannot read topology mode {spec!r}")
        return topology.TopologySet(tuple(graphs))

    def leader(self) -> LeaderProfile:
        spec = self.raw["leader"]
        kind = spec.get("profile", "reference")
        if kind == "reference":
            return LeaderProfile()
        if kind == "constant":
            return constant_speed_leader(float(spec.get("speed", 20.0)), float(spec.get("p0", 0.0)))
        if kind == "pieces":
            return LeaderProfile(tuple(tuple(pc) for pc in spec["pieces"]),
                                 float(spec.get("p0", 0.0)), float(spec.get("v0", 0.0)))
        raise ConfigError(f"unknown leader profile {kind!r}")

    def plant_params(self) -> PlantParams:
        return PlantParams(**self.raw["plant"]["params"])

    def observer_design(self) -> ObserverDesign:
        obs = self.raw["observer"]
        if obs.get("P") is not None:
            return ObserverDesign.from_P(np.array(obs["P"], dtype=float))
        return ObserverDesign.from_Q(np.array(obs.get("Q", np.eye(3)), dtype=float))

    def terminal_gain(self, A_d, B_d) -> np.ndarray:
        tg = self.raw["terminal_gain"]
        weights = None
        if "Q" in tg:
            weights = (np.array(tg["Q"], dtype=float), np.atleast_2d(tg.get("R", 0.1)))
        return terminal_gain(tg["mode"], A_d, B_d, weights)

    def controller_params(self, i: int) -> ControllerParams:
        r = self.raw
        w = r["weights"]
        return ControllerParams(
            R=float(w["R"]),
            F=_diag_for(w["F"], i, self.n),
            S=_diag_for(w["S"], i, self.n),
            G=_diag_for(w["G"], i, self.n),
            d0=float(r["d0"]),
            beta=float(r["beta"]),
            u_min=float(r["input_bounds"][0]),
            u_max=float(r["input_bounds"][1]),
            N_p=int(r["horizon"]),
            eps_floor=float(r["eps_floor"]),
            slack_weight=float(r["slack_weight"]),
            slack_linear_weight=float(r["slack_linear_weight"]),
            max_stale=int(r["max_stale"]),
            terminal_law=str(r["terminal_gain"]["law"]),
            terminal_margin=float(r["terminal_gain"]["margin"]),
            terminal_penalty=float(r["terminal_gain"]["penalty"]),
        )


def _diag_for(spec, i, n) -> np.ndarray:
    """A weight is either one diagonal shared by all vehicles or one per vehicle."""
    arr = np.array(spec, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (3,):
            raise ConfigError(f"weight diagonal must have 3 entries, got {arr.shape}")
        return np.diag(arr)
    if arr.shape != (n, 3):
        raise ConfigError(f"per-vehicle weight must have shape ({n}, 3), got {arr.shape}")
    return np.diag(arr[i - 1])
