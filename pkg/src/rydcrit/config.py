"""Run configuration: a small YAML schema validated before any work starts."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .basis import HARD, OPEN, PENALTY, PERIODIC, ChainGeometry
from .dmrg import DmrgConfig
from .hamiltonian import HamiltonianParams, critical_preset
from .measurement import PatternError, expand_pattern, parse_pattern


class ConfigError(ValueError):
    pass


# key -> default; a nested dict is a sub-schema
SCHEMA: dict[str, Any] = {
    "model": "ising",
    "params": {"Omega": None, "Delta": None, "V1": None, "V2": None, "edge_detuning_shift": None},
    "geometry": {"length": 16, "boundary": PERIODIC, "constraint_mode": HARD},
    "solver": {
        "backend": "auto",
        "tol": 1e-10,
        "dmrg": {"chi_max": 250, "entropy_tol": 1e-5, "energy_tol": 1e-7, "max_sweeps": 30,
                 "min_sweeps": 2, "truncation_cutoff": 1e-10, "chi_init": 8},
    },
    "measurement": {"pattern": None, "kind": "auto", "beta": None, "theta": None},
    "analysis": {"operator": "sigma", "fit": "auto", "window": 0.8, "min_points": 4,
                 "two_cell_average": False},
    "output": "rydcrit-out",
    "seed": 0,
}

MODELS = ("ising", "tci", "custom")
BACKENDS = ("auto", "dense", "lanczos", "dmrg")
KINDS = ("auto", "projective", "weak", "generalized", "none")
OPERATORS = ("sigma", "epsilon", "epsilon_z2")
FITS = ("auto", "power-law", "obc-sine", "obc-derivative", "none")


def _merge(schema: dict, data: dict, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where or 'top level'}; "
                          f"allowed: {sorted(schema)}")
    out = {}
    for key, default in schema.items():
        path = f"{where}.{key}" if where else key
        if isinstance(default, dict):
            out[key] = _merge(default, data.get(key) or {}, path)
        else:
            out[key] = data.get(key, copy.deepcopy(default))
    return out


def _choice(value, allowed, name):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {list(allowed)}, got {value!r}")


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        cfg = cls(_merge(SCHEMA, data or {}, ""))
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_yaml(Path(path).read_text())

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def override(self, dotted: str, value, validate: bool = True) -> "RunConfig":
        """Return a copy with ``a.b.c = value`` applied (flags win over the file)."""
        data = copy.deepcopy(self.data)
        node = data
        parts = dotted.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config section {dotted!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[parts[-1]] = value
        if validate:
            return RunConfig.from_dict(data)
        return RunConfig(data)

    @property
    def measurement_kind(self) -> str:
        m = self.data["measurement"]
        if m["kind"] == "auto":
            return "projective" if m["pattern"] is not None else "none"
        return m["kind"]

    def __getitem__(self, key):
        return self.data[key]

    def validate(self) -> None:
        d = self.data
        _choice(d["model"], MODELS, "model")
        g = d["geometry"]
        _choice(g["boundary"], (PERIODIC, OPEN), "geometry.boundary")
        _choice(g["constraint_mode"], (HARD, PENALTY), "geometry.constraint_mode")
        if not isinstance(g["length"], int) or g["length"] < 1:
            raise ConfigError("geometry.length must be a positive integer")
        _choice(d["solver"]["backend"], BACKENDS, "solver.backend")
        m = d["measurement"]
        _choice(m["kind"], KINDS, "measurement.kind")
        if m["kind"] in ("projective", "weak") and m["pattern"] is None:
            raise ConfigError(f"measurement.kind={m['kind']} needs measurement.pattern")
        if m["kind"] in ("weak", "generalized") and m["beta"] is None:
            raise ConfigError(f"measurement.kind={m['kind']} needs measurement.beta")
        if m["kind"] == "generalized" and m["theta"] is None:
            raise ConfigError("measurement.kind=generalized needs measurement.theta")
        a = d["analysis"]
        _choice(a["operator"], OPERATORS, "analysis.operator")
        _choice(a["fit"], FITS, "analysis.fit")
        if not 0 < float(a["window"]) <= 1:
            raise ConfigError("analysis.window must lie in (0, 1]")
        if d["model"] == "custom":
            missing = [k for k in ("Omega", "Delta") if d["params"][k] is None]
            if missing:
                raise ConfigError(f"model=custom needs params {missing}")
        try:
            g = self.geometry()
            self.params()
            self.dmrg()
            if m["pattern"] is not None:
                expand_pattern(parse_pattern(m["pattern"]), g)
        except PatternError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def geometry(self) -> ChainGeometry:
        g = self.data["geometry"]
        return ChainGeometry(g["length"], g["boundary"], g["constraint_mode"])

    def params(self) -> HamiltonianParams:
        overrides = {k: v for k, v in self.data["params"].items() if v is not None}
        if self.data["model"] == "custom":
            base = HamiltonianParams()
            from dataclasses import replace
            p = replace(base, **overrides)
        else:
            p = critical_preset(self.data["model"], **overrides)
        if p.Omega <= 0:
            raise ConfigError("params.Omega must be positive")
        return p

    def dmrg(self) -> DmrgConfig:
        return DmrgConfig(**self.data["solver"]["dmrg"])
