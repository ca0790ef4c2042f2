"""Experiment manifests: strict JSON schema, defaults and model construction.

A manifest is ``{"experiment", "config", "options", "output", "seed"}``.
``config`` describes the physical model with the fixed field names
``lattice, dt, h | h_schedule, steps, noise, observable, seed``; ``options``
holds the per-experiment knobs.  Unknown keys anywhere are errors.
"""

from __future__ import annotations

import copy
import math

import jsonschema

from .model_builder import (ExperimentModel, ObservableSpec, TrotterCircuit, build_chain,
                            build_noise_preset, build_square_lattice, build_wheel_spokes,
                            cosine_schedule)
from .sim_engines import MAX_PAULI_QUBITS, MAX_STATEVECTOR_QUBITS, config_hash

EXPERIMENTS = {
    "quench": "noisy and noiseless S_x^(k) time series (hardware quench, decay rates)",
    "sigma": "exact Sigma_n and D_n sector series by Pauli propagation",
    "mitigate": "LIN / EXP mitigated values against exact noisy data",
    "string-length": "string length histograms and L, L_rel, L_abs, L_dil versus s",
    "validity-sweep": "Delta O(t) for standard, time-dependent, central, Y-state, large-dt",
    "free-fermion": "1D chain decay rates from Gaussian trajectories against lambda",
    "correspondence": "Trotter-error correlators <K_q(s) O(t*) K_p(t)>",
    "toy-model": "toy string-length distributions and the random-sign interference model",
}

STANDARD = {"dt": 0.1, "h": 1.0, "epsilon": 1e-3, "window": 20}

_INT = {"type": "integer"}
_NUM = {"type": "number"}
_INITIAL = {"enum": ["plus", "zero", "y"]}
_SIZE = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2,
         "maxItems": 2}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "lattice": _obj({
        "rows": {"type": "integer", "minimum": 1},
        "cols": {"type": "integer", "minimum": 1},
        "periodic": {"type": "boolean"},
        "wheel_hub": {"type": "integer", "minimum": 0},
    }, ["rows", "cols"]),
    "dt": {"type": "number", "exclusiveMinimum": 0},
    "h": _NUM,
    "h_schedule": _obj({
        "kind": {"const": "cosine"},
        "amplitude": _NUM,
        "period": {"type": "number", "exclusiveMinimum": 0},
    }, ["kind", "amplitude", "period"]),
    "steps": {"type": "integer", "minimum": 0},
    "noise": _obj({
        "preset": {"enum": ["single_pauli_X", "depolarizing_1q", "h1_1_two_qubit"]},
        "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
    }),
    "observable": _obj({
        "kind": {"enum": ["sx", "sy", "sz", "parity"]},
        "k": {"type": "integer", "minimum": 1},
    }),
    "seed": {"type": "integer", "minimum": 0},
})
CONFIG_SCHEMA["not"] = {"required": ["h", "h_schedule"]}

OPTION_SCHEMAS = {
    "quench": _obj({
        "engine": {"enum": ["auto", "statevector", "density", "trajectories"]},
        "trajectories": {"type": "integer", "minimum": 1},
        "initial": _INITIAL,
        "k_values": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "parity": {"type": "boolean"},
        "window": {"type": "integer", "minimum": 0, "multipleOf": 2},
    }),
    "sigma": _obj({
        "order": {"type": "integer", "minimum": 0, "maximum": 2},
        "initial": _INITIAL,
    }),
    "mitigate": _obj({
        "method": {"enum": ["lin", "exp", "both"]},
        "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                "maximum": 1}, "minItems": 1},
        "initial": _INITIAL,
    }),
    "string-length": _obj({
        "t": {"type": "integer", "minimum": 0},
        "sizes": {"type": "array", "items": _SIZE, "minItems": 1},
        "initial": _INITIAL,
    }),
    "validity-sweep": _obj({
        "sizes": {"type": "array", "items": _SIZE, "minItems": 1},
        "variants": {"type": "array", "minItems": 1, "items": {
            "enum": ["standard", "time-dependent", "central", "y-initial", "large-dt"]}},
        "t": {"type": "integer", "minimum": 1},
        "window": {"type": "integer", "minimum": 0, "multipleOf": 2},
        "lengths": {"type": "boolean"},
    }),
    "free-fermion": _obj({
        "sizes": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "fields": {"type": "array", "items": _NUM, "minItems": 1},
        "eta": {"type": "number", "minimum": 0},
        "engine": {"enum": ["trajectories", "exact"]},
        "trajectories": {"type": "integer", "minimum": 1},
        "t_window": {"type": "array", "items": {"type": "number", "minimum": 0},
                     "minItems": 2, "maxItems": 2},
        "record_every": {"type": "integer", "minimum": 1},
    }),
    "correspondence": _obj({
        "t_star": {"type": "integer", "minimum": 1},
        "kraus": {"type": "string", "pattern": "^[IXYZ]{2}$"},
        "site": {"type": "integer", "minimum": 0},
        "bond": {"type": "integer", "minimum": 0},
        "s_bonds": {"type": "integer", "minimum": 0},
        "time_stride": {"type": "integer", "minimum": 1},
        "off_diagonal_gap": {"type": "integer", "minimum": 0},
    }),
    "toy-model": _obj({
        "sizes": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "samples": {"type": "integer", "minimum": 1},
    }),
}

OPTION_DEFAULTS = {
    "quench": {"engine": "auto", "trajectories": 200, "initial": "plus", "k_values": [],
               "parity": False, "window": STANDARD["window"]},
    "sigma": {"order": 1, "initial": "plus"},
    "mitigate": {"method": "both", "initial": "plus"},
    "string-length": {"t": 100, "initial": "plus"},
    "validity-sweep": {"sizes": [[2, 3], [2, 4], [2, 5], [3, 4]],
                       "variants": ["standard", "time-dependent", "central", "y-initial",
                                    "large-dt"],
                       "t": 100, "window": STANDARD["window"], "lengths": False},
    "free-fermion": {"sizes": [100], "eta": 0.1, "engine": "trajectories",
                     "trajectories": 1000, "t_window": [10.0, 20.0], "record_every": 1},
    "correspondence": {"t_star": 30, "kraus": "ZY", "bond": 0, "s_bonds": 15,
                       "time_stride": 1, "off_diagonal_gap": 5},
    "toy-model": {"sizes": [16, 20], "samples": 2000},
}

MANIFEST_SCHEMA = _obj({
    "experiment": {"enum": sorted(EXPERIMENTS)},
    "config": {"type": "object"},
    "options": {"type": "object"},
    "output": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
}, ["experiment"])


class ConfigError(ValueError):
    """Invalid manifest; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid manifest:\n" + "\n".join(f"  - {e}" for e in self.errors))


class BudgetError(ConfigError):
    """The requested system size exceeds an engine limit."""


def _schema_errors(instance, schema, where):
    v = jsonschema.Draft202012Validator(schema)
    out = []
    for err in sorted(v.iter_errors(instance), key=lambda e: [str(p) for p in e.absolute_path]):
        path = "/".join(str(p) for p in err.absolute_path)
        loc = f"{where}/{path}" if path else where
        if err.validator == "not":
            out.append(f"{loc}: give either 'h' or 'h_schedule', not both")
        else:
            out.append(f"{loc}: {err.message}")
    return out


def validate_config(raw: dict) -> dict:
    """Fill standard-setup defaults into a model config; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError(["config: expected an object"])
    errors = _schema_errors(raw, CONFIG_SCHEMA, "config")
    if errors:
        raise ConfigError(errors)
    cfg = copy.deepcopy(raw)
    lat = {"rows": 3, "cols": 4, "periodic": True}
    lat.update(cfg.get("lattice", {}))
    out = {"lattice": lat, "dt": float(cfg.get("dt", STANDARD["dt"]))}
    if "h_schedule" in cfg:
        hs = cfg["h_schedule"]
        out["h_schedule"] = {"kind": "cosine", "amplitude": float(hs["amplitude"]),
                             "period": float(hs["period"])}
    else:
        out["h"] = float(cfg.get("h", STANDARD["h"]))
    out["steps"] = int(cfg.get("steps", 110))
    noise = {"preset": "depolarizing_1q", "epsilon": STANDARD["epsilon"]}
    noise.update(cfg.get("noise", {}))
    noise["epsilon"] = float(noise["epsilon"])
    out["noise"] = noise
    obs = {"kind": "sx", "k": 1}
    obs.update(cfg.get("observable", {}))
    out["observable"] = obs
    out["seed"] = int(cfg.get("seed", 0))
    errors = []
    if lat["periodic"] and min(lat["rows"], lat["cols"]) < 2 and lat["rows"] != 1:
        errors.append("config/lattice: periodic lattices need rows, cols >= 2 "
                      "(rows = 1 selects a periodic chain)")
    n = lat["rows"] * lat["cols"]
    if "wheel_hub" in lat and lat["wheel_hub"] >= n:
        errors.append(f"config/lattice/wheel_hub: site {lat['wheel_hub']} outside 0..{n - 1}")
    if obs["kind"] != "parity" and obs["k"] > n:
        errors.append(f"config/observable/k: k={obs['k']} exceeds N={n}")
    if errors:
        raise ConfigError(errors)
    return out


def validate_manifest(raw, seed: int | None = None) -> dict:
    """Normalized manifest with defaults filled; raises ConfigError or BudgetError."""
    if not isinstance(raw, dict):
        raise ConfigError(["manifest: expected a JSON object"])
    errors = _schema_errors(raw, MANIFEST_SCHEMA, "manifest")
    if errors:
        raise ConfigError(errors)
    exp = raw["experiment"]
    errors = []
    try:
        cfg = validate_config(raw.get("config", {}))
    except ConfigError as err:
        errors += err.errors
        cfg = None
    opts_raw = raw.get("options", {})
    errors += _schema_errors(opts_raw, OPTION_SCHEMAS[exp], "options")
    if errors:
        raise ConfigError(errors)
    opts = copy.deepcopy(OPTION_DEFAULTS[exp])
    opts.update(copy.deepcopy(opts_raw))
    if seed is None:
        seed = raw.get("seed", cfg["seed"])
    elif seed < 0:
        raise ConfigError([f"seed: {seed} is negative"])
    cfg["seed"] = int(seed)
    if exp == "mitigate" and "epsilons" not in opts:
        opts["epsilons"] = [cfg["noise"]["epsilon"]]
    if exp == "string-length" and "sizes" not in opts:
        opts["sizes"] = [[cfg["lattice"]["rows"], cfg["lattice"]["cols"]]]
    if exp == "free-fermion" and "fields" not in opts:
        opts["fields"] = [cfg.get("h", STANDARD["h"])]
    man = {"experiment": exp, "config": cfg, "options": opts, "seed": int(seed),
           "output": raw.get("output", f"out/{exp}")}
    check_budget(man)
    return man


def manifest_hash(man: dict) -> str:
    """Hash of everything that determines the outputs (the output path is excluded)."""
    return config_hash({k: v for k, v in man.items() if k != "output"})


# ---------------------------------------------------------------- budgets

def _n_sites(rows, cols):
    return rows * cols


def check_budget(man: dict) -> None:
    exp, cfg, opts = man["experiment"], man["config"], man["options"]
    n = _n_sites(cfg["lattice"]["rows"], cfg["lattice"]["cols"])
    exact = (f"exact density / Pauli-basis engines are limited to N <= {MAX_PAULI_QUBITS}; "
             f"statevector and trajectory engines to N <= {MAX_STATEVECTOR_QUBITS}")
    problems = []

    def need_exact(size, what):
        if size > MAX_PAULI_QUBITS:
            problems.append(f"{what}: N={size} too large ({exact})")

    def need_sv(size, what):
        if size > MAX_STATEVECTOR_QUBITS:
            problems.append(f"{what}: N={size} too large ({exact})")

    if exp == "quench":
        eng = opts["engine"]
        eps = cfg["noise"]["epsilon"]
        if eng == "density" or (eng == "auto" and eps > 0 and n <= MAX_PAULI_QUBITS):
            need_exact(n, "quench (density)")
        else:
            need_sv(n, f"quench ({eng})")
    elif exp in ("sigma", "mitigate"):
        need_exact(n, exp)
    elif exp == "string-length":
        for r, c in opts["sizes"]:
            need_exact(r * c, f"string-length {r}x{c}")
    elif exp == "validity-sweep":
        for r, c in opts["sizes"]:
            need_exact(r * c, f"validity-sweep {r}x{c}")
    elif exp == "correspondence":
        need_sv(n, "correspondence")
    if problems:
        raise BudgetError(problems)


# ---------------------------------------------------------------- model construction

def build_lattice(lat: dict):
    rows, cols, periodic = lat["rows"], lat["cols"], lat.get("periodic", True)
    g = build_chain(cols, periodic) if rows == 1 else build_square_lattice(rows, cols, periodic)
    if "wheel_hub" in lat:
        g = build_wheel_spokes(g, lat["wheel_hub"])
    return g


def field_of(cfg: dict):
    hs = cfg.get("h_schedule")
    if hs is None:
        return cfg["h"]
    return cosine_schedule(hs["amplitude"], hs["period"])


def observable_of(cfg: dict) -> ObservableSpec:
    kind = cfg["observable"]["kind"]
    if kind == "parity":
        return ObservableSpec("parity", basis="X")
    return ObservableSpec("sx", cfg["observable"]["k"], kind[1].upper())


def noise_of(cfg: dict):
    nz = cfg["noise"]
    theta = None
    if nz["preset"] == "h1_1_two_qubit":
        # exp(-i dt ZZ) is a ZZ rotation by 2 dt
        theta = min(2.0 * cfg["dt"], math.pi / 2)
    return build_noise_preset(nz["preset"], nz["epsilon"], theta=theta)


def build_model(cfg: dict, initial: str = "plus") -> ExperimentModel:
    circuit = TrotterCircuit(build_lattice(cfg["lattice"]), cfg["dt"], field_of(cfg),
                             cfg["steps"])
    return ExperimentModel(circuit, noise_of(cfg), observable_of(cfg), initial)
