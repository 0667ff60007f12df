"""JSON run configurations: schema, loading and conversion to ProblemSpec.

A config has four sections, and every object rejects unknown keys::

    {"problem": {...}, "scale_factor": {...}, "experiment": {...}, "output": {...}}

Only ``problem`` and ``scale_factor`` are required.  Presets live in the
``presets`` package directory and are loaded by name.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import jsonschema

from . import scale_factor as sfm
from .solver import ConfigError, Grid, InitialData, ProblemSpec, Stepping

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCALE_FACTOR_SCHEMA = {
    "oneOf": [
        _obj({"kind": {"const": "desitter"}, "H": _POS}, ["kind", "H"]),
        _obj({"kind": {"const": "powerlaw"}, "a0": _POS, "alpha": _NUM}, ["kind", "alpha"]),
        _obj({"kind": {"const": "constant"}, "c": _POS}, ["kind"]),
        _obj({"kind": {"const": "tabulated"},
              "table": {"type": "array", "minItems": 2,
                        "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
              "tail_exponent": {"type": ["number", "null"]}}, ["kind", "table"]),
    ]
}

PROBLEM_SCHEMA = _obj({
    "n": {"type": "integer", "minimum": 1},
    "p": _NUM,
    "mu": _NUM,
    "epsilon": _NUM,
    "nonlinearity": {"enum": ["power_u", "power_grad_u", "none"]},
    "validation": {"type": "boolean"},
    "scheme": {"enum": ["auto", "characteristic", "mol"]},
    "data": _obj({"R": _POS, "u0_amplitude": _NUM, "u1_amplitude": _NUM, "center": _NUM}),
    "grid": _obj({"L": _POS, "N": {"type": "integer", "minimum": 5}}),
    "stepping": _obj({"cfl": _POS, "dt_min": _POS, "dt_max": _POS, "kappa": _POS,
                      "threshold": _POS, "t_max": _POS}),
}, ["n", "p", "mu", "epsilon"])

EXPERIMENT_SCHEMA = _obj({
    "eps0": _POS,
    "ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
    "count": {"type": "integer", "minimum": 6},
    "tail": {"type": "integer", "minimum": 4},
    "tolerance": _POS,
    "workers": {"type": "integer", "minimum": 1},
    "refine": {"type": "boolean"},
})

OUTPUT_SCHEMA = _obj({
    "directory": {"type": "string"},
    "snapshots": {"type": "integer", "minimum": 0},
    "snapshot_until": _POS,
    "record_every": {"type": "integer", "minimum": 1},
})

CONFIG_SCHEMA = _obj({
    "description": {"type": "string"},
    "problem": PROBLEM_SCHEMA,
    "scale_factor": SCALE_FACTOR_SCHEMA,
    "experiment": EXPERIMENT_SCHEMA,
    "output": OUTPUT_SCHEMA,
}, ["problem", "scale_factor"])

PRESETS = ("desitter_p2", "desitter_p3_mu0", "flrw_accelerated", "dalembert_validation",
           "desitter_gradient")


def validate_config(cfg: dict) -> None:
    """Raise ConfigError with the offending path if ``cfg`` breaks the schema."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(k) for k in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def load_config(source) -> dict:
    """Config from a path, a preset name, or an already parsed dict."""
    if isinstance(source, dict):
        cfg = copy.deepcopy(source)
    else:
        text = None
        path = Path(source)
        if path.is_file():
            text = path.read_text()
        elif str(source) in PRESETS:
            text = resources.files("dswave.presets").joinpath(f"{source}.json").read_text()
        else:
            raise ConfigError(f"no config file or preset named {str(source)!r}")
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def spec_from_config(cfg: dict) -> ProblemSpec:
    prob = cfg["problem"]
    try:
        sf = sfm.from_dict(cfg["scale_factor"])
        spec = ProblemSpec(
            n=prob["n"], p=float(prob["p"]), mu=float(prob["mu"]),
            epsilon=float(prob["epsilon"]), sf=sf,
            nonlinearity=prob.get("nonlinearity", "power_u"),
            data=InitialData(**prob.get("data", {})),
            grid=Grid(**prob.get("grid", {})),
            stepping=Stepping(**prob.get("stepping", {})),
            validation=prob.get("validation", False),
            scheme=prob.get("scheme", "auto"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return spec


def spec_to_config(spec: ProblemSpec) -> dict:
    """Inverse of ``spec_from_config`` for the problem and scale_factor sections."""
    return {
        "problem": {
            "n": spec.n, "p": spec.p, "mu": spec.mu, "epsilon": spec.epsilon,
            "nonlinearity": spec.nonlinearity.value, "validation": spec.validation,
            "scheme": spec.scheme.value, "data": asdict(spec.data),
            "grid": asdict(spec.grid), "stepping": asdict(spec.stepping),
        },
        "scale_factor": spec.sf.to_dict(),
    }


def with_overrides(cfg: dict, **problem) -> dict:
    """Copy of ``cfg`` with top-level problem fields replaced (None values are skipped)."""
    out = copy.deepcopy(cfg)
    out["problem"].update({k: v for k, v in problem.items() if v is not None})
    validate_config(out)
    return out
