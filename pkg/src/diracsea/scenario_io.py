"""Scenario-file ingestion: JSON schema, validation, object construction.

A scenario file fixes the mode, the scale function (or rotation-count
scenario), command-specific run options, and the three tolerances.
Unknown keys are rejected everywhere so typos fail loudly instead of
silently running with defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import jsonschema

from .bloch import Scenario, build_six_segment, build_twelve_segment, \
    make_scenario, perturb_scenario
from .errors import InvalidParameter
from .model import (
    DEFAULT_GAP_TOL,
    DEFAULT_ODE_TOL,
    DEFAULT_QUAD_TOL,
    Mode,
    PiecewiseConstantScale,
    dust_scale,
    constant_scale,
    smooth_table_scale,
)

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mode", "scale"],
    "properties": {
        "mode": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lambda", "mass", "tau0"],
            "properties": {
                "lambda": _NUMBER,
                "mass": _POSITIVE,
                "tau0": {"type": "number", "minimum": 0,
                         "exclusiveMaximum": float(np.pi)},
                "physical": {"type": "boolean"},
            },
        },
        "scale": {
            "type": "object",
            "oneOf": [
                {
                    "additionalProperties": False,
                    "required": ["kind", "r_max"],
                    "properties": {"kind": {"const": "dust"},
                                   "r_max": _POSITIVE},
                },
                {
                    "additionalProperties": False,
                    "required": ["kind", "r"],
                    "properties": {"kind": {"const": "constant"},
                                   "r": _POSITIVE},
                },
                {
                    "additionalProperties": False,
                    "required": ["kind", "taus", "values", "r_max"],
                    "properties": {
                        "kind": {"const": "smooth_table"},
                        "taus": {"type": "array", "items": _NUMBER,
                                 "minItems": 4},
                        "values": {"type": "array", "items": _NUMBER,
                                   "minItems": 4},
                        "r_max": _POSITIVE,
                    },
                },
                {
                    "additionalProperties": False,
                    "required": ["kind", "breakpoints", "values"],
                    "properties": {
                        "kind": {"const": "piecewise"},
                        "breakpoints": {"type": "array", "items": _NUMBER,
                                        "minItems": 2},
                        "values": {"type": "array", "items": _POSITIVE,
                                   "minItems": 1},
                    },
                },
                {
                    "additionalProperties": False,
                    "required": ["kind", "segments"],
                    "properties": {
                        "kind": {"const": "segments"},
                        "segments": {
                            "type": "array",
                            "minItems": 1,
                            "items": {"type": "array", "minItems": 2,
                                      "maxItems": 2, "items": _POSITIVE},
                        },
                    },
                },
                {
                    "additionalProperties": False,
                    "required": ["kind", "name"],
                    "properties": {
                        "kind": {"const": "preset"},
                        "name": {"enum": ["six_segment", "twelve_segment"]},
                        "perturb": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["index", "dp"],
                            "properties": {"index": {"type": "integer",
                                                     "minimum": 0},
                                           "dp": _NUMBER},
                        },
                    },
                },
            ],
        },
        "run": {"type": "object"},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ode_tol": {"type": "number", "exclusiveMinimum": 1e-14,
                            "exclusiveMaximum": 1e-4},
                "quad_tol": {"type": "number", "exclusiveMinimum": 1e-14,
                             "maximum": 1e-3},
                "gap_tol": {"type": "number", "exclusiveMinimum": 1e-12,
                            "maximum": 0.1},
            },
        },
    },
}


@dataclass(frozen=True)
class Tolerances:
    ode_tol: float = DEFAULT_ODE_TOL
    quad_tol: float = DEFAULT_QUAD_TOL
    gap_tol: float = DEFAULT_GAP_TOL


@dataclass(frozen=True)
class ScenarioConfig:
    mode: Mode
    scale: object          # ScaleFunction or Scenario
    run: dict
    tolerances: Tolerances

    @property
    def is_rotation_scenario(self) -> bool:
        return isinstance(self.scale, Scenario)

    def plain_scale(self):
        """The underlying scale function, whatever the scale kind."""
        return self.scale.to_scale() if self.is_rotation_scenario else self.scale


def parse_scenario(doc: dict) -> ScenarioConfig:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InvalidParameter(f"scenario file invalid: {exc.message}") from exc

    mdoc = doc["mode"]
    mode = Mode(lam=float(mdoc["lambda"]), mass=float(mdoc["mass"]),
                tau0=float(mdoc["tau0"]),
                physical=bool(mdoc.get("physical", True)))

    sdoc = doc["scale"]
    kind = sdoc["kind"]
    if kind == "dust":
        scale = dust_scale(float(sdoc["r_max"]))
    elif kind == "constant":
        scale = constant_scale(float(sdoc["r"]))
    elif kind == "smooth_table":
        scale = smooth_table_scale(sdoc["taus"], sdoc["values"],
                                   float(sdoc["r_max"]))
    elif kind == "piecewise":
        scale = PiecewiseConstantScale(breakpoints=tuple(sdoc["breakpoints"]),
                                       values=tuple(sdoc["values"]))
    elif kind == "segments":
        if mode.tau0 != 0.0:
            raise InvalidParameter("rotation scenarios require tau0 = 0")
        scale = make_scenario(mode, [(r, p) for r, p in sdoc["segments"]])
    elif kind == "preset":
        if mode.tau0 != 0.0:
            raise InvalidParameter("rotation scenarios require tau0 = 0")
        builder = {"six_segment": build_six_segment,
                   "twelve_segment": build_twelve_segment}[sdoc["name"]]
        scale = builder(lam=mode.lam, mass=mode.mass)
        if "perturb" in sdoc:
            scale = perturb_scenario(scale, int(sdoc["perturb"]["index"]),
                                     float(sdoc["perturb"]["dp"]))
    else:  # pragma: no cover - schema forbids
        raise InvalidParameter(f"unknown scale kind {kind!r}")

    tdoc = doc.get("tolerances", {})
    tols = Tolerances(
        ode_tol=float(tdoc.get("ode_tol", DEFAULT_ODE_TOL)),
        quad_tol=float(tdoc.get("quad_tol", DEFAULT_QUAD_TOL)),
        gap_tol=float(tdoc.get("gap_tol", DEFAULT_GAP_TOL)),
    )
    return ScenarioConfig(mode=mode, scale=scale, run=dict(doc.get("run", {})),
                          tolerances=tols)


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidParameter(f"scenario file is not valid JSON: {exc}") from exc
    return parse_scenario(doc)
