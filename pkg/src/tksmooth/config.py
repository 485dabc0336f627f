"""JSON model configuration for the command-line smoother.

See ``CONFIG_SCHEMA`` for the accepted document; unknown keys are rejected.
Index sets in ``partition`` are 0-based.
"""
import importlib
import json

import jsonschema
import numpy as np

from .experiments import VanDerPolProcess, _spline_matrices
from .gauss_newton import SmootherConfig
from .model import (FunctionMeasurement, LinearMeasurement, LinearProcess, NoisePartition,
                    PrecisionSpec, ProblemSpec)
from .presets import PRESET_NAMES, make_preset

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_matrix_or_stack = {"oneOf": [_matrix, {"type": "array", "items": _matrix}]}
_vector = {"type": "array", "items": {"type": "number"}}
_index_set = {"type": "array", "items": {"type": "integer", "minimum": 0}, "uniqueItems": True}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tksmooth model configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "g0", "Qinv", "Rinv"],
    "properties": {
        "model": {
            "oneOf": [
                {"type": "object", "additionalProperties": False,
                 "required": ["type", "G", "H"],
                 "properties": {"type": {"const": "linear"}, "G": _matrix_or_stack,
                                "H": _matrix_or_stack}},
                {"type": "object", "additionalProperties": False,
                 "required": ["type", "dt"],
                 "properties": {"type": {"const": "spline"}, "dt": {"type": "number", "exclusiveMinimum": 0},
                                "H": _matrix}},
                {"type": "object", "additionalProperties": False,
                 "required": ["type", "dt"],
                 "properties": {"type": {"const": "vdp"}, "dt": {"type": "number", "exclusiveMinimum": 0},
                                "mu": {"type": "number"}, "H": _matrix}},
                {"type": "object", "additionalProperties": False,
                 "required": ["type", "factory"],
                 "properties": {"type": {"const": "python"}, "factory": {"type": "string"}}},
            ]
        },
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "g0": _vector,
        "z": {"type": "array", "items": {"oneOf": [{"type": "number"}, _vector]}},
        "Qinv": _matrix_or_stack,
        "Rinv": _matrix_or_stack,
        "preset": {"enum": list(PRESET_NAMES)},
        "partition": {
            "type": "object", "additionalProperties": False,
            "properties": {"proc_student": _index_set, "meas_student": _index_set},
        },
        "dof": {
            "type": "object", "additionalProperties": False,
            "properties": {"r": {"type": "number", "exclusiveMinimum": 0},
                           "s": {"type": "number", "exclusiveMinimum": 0}},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "epsilon": {"type": "number", "minimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_iter": {"type": "integer", "minimum": 0},
                "max_backtrack": {"type": "integer", "minimum": 0},
            },
        },
    },
    "not": {"required": ["preset", "partition"]},
}


class ConfigError(ValueError):
    """Invalid model configuration."""


def load_config(source):
    """Read and validate a config from a path or an already parsed dict."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from None
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {exc.message}") from None
    return doc


def _load_factory(ref):
    mod, _, attr = ref.partition(":")
    if not attr:
        raise ConfigError(f"factory must look like 'module:callable', got {ref!r}")
    try:
        return getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load factory {ref!r}: {exc}") from None


def measurement_dim(doc):
    model = doc["model"]
    if "m" in doc:
        return doc["m"]
    if model["type"] == "python":
        return int(np.atleast_2d(np.asarray(doc["Rinv"], dtype=float)).shape[-1])
    if "H" in model:
        return int(np.asarray(model["H"], dtype=float).shape[-2])
    return 1


def build_models(doc, z):
    """Process and measurement models for measurements ``z`` ``(N, m)``."""
    model = doc["model"]
    g0 = np.asarray(doc["g0"], dtype=float)
    n = g0.size
    kind = model["type"]
    if kind == "linear":
        return LinearProcess(model["G"], g0), LinearMeasurement(model["H"], z)
    if kind == "spline":
        if n != 2:
            raise ConfigError("spline model needs a 2-dimensional g0")
        G, _ = _spline_matrices(model["dt"])
        return LinearProcess(G, g0), LinearMeasurement(model.get("H", [[0.0, 1.0]]), z)
    if kind == "vdp":
        if n != 2:
            raise ConfigError("vdp model needs a 2-dimensional g0")
        proc = VanDerPolProcess(model.get("mu", 2.0), model["dt"], g0)
        return proc, LinearMeasurement(model.get("H", [[1.0, 0.0]]), z)
    factory = _load_factory(model["factory"])
    proc, h, h_jac = factory(g0)
    return proc, FunctionMeasurement(h, h_jac, z)


def build_partition(doc, n, m):
    dof = doc.get("dof", {})
    r, s = dof.get("r", 4.0), dof.get("s", 4.0)
    if "partition" in doc:
        part = doc["partition"]
        return NoisePartition(n, m, tuple(part.get("proc_student", ())),
                              tuple(part.get("meas_student", ())), r, s)
    return make_preset(doc.get("preset", "l2"), n, m, r, s)


def build_problem(doc, z, missing=None):
    """Assemble a :class:`ProblemSpec` from a validated config and measurements.

    ``missing`` is an optional boolean ``(N, m)`` mask; flagged components get
    zero rows and columns in the measurement precision.
    """
    z = np.asarray(z, dtype=float)
    N, m = z.shape
    if "N" in doc and doc["N"] != N:
        raise ConfigError(f"config declares N={doc['N']} but data has {N} rows")
    proc, meas = build_models(doc, z)
    if "n" in doc and doc["n"] != proc.n:
        raise ConfigError(f"config declares n={doc['n']} but g0 has {proc.n} entries")
    if meas.m != m:
        raise ConfigError(f"model measures {meas.m} components, data has {m}")
    prec = PrecisionSpec.build(doc["Qinv"], doc["Rinv"], N, proc.n, m)
    Rinv = prec.Rinv.copy()
    if missing is not None:
        for k, i in zip(*np.nonzero(missing)):
            Rinv[k, i, :] = 0.0
            Rinv[k, :, i] = 0.0
    part = build_partition(doc, proc.n, m)
    return ProblemSpec(proc, meas, part, PrecisionSpec(prec.Qinv, Rinv))


def solver_config(doc, **overrides):
    opts = dict(doc.get("solver", {}))
    opts.update({k: v for k, v in overrides.items() if v is not None})
    return SmootherConfig(**opts)
