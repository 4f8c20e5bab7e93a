"""Run configuration schema and bit-stable report serialization."""

from __future__ import annotations

import csv
import json
import math
import os
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

FLOAT_DIGITS = 17

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_numlist = {"type": "array", "items": _num, "minItems": 1}
_phi = {
    "type": "object",
    "additionalProperties": False,
    "required": ["tag"],
    "properties": {
        "tag": {"enum": ["linear", "power", "log-power"]},
        "c": _pos, "exponent": _pos, "shift": _pos,
        "regime": {"enum": ["linear", "sublinear", "superlinear"]},
    },
}
_family = {"enum": ["quadratic", "gauss-exp", "stretched-exp", "power", "potential-exp"]}
_params = {"type": "object", "additionalProperties": _numlist}
_search = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family", "rates"],
    "properties": {
        "family": _family, "params": _params, "rates": _numlist,
        "x0": {"type": ["array", "null"], "items": _num},
        "tail_policy": {"enum": ["raise", "strict", "record"]},
    },
}
_phi_stage = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family", "params", "phi"],
    "properties": {"family": _family,
                   "params": {"type": "object", "additionalProperties": _num},
                   "phi": _phi},
}

CERTIFICATES = ("poincare", "weighted", "converse", "weak", "super", "t2", "w1i", "lsi",
                "drift_criteria")

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "lyapcert run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["potential", "dim", "grid", "certificates"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "potential": {"type": "string"},
        "dim": {"enum": [1, 2]},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["rmax", "nodes"],
            "properties": {
                "rmax": _pos,
                "nodes": {"type": "integer", "minimum": 16},
                "log_refine": {"type": "boolean"},
                "refine_scale": _pos,
                "tail_exponent": {"type": ["number", "null"]},
            },
        },
        "certificates": {"type": "array", "items": {"enum": list(CERTIFICATES)},
                         "uniqueItems": True},
        "linear": _search,
        "phi_sublinear": _phi_stage,
        "phi_superlinear": _phi_stage,
        "t2": _search,
        "w1i": _search,
        "drift_criteria": {
            "type": "object", "additionalProperties": False, "required": ["a", "c", "R"],
            "properties": {"a": _pos, "c": _pos, "R": _pos},
        },
        "s_grid": {
            "type": "object", "additionalProperties": False,
            "properties": {"weak": _numlist, "super": _numlist},
        },
        "slope_window": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "local": {
            "type": "object", "additionalProperties": False,
            "properties": {"nodes": {"type": ["integer", "null"], "minimum": 32}},
        },
        "corpus": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "size": {"type": "integer", "minimum": 1},
                "length_scale": _pos,
                "bounded": {"type": "boolean"},
            },
        },
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {"margin": _pos},
        },
        "oracle": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "spectral": {"type": "boolean"},
                "spectral_nodes": {"type": ["integer", "null"], "minimum": 32},
                "transport": {"type": "boolean"},
                "hwi": {"type": "boolean"},
                "shifts": _numlist,
            },
        },
        "wang": {
            "type": "object", "additionalProperties": False,
            "properties": {"eps": _pos, "radii": _numlist,
                           "nodes": {"type": "integer", "minimum": 16}},
        },
    },
}


class ConfigError(ValueError):
    pass


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    return cfg


def bundled_configs() -> list:
    return sorted(p.name[:-5] for p in resources.files("lyapcert.configs").iterdir()
                  if p.name.endswith(".json"))


def load_config(ref: str) -> dict:
    """Load a config from a path, or a bundled config by bare name."""
    path = Path(ref)
    if path.exists():
        text = path.read_text()
    else:
        name = ref[:-5] if ref.endswith(".json") else ref
        res = resources.files("lyapcert.configs") / f"{name}.json"
        if not res.is_file():
            raise ConfigError(f"no config file or bundled config named {ref!r}")
        text = res.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return validate_config(cfg)


# ------------------------------------------------------------ serialization

def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, f".{FLOAT_DIGITS}g")
    return s if ("." in s or "e" in s) else s + ".0"


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: "
                 f"{_encode(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and
               not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON with sorted keys and every float rendered with 17 significant
    digits; non-finite floats become the strings "nan", "inf", "-inf"."""
    return _encode(obj, indent, 0) + "\n"


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_float(float(v)).strip('"') if isinstance(v, (float, np.floating))
                        else v for v in row])


def write_report(out_dir: Path, report: dict, timings: dict, curves: dict, margins: dict):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(dumps(report))
    (out_dir / "report.timings.json").write_text(dumps(timings))
    for name, (header, rows) in sorted(curves.items()):
        write_csv(out_dir / "curves" / f"{name}.csv", header, rows)
    for name, rows in sorted(margins.items()):
        write_csv(out_dir / "margins" / f"{name}.csv", ("index", "margin", "scale"),
                  [(i, a, s) for i, (a, s) in enumerate(rows)])


def thread_cap(arg=None) -> int:
    """Worker cap from ``--threads`` or ``LYAPCERT_THREADS`` (default 1)."""
    if arg is not None:
        n = int(arg)
    else:
        n = int(os.environ.get("LYAPCERT_THREADS", "1"))
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n
