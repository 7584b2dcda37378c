"""JSON/CSV output helpers and the schemas every emitted file is checked against."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any

import jsonschema

from .link import CSV_HEADER
from .passive import PATTERN_SCHEMA

SCHEMA_VERSION = 1


def dumps(obj: Any, indent: int = 1, _level: int = 0) -> str:
    """Deterministic JSON with sorted keys and floats at 17 significant digits (NaN -> null)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        s = f"{obj:.17g}"
        return s if any(ch in s for ch in ".en") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):  # numpy scalar
        return dumps(obj.item(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


_num = {"type": "number"}
_num_or_null = {"type": ["number", "null"]}

CHANNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "transmissivity": {"type": "number", "minimum": 0, "maximum": 1},
        "phase_noise_sigma": {"type": "number", "minimum": 0},
        "visibility": {"type": "number", "minimum": 0, "maximum": 1},
        "dark_mean": {"type": "number", "minimum": 0},
        "delay_phase_errors": {"type": "array", "items": _num},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "scheme"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "scheme": {"enum": ["ACTIVE_HADAMARD", "PASSIVE_PATTERN", "REFERENCE_PPM"]},
        "m": {"type": "integer", "minimum": 1, "maximum": 16},
        "M": {"type": "integer", "minimum": 2},
        "n_s": {"type": "number", "minimum": 0},
        "frame": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "guard_bins": {"type": "integer", "minimum": 0},
                "use_polarization_doubling": {"type": "boolean"},
            },
        },
        "channel": CHANNEL_SCHEMA,
        "detector_mode": {"enum": ["A", "B"]},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_s": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                "m": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1, "maximum": 16}},
                "phase_noise_sigma": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
            },
        },
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": (1 << 64) - 1},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
}

REPORT_ROW_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scheme", "m", "M", "N_s", "n_trials", "seed", "ser", "erasure", "invalid", "correct",
                 "mi_bits", "pie", "par", "stderr"],
    "properties": {
        "scheme": {"enum": ["ACTIVE_HADAMARD", "PASSIVE_PATTERN", "REFERENCE_PPM"]},
        "m": {"type": ["integer", "null"]},
        "M": {"type": "integer"},
        "N_s": _num,
        "n_trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "ser": {"type": "number", "minimum": 0, "maximum": 1},
        "erasure": {"type": "number", "minimum": 0, "maximum": 1},
        "invalid": {"type": "number", "minimum": 0, "maximum": 1},
        "correct": {"type": "number", "minimum": 0, "maximum": 1},
        "mi_bits": _num,
        "pie": _num_or_null,
        "par": _num,
        "stderr": {
            "type": "object",
            "required": ["ser", "erasure", "invalid", "correct"],
            "additionalProperties": _num,
        },
    },
}

REPORT_SCHEMA = {"type": "array", "items": REPORT_ROW_SCHEMA}

VERIFY_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "ok", "tolerance", "results"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "ok": {"type": "boolean"},
        "tolerance": _num,
        "results": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["m", "n_modules", "position_offset", "max_leakage", "positions_affine",
                             "passive_max_leakage", "passive_max_power_deviation", "ok"],
                "additionalProperties": False,
                "properties": {
                    "m": {"type": "integer"},
                    "n_modules": {"type": "integer"},
                    "position_offset": {"type": "integer"},
                    "max_leakage": _num,
                    "positions_affine": {"type": "boolean"},
                    "passive_max_leakage": _num,
                    "passive_max_power_deviation": _num,
                    "ok": {"type": "boolean"},
                    "error": {"type": "string"},
                },
            },
        },
    },
}

PAR_HEADER = ["scheme", "m", "M", "frame_len", "par"]


def validate_config(d: dict) -> None:
    jsonschema.validate(d, CONFIG_SCHEMA)


def validate_report_json(text: str) -> list:
    d = json.loads(text)
    jsonschema.validate(d, REPORT_SCHEMA)
    return d


def validate_verify_json(text: str) -> dict:
    d = json.loads(text)
    jsonschema.validate(d, VERIFY_SCHEMA)
    return d


def validate_pattern_json(text: str) -> dict:
    d = json.loads(text)
    jsonschema.validate(d, PATTERN_SCHEMA)
    return d


def _validate_csv(text: str, header: list[str], numeric: list[str]) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    first = text.splitlines()[0].split(",") if text else []
    if first != header:
        raise ValueError(f"unexpected CSV header {first}")
    for r in rows:
        for k in numeric:
            float(r[k])
    return rows


def validate_report_csv(text: str) -> list[dict]:
    return _validate_csv(text, CSV_HEADER, ["M", "N_s", "n_trials", "ser", "erasure", "invalid", "mi_bits", "pie", "par"])


def validate_par_csv(text: str) -> list[dict]:
    return _validate_csv(text, PAR_HEADER, ["M", "frame_len", "par"])
