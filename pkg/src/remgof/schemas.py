"""Shipped JSON schemas for the machine-readable reports.

A deliberately small structural validator (types, required keys, items)
keeps the artifact self-contained; reports written by the CLI must
validate against these schemas, and the test suite enforces it.
"""

from __future__ import annotations

from .errors import ValidationError

_NUMBER = {"type": "number"}
_STRING = {"type": "string"}
_INT = {"type": "integer"}

FIT_SCHEMA = {
    "type": "object",
    "required": ["kind", "gamma_hat", "lambda_hat", "edf", "aic",
                 "log_likelihood", "re_sigma", "seed", "m", "converged",
                 "events_digest", "n_events", "n_actors", "terms",
                 "index_sets"],
    "properties": {
        "kind": {"type": "string", "const": "remgof-fit"},
        "gamma_hat": {"type": "array", "items": _NUMBER},
        "lambda_hat": {"type": "object"},
        "edf": {"type": "object"},
        "aic": _NUMBER,
        "log_likelihood": _NUMBER,
        "re_sigma": {"type": "object"},
        "seed": _INT,
        "m": _INT,
        "converged": {"type": "boolean"},
        "events_digest": _STRING,
        "n_events": _INT,
        "n_actors": _INT,
        "terms": {"type": "array", "items": {"type": "object"}},
        "index_sets": {"type": "object"},
    },
}

GOF_TEST_SCHEMA = {
    "type": "object",
    "required": ["term", "statistic", "statistic_name", "p_value", "kind"],
    "properties": {
        "term": _STRING,
        "statistic": _NUMBER,
        "statistic_name": _STRING,
        "p_value": _NUMBER,
        "kind": _STRING,
        "B": _INT,
        "rank": _INT,
    },
}

GOF_SCHEMA = {
    "type": "object",
    "required": ["kind", "fit_digest", "events_digest", "B", "seed",
                 "tests"],
    "properties": {
        "kind": {"type": "string", "const": "remgof-gof"},
        "fit_digest": _STRING,
        "events_digest": _STRING,
        "B": _INT,
        "seed": _INT,
        "tests": {"type": "array", "items": GOF_TEST_SCHEMA},
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["command", "flags", "seeds", "input_digests",
                 "artifact_version", "wall_clock_seconds"],
    "properties": {
        "command": _STRING,
        "flags": {"type": "object"},
        "seeds": {"type": "object"},
        "input_digests": {"type": "object"},
        "artifact_version": {"type": "object"},
        "wall_clock_seconds": _NUMBER,
    },
}

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["scenario", "variant", "scenario_version", "seed", "B",
                 "cells"],
    "properties": {
        "scenario": _STRING,
        "variant": _STRING,
        "scenario_version": _STRING,
        "seed": _INT,
        "B": _INT,
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["size", "replicates", "rejection_rate",
                             "alpha", "ks_uniformity_pvalue",
                             "pvalues_file"],
            },
        },
    },
}

SCHEMAS = {
    "fit": FIT_SCHEMA,
    "gof": GOF_SCHEMA,
    "manifest": MANIFEST_SCHEMA,
    "summary": SUMMARY_SCHEMA,
}

_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "integer": int,
    "boolean": bool,
    "null": type(None),
}


def _check(obj, schema, path):
    expected = schema.get("type")
    if expected is not None:
        if expected == "number":
            ok = isinstance(obj, (int, float)) and not isinstance(obj, bool)
        elif expected == "integer":
            ok = isinstance(obj, int) and not isinstance(obj, bool)
        else:
            ok = isinstance(obj, _TYPES[expected])
        if not ok:
            raise ValidationError(
                f"{path or '$'}: expected {expected}, got "
                f"{type(obj).__name__}")
    if "const" in schema and obj != schema["const"]:
        raise ValidationError(f"{path or '$'}: expected {schema['const']!r}")
    if isinstance(obj, dict):
        for key in schema.get("required", ()):
            if key not in obj:
                raise ValidationError(f"{path or '$'}: missing key {key!r}")
        for key, sub in schema.get("properties", {}).items():
            if key in obj:
                _check(obj[key], sub, f"{path}.{key}")
    if isinstance(obj, list) and "items" in schema:
        for i, item in enumerate(obj):
            _check(item, schema["items"], f"{path}[{i}]")


def validate(obj, name: str) -> None:
    """Raise :class:`ValidationError` unless ``obj`` fits schema ``name``."""
    if name not in SCHEMAS:
        raise ValidationError(f"unknown schema {name!r}")
    _check(obj, SCHEMAS[name], "")
