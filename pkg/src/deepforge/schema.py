"""Minimal JSON-schema checker covering the subset the tool contracts use.

Supported keywords: type (string or list), properties, required,
additionalProperties, items, enum, anyOf. Returns a list of problems; empty
means the value validates.
"""

from __future__ import annotations

from typing import Any

_TYPE_CHECKS = {
    "object": lambda v: isinstance(v, dict),
    "array": lambda v: isinstance(v, list),
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "null": lambda v: v is None,
}


def validate(value: Any, schema: dict, path: str = "$") -> list[str]:
    problems: list[str] = []

    if "anyOf" in schema:
        branches = schema["anyOf"]
        branch_problems = [validate(value, branch, path) for branch in branches]
        if not any(not p for p in branch_problems):
            problems.append(f"{path}: value matches no anyOf branch")
        return problems

    if "enum" in schema and value not in schema["enum"]:
        problems.append(f"{path}: value not in enum {schema['enum']!r}")

    declared = schema.get("type")
    if declared is not None:
        types = declared if isinstance(declared, list) else [declared]
        if not any(_TYPE_CHECKS.get(t, lambda _: False)(value) for t in types):
            problems.append(f"{path}: expected type {declared}, got {type(value).__name__}")
            return problems

    if isinstance(value, dict):
        for key in schema.get("required", []):
            if key not in value:
                problems.append(f"{path}: missing required property {key!r}")
        props = schema.get("properties", {})
        for key, sub in props.items():
            if key in value:
                problems.extend(validate(value[key], sub, f"{path}.{key}"))
        if schema.get("additionalProperties") is False:
            for key in value:
                if key not in props:
                    problems.append(f"{path}: unexpected property {key!r}")

    if isinstance(value, list) and "items" in schema:
        for i, item in enumerate(value):
            problems.extend(validate(item, schema["items"], f"{path}[{i}]"))

    return problems
