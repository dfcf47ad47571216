"""Canonical JSON serialization for stable hashes and golden timelines.

Rules: object keys sorted, no whitespace, floats rendered at 9 significant
digits with -0 normalized to 0, non-finite floats rejected. The output is
byte-stable across runs and platforms, which is what golden verification
and graph hashing rely on.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite float in canonical serialization: {x!r}")
    if x == 0.0:
        x = 0.0  # collapse -0.0
    text = format(x, ".9g")
    # ".9g" can emit bare exponents like "1e-07"; that is valid JSON already.
    return text


def dumps(value: Any) -> str:
    """Serialize ``value`` to canonical JSON text."""
    out: list[str] = []
    _write(value, out)
    return "".join(out)


def _write(value: Any, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_format_float(value))
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise TypeError(f"canonical JSON keys must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _write(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    else:
        raise TypeError(f"unsupported type in canonical serialization: {type(value)!r}")


def digest(value: Any) -> str:
    """SHA-256 hex digest of the canonical serialization of ``value``."""
    return hashlib.sha256(dumps(value).encode("utf-8")).hexdigest()
