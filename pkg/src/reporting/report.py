# src/reporting/report.py
from __future__ import annotations

import json
import logging
import math
from typing import Any, Dict, Iterator, List, Mapping, Tuple

import numpy as np

from src.utils.io_utils import rows_to_csv_text

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.12e"
FORMATS = ("json", "text", "csv")

Results = Mapping[str, Any]


# ==============================
# Normalization
# ==============================

def to_plain(value: Any) -> Any:
    """numpy scalars/arrays, tuples and objects with to_dict() turned into plain JSON types."""
    if hasattr(value, "to_dict") and callable(value.to_dict):
        return to_plain(value.to_dict())
    if isinstance(value, Mapping):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def format_scalar(value: Any) -> str:
    """JSON literal of a leaf; floats as %.12e, non-finite floats as null."""
    if isinstance(value, float):
        return FLOAT_FORMAT % value if math.isfinite(value) else "null"
    return json.dumps(value, ensure_ascii=False)


def _canonical_json(value: Any, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(k, ensure_ascii=False)}: {_canonical_json(value[k], indent + 1)}" for k in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(pad + _canonical_json(v, indent + 1) for v in value) + "\n" + end + "]"
    return format_scalar(value)


def flatten(value: Any, prefix: str = "") -> Iterator[Tuple[str, Any]]:
    """(dotted key, leaf) pairs in sorted key order; list items get their index."""
    if isinstance(value, dict):
        for key in sorted(value):
            yield from flatten(value[key], f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(value, list):
        if not value:
            yield prefix, []
        for i, item in enumerate(value):
            yield from flatten(item, f"{prefix}.{i}")
    else:
        yield prefix, value


def _leaf_text(value: Any) -> str:
    if isinstance(value, list):
        return "[]"
    return format_scalar(value) if not isinstance(value, str) else value


# ==============================
# Emit
# ==============================

def build_document(results: Results) -> Dict[str, Any]:
    doc = to_plain(dict(results or {}))
    doc["schema_version"] = SCHEMA_VERSION
    return doc


def emit_report(results: Results, fmt: str = "json") -> bytes:
    """
    Serialize a result set deterministically.

    json: sorted keys, floats %.12e, non-finite floats as null, `schema_version`.
    text: one `section.key: value` line per leaf.
    csv:  `section,key,value` rows, section being the top-level key.

    Raises:
        ValueError: unknown format.
    """
    if fmt not in FORMATS:
        raise ValueError(f"Unknown report format {fmt!r}; expected one of {FORMATS}")
    doc = build_document(results)
    if fmt == "json":
        return (_canonical_json(doc) + "\n").encode("utf-8")
    if fmt == "text":
        lines = [f"{key}: {_leaf_text(value)}" for key, value in flatten(doc)]
        return ("\n".join(lines) + "\n").encode("utf-8")
    rows: List[Dict[str, str]] = []
    for key, value in flatten(doc):
        section, _, rest = key.partition(".")
        rows.append({"section": section, "key": rest, "value": _leaf_text(value)})
    return rows_to_csv_text(rows, ("section", "key", "value")).encode("utf-8")
