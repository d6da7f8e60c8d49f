"""Canonical text records.

Every persisted value in the package (logics, constraint sets, reports,
run state) is a JSON object dumped with sorted keys and compact
separators, so equal values serialize to identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .errors import CorruptRecordError, RecordError, SchemaVersionError

SCHEMA_VERSION = 1


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def fingerprint(obj: Any) -> str:
    """Stable hash of a JSON-serializable value."""
    return hashlib.sha256(dumps_canonical(obj).encode("utf-8")).hexdigest()


def stamp(record: dict) -> dict:
    """Return a copy carrying the current schema version."""
    out = dict(record)
    out["schema_version"] = SCHEMA_VERSION
    return out


def loads_record(text: str, required: tuple[str, ...] = ()) -> dict:
    """Decode one canonical record, checking version and required fields."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptRecordError(f"unreadable record: {exc}") from exc
    if not isinstance(obj, dict):
        raise RecordError("record is not an object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"schema_version {version!r}, expected {SCHEMA_VERSION}")
    for field in required:
        if field not in obj:
            raise RecordError(f"record missing required field {field!r}")
    return obj
