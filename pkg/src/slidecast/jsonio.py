"""Canonical JSON serialization and atomic file writes.

All JSON artifacts are written key-sorted with a fixed layout so that repeated
runs produce byte-identical files. Writes go through a temp file in the target
directory followed by os.replace, so readers never observe a partial file.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Any

SCHEMA_VERSION = 1


def canonical_dumps(obj: Any) -> str:
    """Serialize to the canonical text form: sorted keys, 2-space indent, LF."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def dumps_compact(obj: Any) -> str:
    """Single-line canonical form, used for JSON-lines files."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_bytes(path: str, data: bytes) -> None:
    _atomic_write_bytes(path, data)


def write_text(path: str, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str, obj: Any) -> None:
    _atomic_write_bytes(path, canonical_dumps(obj).encode("utf-8"))


def write_jsonl(path: str, rows: list[Any]) -> None:
    body = "".join(dumps_compact(row) + "\n" for row in rows)
    _atomic_write_bytes(path, body.encode("utf-8"))


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def read_jsonl(path: str) -> list[Any]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
