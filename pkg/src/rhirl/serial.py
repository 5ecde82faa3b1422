"""Deterministic file containers.

A single binary layout serves demo files and checkpoints: magic, version,
a JSON header (sorted keys), then the declared float64 arrays as raw
little-endian bytes.  Writing the same payload always produces the same
bytes, which is what the reproducibility contract requires.  CSV/JSON-lines
writers use repr-based float formatting for the same reason.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

_VERSION = 1


def write_container(path: str | Path, magic: bytes, header: dict,
                    arrays: dict[str, np.ndarray]) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    header = dict(header)
    header["arrays"] = [[name, list(arr.shape)] for name, arr in arrays.items()]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path: str | Path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(data) < 16 or data[:8] != magic:
        raise FormatError(f"{path}: bad magic, not a {magic.decode(errors='replace')} file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(data) < 16 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    offset = 16 + hlen
    arrays = {}
    for name, shape in header.pop("arrays", []):
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if len(data) < offset + nbytes:
            raise FormatError(f"{path}: truncated payload for array {name!r}")
        arrays[name] = np.frombuffer(data[offset:offset + nbytes], dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: trailing bytes after payload")
    return header, arrays


def fmt_value(v) -> str:
    """Canonical text for a cell: repr for floats (round-trip exact)."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: str | Path, fieldnames: list[str], rows: list[dict]) -> None:
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(fmt_value(row.get(name)) for name in fieldnames))
    Path(path).write_text("\n".join(lines) + "\n")


def write_jsonl(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(_jsonable(row), sort_keys=True) + "\n")


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
