"""Container format shared by checkpoints and dataset files.

Layout::

    b"GENCOBIN"                 8-byte magic
    uint64 little-endian        length of the JSON header in bytes
    JSON header (UTF-8)         {"arrays": [{"name", "shape"}...], ...extra keys}
    float64 little-endian       arrays concatenated in header order, C order
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"GENCOBIN"


class FormatError(ValueError):
    pass


def dumps(arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> bytes:
    header = dict(meta or {})
    header["arrays"] = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    return MAGIC + struct.pack("<Q", len(head)) + head + payload


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if blob[:8] != MAGIC:
        raise FormatError("not a GENCOBIN file (bad magic)")
    (n,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    arrays: dict[str, np.ndarray] = {}
    pos = 16 + n
    for entry in header.pop("arrays"):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(blob):
            raise FormatError(f"truncated payload for {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(blob[pos:end], dtype="<f8").astype(np.float64).reshape(shape)
        pos = end
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after payload")
    return arrays, header


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> None:
    atomic_write(path, dumps(arrays, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return loads(Path(path).read_bytes())
