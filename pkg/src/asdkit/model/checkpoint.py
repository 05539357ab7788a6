"""Versioned, byte-deterministic checkpoint container.

Layout: magic line, little-endian uint64 header length, JSON header
(model spec, array manifest sorted by name, optional metadata), then the
raw array bytes in manifest order. Identical (spec, params, meta) always
produce identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .spec import ModelSpec

MAGIC = b"ASDKITCKPT1\n"


def save_checkpoint(path, spec: ModelSpec, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    names = sorted(params)
    arrays = []
    offset = 0
    for name in names:
        a = np.ascontiguousarray(params[name])
        arrays.append(
            {"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset}
        )
        offset += a.nbytes
    header = json.dumps(
        {"spec": json.loads(spec.to_json()), "arrays": arrays, "meta": meta or {}},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for name in names:
            f.write(np.ascontiguousarray(params[name]).tobytes())


def load_checkpoint(path) -> tuple[ModelSpec, dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValidationError(f"{path}: not a checkpoint file")
    n = struct.unpack("<Q", data[len(MAGIC) : len(MAGIC) + 8])[0]
    header = json.loads(data[len(MAGIC) + 8 : len(MAGIC) + 8 + n])
    spec = ModelSpec.from_json(json.dumps(header["spec"]))
    base = len(MAGIC) + 8 + n
    params = {}
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = base + entry["offset"]
        arr = np.frombuffer(data[start : start + count * dt.itemsize], dtype=dt)
        params[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return spec, params, header.get("meta", {})
