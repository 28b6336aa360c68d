"""Checkpoint files: a versioned, byte-deterministic parameter dump.

Layout:
    line 1: magic ``ONTOPARSE-CKPT 1``
    line 2: JSON metadata (sorted keys)
    line 3: JSON manifest ``[[name, [shape...]], ...]`` in sorted name order
    then the raw little-endian float64 buffers concatenated in that order.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = "ONTOPARSE-CKPT 1"


def save_checkpoint(path, arrays: Dict[str, np.ndarray], meta: dict):
    manifest = [[name, list(arrays[name].shape)] for name in sorted(arrays)]
    header = (MAGIC + "\n"
              + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n"
              + json.dumps(manifest, separators=(",", ":")) + "\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        for name, _ in manifest:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    first = blob.index(b"\n")
    if blob[:first].decode("utf-8") != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    second = blob.index(b"\n", first + 1)
    third = blob.index(b"\n", second + 1)
    meta = json.loads(blob[first + 1:second])
    manifest = json.loads(blob[second + 1:third])
    arrays = {}
    offset = third + 1
    for name, shape in manifest:
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        arr = np.frombuffer(blob[offset:offset + size], dtype="<f8").reshape(shape)
        arrays[name] = arr.astype(np.float64)
        offset += size
    return meta, arrays
