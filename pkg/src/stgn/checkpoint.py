"""Binary checkpoint format.

Layout: b"STGN", uint32 version, uint64 header length, UTF-8 JSON header,
then a little-endian float64 payload. The header's ``tensors`` directory
lists (name, shape, offset) with offsets counted in float64 elements from
the start of the payload. The header also carries the config hash, the RNG
state and any caller metadata (optimizer step, model geometry).
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"STGN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path, tensors: dict, config_hash: str, rng_state=None, meta=None):
    directory, offset = [], 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64)
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = {
        "config_hash": config_hash,
        "rng_state": rng_state,
        "meta": meta or {},
        "tensors": directory,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = f"{path}.tmp"
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(hbytes)))
        fh.write(hbytes)
        for entry in directory:
            fh.write(np.ascontiguousarray(tensors[entry["name"]], dtype="<f8").tobytes())
    os.replace(tmp, path)


def load(path):
    """Returns (tensors, header)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {blob[:4]!r})")
    version, hlen = struct.unpack("<IQ", blob[4:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    payload = np.frombuffer(blob, dtype="<f8", offset=16 + hlen)
    tensors = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        off = entry["offset"]
        if off + n > payload.size:
            raise CheckpointError(f"{path}: tensor {entry['name']} runs past the payload")
        tensors[entry["name"]] = payload[off : off + n].reshape(entry["shape"]).astype(np.float64)
    return tensors, header
