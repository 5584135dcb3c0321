"""Binary checkpoints: magic bytes, format version, JSON header (config
echo, generator states, scalar counters, array index), raw float64 array
payload, and a CRC32 trailer. Loading validates magic, version, checksum,
and array shapes, so truncated or corrupted files fail loudly instead of
resuming garbage.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CheckpointError", "Checkpoint", "save_checkpoint", "load_checkpoint"]

MAGIC = b"CIMARLCK"
VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, corrupted, or incompatible checkpoint file."""


@dataclass
class Checkpoint:
    """Everything needed to resume a run bit-for-bit.

    `config` is the run's config echo, `rng_states` the
    `Generator.bit_generator.state` dict per named stream, `scalars` small
    counters (episode index, buffer cursor, optimizer step counts, recent
    returns), and `arrays` every parameter/moment/buffer array by name.
    """

    config: dict
    rng_states: dict
    scalars: dict
    arrays: dict = field(default_factory=dict)


def save_checkpoint(path: str, ckpt: Checkpoint):
    index = []
    blobs = []
    for name in sorted(ckpt.arrays):
        arr = np.ascontiguousarray(ckpt.arrays[name])
        index.append({"name": name, "dtype": str(arr.dtype),
                      "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({
        "config": ckpt.config,
        "rng_states": ckpt.rng_states,
        "scalars": ckpt.scalars,
        "arrays": index,
    }).encode("utf-8")
    body = struct.pack("<Q", len(header)) + header + b"".join(blobs)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(body)))
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    if len(raw) < len(MAGIC) + 16 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    (body_len,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + body_len + 4:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body = raw[off:off + body_len]
    (crc,) = struct.unpack_from("<I", raw, off + body_len)
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch, file corrupted")
    (header_len,) = struct.unpack_from("<Q", body, 0)
    try:
        header = json.loads(body[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad header: {exc}") from None
    arrays = {}
    cursor = 8 + header_len
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if cursor + nbytes > len(body):
            raise CheckpointError(f"{path}: array {entry['name']} exceeds payload")
        arrays[entry["name"]] = np.frombuffer(
            body[cursor:cursor + nbytes], dtype=dtype).reshape(shape).copy()
        cursor += nbytes
    if cursor != len(body):
        raise CheckpointError(f"{path}: {len(body) - cursor} stray bytes in payload")
    return Checkpoint(config=header["config"], rng_states=header["rng_states"],
                      scalars=header["scalars"], arrays=arrays)
