"""Binary container files: magic + JSON header + raw little-endian blocks.

One format serves graphs, datasets, and checkpoints; the header's "kind"
field says which. Arrays are written back-to-back in C order after the
header; the header carries enough dtype/shape information to reconstruct
them bitwise. Writes go through a temp file + rename so a crashed run never
leaves a half-written container behind.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"RNOPSB01"
VERSION = 1

_ALLOWED_DTYPES = {"<i8", "<f8"}


class FormatError(Exception):
    pass


def _norm_dtype(arr):
    dt = arr.dtype.newbyteorder("<")
    s = dt.str
    if s not in _ALLOWED_DTYPES:
        raise FormatError(f"unsupported block dtype {arr.dtype}")
    return s


def write(path, kind, meta, blocks):
    """blocks: ordered dict name -> ndarray (int64 or float64)."""
    entries = []
    payload = []
    for name, arr in blocks.items():
        # note asarray, not ascontiguousarray: the latter turns 0-d into (1,)
        arr = np.asarray(arr, order="C")
        s = _norm_dtype(arr)
        entries.append({"name": name, "dtype": s, "shape": list(arr.shape)})
        payload.append(arr.astype(s, copy=False).tobytes())
    header = {"kind": kind, "version": VERSION, "meta": meta, "blocks": entries}
    hbytes = json.dumps(header).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        for chunk in payload:
            f.write(chunk)
    os.replace(tmp, path)


def read(path, expect_kind=None):
    """Returns (kind, meta, blocks dict). Bitwise inverse of write()."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic bytes (not a renops container "
                          "or unsupported version)")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if off + hlen > len(raw):
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt header: {e}")
    off += hlen
    if header.get("version") != VERSION:
        raise FormatError(f"{path}: container version {header.get('version')} "
                          f"!= supported {VERSION}")
    kind = header.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise FormatError(f"{path}: kind {kind!r}, expected {expect_kind!r}")
    blocks = {}
    for entry in header["blocks"]:
        dt = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dt.itemsize * int(np.prod(shape)) if shape else dt.itemsize
        if off + nbytes > len(raw):
            raise FormatError(f"{path}: truncated block {entry['name']!r}")
        arr = np.frombuffer(raw[off:off + nbytes], dtype=dt).reshape(shape)
        blocks[entry["name"]] = arr.copy()
        off += nbytes
    return kind, header.get("meta", {}), blocks


def describe(path):
    """Header summary for the CLI `info` subcommand."""
    kind, meta, blocks = read(path)
    return {
        "kind": kind,
        "meta": meta,
        "blocks": {k: {"dtype": str(v.dtype), "shape": list(v.shape)}
                   for k, v in blocks.items()},
    }
