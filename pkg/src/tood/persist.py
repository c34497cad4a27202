"""Single-file model container.

Layout, in order::

    magic           8 bytes   b"TOODFRST"
    header_length   4 bytes   unsigned little-endian
    header          UTF-8 JSON object, keys sorted:
                      format_version, n_estimators, n_features, class_count,
                      config (ForestConfig echo), node_counts (per tree),
                      payload_bytes, checksum (SHA-256 hex of the payload)
    payload         per tree, in tree order, the raw little-endian arrays
                      feature         int32   [nodes]
                      threshold       float64 [nodes]
                      left            int32   [nodes]
                      right           int32   [nodes]
                      leaf_id         int32   [nodes]
                      n_node_samples  int64   [nodes]
                      value           float64 [nodes, class_count] row-major

Thresholds are stored as raw IEEE-754 bytes, so they round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .forest import FORMAT_VERSION, ForestConfig, ForestModel, Tree

MAGIC = b"TOODFRST"

_FIELDS = (
    ("feature", "<i4"),
    ("threshold", "<f8"),
    ("left", "<i4"),
    ("right", "<i4"),
    ("leaf_id", "<i4"),
    ("n_node_samples", "<i8"),
    ("value", "<f8"),
)


class ModelFormatError(ValueError):
    """The file is not a readable model (bad magic, truncation, checksum)."""


class ModelVersionError(ModelFormatError):
    """The file was written with an unsupported format version."""


def _payload(m: ForestModel) -> bytes:
    chunks = []
    for tree in m.trees:
        for name, dtype in _FIELDS:
            chunks.append(np.ascontiguousarray(getattr(tree, name), dtype=dtype).tobytes())
    return b"".join(chunks)


def _header(m: ForestModel, payload: bytes) -> dict:
    return {
        "format_version": m.format_version,
        "n_estimators": m.n_estimators,
        "n_features": m.n_features,
        "class_count": m.class_count,
        "config": m.config.to_dict(),
        "node_counts": [t.node_count for t in m.trees],
        "payload_bytes": len(payload),
        "checksum": hashlib.sha256(payload).hexdigest(),
    }


def to_bytes(m: ForestModel) -> bytes:
    payload = _payload(m)
    head = json.dumps(_header(m, payload), sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + payload


def model_checksum(m: ForestModel) -> str:
    return hashlib.sha256(to_bytes(m)).hexdigest()


def save(m: ForestModel, path) -> None:
    Path(path).write_bytes(to_bytes(m))


def from_bytes(blob: bytes) -> ForestModel:
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a model file (bad magic or truncated header)")
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    if len(blob) < start + hlen:
        raise ModelFormatError("truncated header")
    try:
        head = json.loads(blob[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt header: {exc}") from None
    version = head.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format_version {version!r} (this build reads {FORMAT_VERSION})"
        )
    payload = blob[start + hlen :]
    if len(payload) != head["payload_bytes"]:
        raise ModelFormatError(
            f"truncated or padded payload: {len(payload)} bytes, header says {head['payload_bytes']}"
        )
    if hashlib.sha256(payload).hexdigest() != head["checksum"]:
        raise ModelFormatError("checksum mismatch; file is corrupt")

    class_count = int(head["class_count"])
    offset = 0
    trees = []
    for nodes in head["node_counts"]:
        arrays = {}
        for name, dtype in _FIELDS:
            count = nodes * (class_count if name == "value" else 1)
            width = np.dtype(dtype).itemsize * count
            a = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
            offset += width
            arrays[name] = a.reshape(nodes, class_count) if name == "value" else a
        trees.append(Tree(**arrays))
    cfg = ForestConfig(**head["config"])
    return ForestModel(trees, cfg, int(head["n_features"]), class_count, version)


def load(path) -> ForestModel:
    return from_bytes(Path(path).read_bytes())
