"""Canonical byte and JSON encodings shared across the ledger and protocol.

Wire payloads are length-prefixed byte tuples: each field is a 4-byte
big-endian length followed by the raw bytes. The encoding is bijective,
so signatures and golden-trace digests are bit-stable across runs.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable

_LEN = struct.Struct(">I")


class EncodingError(ValueError):
    """Raised when a byte payload cannot be decoded."""


def pack_tuple(fields: Iterable[bytes]) -> bytes:
    parts = []
    for field in fields:
        if not isinstance(field, (bytes, bytearray)):
            raise TypeError(f"tuple fields must be bytes, got {type(field).__name__}")
        parts.append(_LEN.pack(len(field)))
        parts.append(bytes(field))
    return b"".join(parts)


def unpack_tuple(data: bytes) -> list[bytes]:
    fields = []
    view = memoryview(data)
    offset = 0
    total = len(view)
    while offset < total:
        if offset + 4 > total:
            raise EncodingError("truncated length prefix")
        (length,) = _LEN.unpack_from(view, offset)
        offset += 4
        if offset + length > total:
            raise EncodingError("field length exceeds payload")
        fields.append(bytes(view[offset : offset + length]))
        offset += length
    return fields


def unpack_exact(data: bytes, count: int) -> list[bytes]:
    fields = unpack_tuple(data)
    if len(fields) != count:
        raise EncodingError(f"expected {count} fields, got {len(fields)}")
    return fields


def u64_be(value: int) -> bytes:
    if value < 0 or value >= 1 << 64:
        raise ValueError(f"value out of u64 range: {value}")
    return value.to_bytes(8, "big")


def read_u64(data: bytes) -> int:
    if len(data) != 8:
        raise EncodingError(f"expected 8-byte integer, got {len(data)} bytes")
    return int.from_bytes(data, "big")


def canonical_json(obj) -> bytes:
    """Serialize with sorted keys and fixed separators; digests as lowercase hex upstream."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()
