"""Canonical binary encoding.

Every hashed or signed structure in the simulator goes through :func:`encode`.
The format is a tagged, length-prefixed encoding of a small set of primitive
shapes (None, bool, int, bytes, str, list/tuple, dict). Structured records
are lowered to tuples in a fixed field order by their own ``to_wire`` methods
before encoding, so the byte layout is a pure function of field values.

Layout (all lengths are 4-byte big-endian unsigned)::

    None   -> b"N"
    bool   -> b"T" | b"F"
    int    -> b"I" len two's-complement-big-endian
    bytes  -> b"B" len data
    str    -> b"S" len utf8
    list   -> b"L" count item*
    dict   -> b"D" count (key value)*      keys sorted by their encoding
"""

from __future__ import annotations

import struct
from typing import Any

_U32 = struct.Struct(">I")


class DecodeError(ValueError):
    pass


def _int_bytes(n: int) -> bytes:
    length = (n.bit_length() + 8) // 8
    return n.to_bytes(length, "big", signed=True)


def _encode_into(value: Any, out: bytearray) -> None:
    if value is None:
        out += b"N"
    elif value is True:
        out += b"T"
    elif value is False:
        out += b"F"
    elif isinstance(value, int):
        raw = _int_bytes(value)
        out += b"I" + _U32.pack(len(raw)) + raw
    elif isinstance(value, (bytes, bytearray, memoryview)):
        raw = bytes(value)
        out += b"B" + _U32.pack(len(raw)) + raw
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"S" + _U32.pack(len(raw)) + raw
    elif isinstance(value, (list, tuple)):
        out += b"L" + _U32.pack(len(value))
        for item in value:
            _encode_into(item, out)
    elif isinstance(value, dict):
        pairs = sorted((encode(k), v) for k, v in value.items())
        out += b"D" + _U32.pack(len(pairs))
        for k, v in pairs:
            out += k
            _encode_into(v, out)
    elif hasattr(value, "to_wire"):
        _encode_into(value.to_wire(), out)
    else:
        raise TypeError(f"cannot canonically encode {type(value).__name__}")


def encode(value: Any) -> bytes:
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _decode_at(data: bytes, pos: int) -> tuple[Any, int]:
    if pos >= len(data):
        raise DecodeError("truncated input")
    tag = data[pos : pos + 1]
    pos += 1
    if tag == b"N":
        return None, pos
    if tag == b"T":
        return True, pos
    if tag == b"F":
        return False, pos
    if tag in (b"I", b"B", b"S", b"L", b"D"):
        if pos + 4 > len(data):
            raise DecodeError("truncated length")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
    else:
        raise DecodeError(f"unknown tag {tag!r} at offset {pos - 1}")
    if tag in (b"I", b"B", b"S"):
        if pos + n > len(data):
            raise DecodeError("truncated payload")
        raw = data[pos : pos + n]
        pos += n
        if tag == b"I":
            return int.from_bytes(raw, "big", signed=True), pos
        if tag == b"B":
            return raw, pos
        return raw.decode("utf-8"), pos
    if tag == b"L":
        items = []
        for _ in range(n):
            item, pos = _decode_at(data, pos)
            items.append(item)
        return tuple(items), pos
    result = {}
    for _ in range(n):
        k, pos = _decode_at(data, pos)
        v, pos = _decode_at(data, pos)
        result[k] = v
    return result, pos


def decode(data: bytes) -> Any:
    """Inverse of :func:`encode`. Lists come back as tuples."""
    value, pos = _decode_at(bytes(data), 0)
    if pos != len(data):
        raise DecodeError(f"{len(data) - pos} trailing bytes")
    return value
