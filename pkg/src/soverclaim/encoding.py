"""Shared serialization helpers: canonical JSON, base58, base64url, framing.

Canonical JSON (sorted keys, UTF-8, no insignificant whitespace) is the
form that gets hashed and signed everywhere in the platform, so any two
processes serializing the same structure must produce identical bytes.
"""

from __future__ import annotations

import base64
import json
import struct
from typing import Any

B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(B58_ALPHABET)}


def canonical_json(obj: Any) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def from_json(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def b58encode(data: bytes) -> str:
    num = int.from_bytes(data, "big")
    out = []
    while num > 0:
        num, rem = divmod(num, 58)
        out.append(B58_ALPHABET[rem])
    # Leading zero bytes map to the alphabet's zero symbol.
    pad = 0
    for byte in data:
        if byte == 0:
            pad += 1
        else:
            break
    return "1" * pad + "".join(reversed(out))


def b58decode(text: str) -> bytes:
    num = 0
    for char in text:
        if char not in _B58_INDEX:
            raise ValueError(f"invalid base58 character {char!r}")
        num = num * 58 + _B58_INDEX[char]
    raw = num.to_bytes((num.bit_length() + 7) // 8, "big")
    pad = 0
    for char in text:
        if char == "1":
            pad += 1
        else:
            break
    return b"\x00" * pad + raw


def b64u(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).decode("ascii").rstrip("=")


def b64u_decode(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + pad)


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64_decode(text: str) -> bytes:
    return base64.b64decode(text)


def pack_fields(*fields: bytes) -> bytes:
    """Length-prefixed field framing; u32 little-endian lengths."""
    parts = []
    for field in fields:
        parts.append(struct.pack("<I", len(field)))
        parts.append(field)
    return b"".join(parts)


def unpack_fields(data: bytes, count: int, offset: int = 0) -> tuple[list[bytes], int]:
    """Inverse of pack_fields. Returns (fields, next_offset)."""
    fields = []
    for _ in range(count):
        if offset + 4 > len(data):
            raise ValueError("truncated field length")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise ValueError("truncated field body")
        fields.append(data[offset : offset + length])
        offset += length
    return fields, offset


def sign_input(*parts: bytes) -> bytes:
    """Unambiguous concatenation of byte strings for signing/hashing."""
    return pack_fields(*parts)
