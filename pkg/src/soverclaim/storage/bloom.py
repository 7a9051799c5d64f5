"""Bloom filter for garbage-collection live-sets.

Sized from a false-positive target; membership has no false negatives by
construction, so a GC round can never delete a live shard. False
positives only retain garbage one extra round.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from ..encoding import b64, b64_decode


@dataclass
class BloomFilter:
    bits: bytearray
    m: int
    k: int

    @classmethod
    def for_items(cls, items: list[str], fp_target: float = 0.01) -> "BloomFilter":
        n = max(1, len(items))
        m = max(8, math.ceil(-n * math.log(fp_target) / (math.log(2) ** 2)))
        k = max(1, round(m / n * math.log(2)))
        bloom = cls(bits=bytearray((m + 7) // 8), m=m, k=k)
        for item in items:
            bloom.add(item)
        return bloom

    def _positions(self, item: str):
        digest = hashlib.sha256(item.encode("utf-8")).digest()
        h1 = int.from_bytes(digest[:8], "little")
        h2 = int.from_bytes(digest[8:16], "little") | 1
        for i in range(self.k):
            yield (h1 + i * h2) % self.m

    def add(self, item: str) -> None:
        for pos in self._positions(item):
            self.bits[pos // 8] |= 1 << (pos % 8)

    def __contains__(self, item: str) -> bool:
        return all(self.bits[pos // 8] & (1 << (pos % 8)) for pos in self._positions(item))

    def to_dict(self) -> dict:
        return {"m": self.m, "k": self.k, "bits": b64(bytes(self.bits))}

    @classmethod
    def from_dict(cls, data: dict) -> "BloomFilter":
        return cls(bits=bytearray(b64_decode(data["bits"])), m=int(data["m"]), k=int(data["k"]))
