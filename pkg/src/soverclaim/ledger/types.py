"""Ledger wire types: transactions, blocks, Merkle roots, chain checks."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .. import crypto
from ..encoding import b64, b64_decode, canonical_json, sign_input


class TxnType(str, Enum):
    NYM = "NYM"
    SCHEMA = "SCHEMA"
    CRED_DEF = "CRED_DEF"
    REV_ENTRY = "REV_ENTRY"
    AUDIT_ANCHOR = "AUDIT_ANCHOR"


def _b64_strict(text: str) -> bytes:
    """Reject base64 that is not the canonical encoding of its bytes, so
    no two distinct serializations decode to the same chain content."""
    raw = b64_decode(text)
    if b64(raw) != text:
        raise ValueError("non-canonical base64 in ledger record")
    return raw


def _hex_strict(text: str) -> bytes:
    raw = bytes.fromhex(text)
    if raw.hex() != text:
        raise ValueError("non-canonical hex in ledger record")
    return raw


@dataclass
class LedgerTransaction:
    txn_type: TxnType
    payload: dict
    submitter: str
    signature: bytes
    timestamp: int  # unix ms
    seq_no: int = 0  # assigned at commit

    def signed_portion(self) -> bytes:
        return sign_input(
            self.txn_type.value.encode(),
            canonical_json(self.payload),
            self.submitter.encode(),
            struct.pack("<Q", self.timestamp),
        )

    @property
    def txn_id(self) -> str:
        return crypto.sha256(self.signed_portion()).hex()

    def to_dict(self) -> dict:
        return {
            "seq_no": self.seq_no,
            "type": self.txn_type.value,
            "payload": self.payload,
            "submitter": self.submitter,
            "signature": b64(self.signature),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LedgerTransaction":
        return cls(
            txn_type=TxnType(data["type"]),
            payload=dict(data["payload"]),
            submitter=data["submitter"],
            signature=_b64_strict(data["signature"]),
            timestamp=int(data["timestamp"]),
            seq_no=int(data["seq_no"]),
        )


def build_txn(
    txn_type: TxnType | str,
    payload: dict,
    submitter: str,
    keypair: crypto.KeyPair,
    timestamp: int,
) -> LedgerTransaction:
    txn = LedgerTransaction(
        txn_type=TxnType(txn_type),
        payload=payload,
        submitter=submitter,
        signature=b"",
        timestamp=timestamp,
    )
    txn.signature = crypto.sign(keypair.secret_key, txn.signed_portion())
    return txn


def merkle_root(txns: Iterable[LedgerTransaction]) -> bytes:
    leaves = [crypto.sha256(canonical_json(t.to_dict())) for t in txns]
    if not leaves:
        return crypto.sha256(b"empty-block")
    while len(leaves) > 1:
        if len(leaves) % 2:
            leaves.append(leaves[-1])
        leaves = [crypto.sha256(leaves[i] + leaves[i + 1]) for i in range(0, len(leaves), 2)]
    return leaves[0]


@dataclass
class Block:
    height: int
    prev_hash: bytes
    txn_root: bytes
    txns: list[LedgerTransaction]
    proposer: int
    attempt: int
    timestamp: int
    quorum_sigs: list[tuple[int, bytes]] = field(default_factory=list)
    genesis: dict | None = None  # validator registry + trustee, height 0 only

    def header_dict(self) -> dict:
        header = {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "txn_root": self.txn_root.hex(),
            "proposer": self.proposer,
            "attempt": self.attempt,
            "timestamp": self.timestamp,
        }
        if self.genesis is not None:
            header["genesis"] = self.genesis
        return header

    def block_hash(self) -> bytes:
        return crypto.sha256(canonical_json(self.header_dict()))

    def to_dict(self) -> dict:
        data = self.header_dict()
        data["txns"] = [t.to_dict() for t in self.txns]
        data["quorum_sigs"] = [
            {"validator": vid, "sig": b64(sig)}
            for vid, sig in sorted(self.quorum_sigs)
        ]
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Block":
        return cls(
            height=int(data["height"]),
            prev_hash=_hex_strict(data["prev_hash"]),
            txn_root=_hex_strict(data["txn_root"]),
            txns=[LedgerTransaction.from_dict(t) for t in data["txns"]],
            proposer=int(data["proposer"]),
            attempt=int(data["attempt"]),
            timestamp=int(data["timestamp"]),
            quorum_sigs=[(int(s["validator"]), _b64_strict(s["sig"])) for s in data["quorum_sigs"]],
            genesis=data.get("genesis"),
        )


def check_quorum_sigs(block: Block, validator_keys: Mapping[int, bytes], quorum: int) -> bool:
    seen = set()
    block_hash = block.block_hash()
    for vid, sig in block.quorum_sigs:
        if vid in seen or vid not in validator_keys:
            return False
        if not crypto.verify(validator_keys[vid], block_hash, sig):
            return False
        seen.add(vid)
    return len(seen) >= quorum


def verify_chain_blocks(blocks: list[Block], quorum: int) -> bool:
    """Full structural check: hash chain from genesis, Merkle roots, dense
    seq_nos, and >= quorum validator signatures on every block."""
    if not blocks or blocks[0].height != 0 or blocks[0].genesis is None:
        return False
    try:
        validator_keys = {
            int(v["id"]): b64_decode(v["verkey"]) for v in blocks[0].genesis["validators"]
        }
    except (KeyError, TypeError, ValueError):
        return False

    prev_hash = b"\x00" * 32
    next_seq = 1
    for i, block in enumerate(blocks):
        if block.height != i or block.prev_hash != prev_hash:
            return False
        if block.txn_root != merkle_root(block.txns):
            return False
        if not check_quorum_sigs(block, validator_keys, quorum):
            return False
        for txn in block.txns:
            if txn.seq_no != next_seq:
                return False
            next_seq += 1
        prev_hash = block.block_hash()
    return True


def verify_chain_dicts(block_dicts: list[dict], quorum: int) -> bool:
    """verify_chain over raw serialized blocks; malformed input is False."""
    try:
        blocks = [Block.from_dict(b) for b in block_dicts]
        return verify_chain_blocks(blocks, quorum)
    except Exception:
        return False
