"""Encrypted, ledger-anchored audit trail with user-controlled access.

Each entry gets its own session key: the entry is AEAD-encrypted, the
key is wrapped under the user's public key, and ciphertext + wrapped key
+ ciphertext hash go on the ledger as an AUDIT_ANCHOR transaction. Only
the user can decrypt; an auditor sees an entry only after the user sends
that entry's session key over an encrypted channel.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

from . import crypto
from .encoding import b64, b64_decode, canonical_json, from_json
from .errors import AuthFailure, HashMismatch, LedgerUnavailable, WrongKey
from .ledger import TxnType, build_txn

OPERATIONS = (
    "CREDENTIAL_REQUESTED",
    "CREDENTIAL_RECEIVED",
    "PRESENTATION_SENT",
    "STATUS_RECEIVED",
)

_AAD = b"soverclaim/audit-entry/" + crypto.SUITE_ID.encode()


@dataclass
class AuditLogEntry:
    operation: str
    credential_type: str
    user_did: str
    counterparty_did: str
    timestamp: int  # unix ms

    def __post_init__(self) -> None:
        if self.operation not in OPERATIONS:
            raise ValueError(f"unknown audit operation {self.operation!r}")

    def to_dict(self) -> dict:
        return {
            "operation": self.operation,
            "credential_type": self.credential_type,
            "user_did": self.user_did,
            "counterparty_did": self.counterparty_did,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AuditLogEntry":
        return cls(
            operation=data["operation"],
            credential_type=data["credential_type"],
            user_did=data["user_did"],
            counterparty_did=data["counterparty_did"],
            timestamp=int(data["timestamp"]),
        )


@dataclass
class AnchoredLog:
    seq_no: int
    ciphertext: bytes
    wrapped_key: bytes
    entry_hash: str


class AuditLog:
    """One user's audit recorder and reader.

    submitter_did/submitter_kp form the stable did:key identity anchors
    are filed under; user_kem is the keypair entries are sealed to.
    Anchoring survives ledger outages: failed submissions queue and are
    retried with the same signed transaction, so the ledger's dedup makes
    anchoring exactly-once.
    """

    def __init__(self, ledger, submitter_did: str, submitter_kp: crypto.KeyPair, user_kem: crypto.KeyPair) -> None:
        self.ledger = ledger
        self.submitter_did = submitter_did
        self.submitter_kp = submitter_kp
        self.user_kem = user_kem
        self._pending: list = []
        self._lock = threading.Lock()

    # -- recording -------------------------------------------------------

    def record_event(self, entry: AuditLogEntry) -> AnchoredLog | None:
        """Encrypt and anchor one entry. Returns None if the ledger is
        down (the entry is queued and flushed later)."""
        session = crypto.new_session_key()
        ciphertext = crypto.aead_encrypt(session, session.next_nonce(), canonical_json(entry.to_dict()), _AAD)
        wrapped = crypto.wrap_key(self.user_kem.public_key, session)
        payload = {
            "cipher": b64(ciphertext),
            "wrapped_key": b64(wrapped),
            "hash": crypto.sha256(ciphertext).hex(),
        }
        txn = build_txn(
            TxnType.AUDIT_ANCHOR, payload, self.submitter_did, self.submitter_kp, int(time.time() * 1000)
        )
        try:
            seq = self.ledger.submit(txn)
        except LedgerUnavailable:
            with self._lock:
                self._pending.append((txn, ciphertext, wrapped, payload["hash"]))
            return None
        return AnchoredLog(seq, ciphertext, wrapped, payload["hash"])

    def flush(self) -> list[AnchoredLog]:
        """Retry queued anchors; safe to call any time."""
        with self._lock:
            pending, self._pending = self._pending, []
        anchored = []
        for txn, ciphertext, wrapped, entry_hash in pending:
            try:
                seq = self.ledger.submit(txn)
            except LedgerUnavailable:
                with self._lock:
                    self._pending.append((txn, ciphertext, wrapped, entry_hash))
                continue
            anchored.append(AnchoredLog(seq, ciphertext, wrapped, entry_hash))
        return anchored

    @property
    def pending_count(self) -> int:
        with self._lock:
            return len(self._pending)

    # -- reading ---------------------------------------------------------

    def _anchors(self) -> list:
        return self.ledger.query(
            txn_type=TxnType.AUDIT_ANCHOR.value, submitter=self.submitter_did
        )

    def list_my_logs(self) -> list[tuple[int, AuditLogEntry]]:
        """Decrypt every anchored entry this user can open, in seq order.
        Entries sealed to someone else's key are skipped."""
        out = []
        for txn in self._anchors():
            try:
                entry = self._decrypt_anchor(txn.payload)
            except WrongKey:
                continue
            out.append((txn.seq_no, entry))
        return out

    def _decrypt_anchor(self, payload: dict) -> AuditLogEntry:
        ciphertext = b64_decode(payload["cipher"])
        if crypto.sha256(ciphertext).hex() != payload["hash"]:
            raise HashMismatch("anchored hash does not match ciphertext")
        try:
            session = crypto.unwrap_key(self.user_kem.secret_key, b64_decode(payload["wrapped_key"]))
            plaintext = crypto.aead_decrypt(session, b"\x00" * 12, ciphertext, _AAD)
        except AuthFailure as exc:
            raise WrongKey(str(exc)) from exc
        return AuditLogEntry.from_dict(from_json(plaintext))

    # -- auditor release --------------------------------------------------

    def build_release(self, seq_nos: list[int]) -> dict:
        """Unwrap exactly the selected entries' session keys for an auditor.

        The release itself becomes a STATUS_RECEIVED event, so granting
        access is auditable too."""
        keys = {}
        for txn in self._anchors():
            if txn.seq_no not in seq_nos:
                continue
            session = crypto.unwrap_key(self.user_kem.secret_key, b64_decode(txn.payload["wrapped_key"]))
            keys[str(txn.seq_no)] = {"key": b64(session.key), "id": b64(session.id)}
        missing = set(seq_nos) - {int(s) for s in keys}
        if missing:
            raise WrongKey(f"no anchors at seq {sorted(missing)} for this user")
        self.record_event(
            AuditLogEntry(
                operation="STATUS_RECEIVED",
                credential_type="AuditRelease",
                user_did=self.submitter_did,
                counterparty_did="auditor",
                timestamp=int(time.time() * 1000),
            )
        )
        return {"submitter": self.submitter_did, "keys": keys}


def auditor_read(ledger, release: dict) -> list[tuple[int, AuditLogEntry]]:
    """Auditor side: fetch anchored ciphertexts, check them against their
    committed hashes, and decrypt with the released per-entry keys."""
    wanted = {int(s): v for s, v in release["keys"].items()}
    out = []
    for txn in ledger.query(txn_type=TxnType.AUDIT_ANCHOR.value, submitter=release["submitter"]):
        released = wanted.get(txn.seq_no)
        if released is None:
            continue
        ciphertext = b64_decode(txn.payload["cipher"])
        if crypto.sha256(ciphertext).hex() != txn.payload["hash"]:
            raise HashMismatch(f"anchor at seq {txn.seq_no} fails its hash check")
        session = crypto.SessionKey(key=b64_decode(released["key"]), id=b64_decode(released["id"]))
        try:
            plaintext = crypto.aead_decrypt(session, b"\x00" * 12, ciphertext, _AAD)
        except Exception as exc:
            raise WrongKey(f"released key does not open anchor {txn.seq_no}") from exc
        out.append((txn.seq_no, AuditLogEntry.from_dict(from_json(plaintext))))
    return out
