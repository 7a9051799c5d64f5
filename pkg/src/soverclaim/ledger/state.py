"""Committed ledger state: the chain plus derived indexes, and the
type-specific transaction validation rules."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .. import crypto, did as did_mod
from ..encoding import b64_decode, canonical_json
from ..errors import (
    BadSignature,
    DuplicateSchemaId,
    SchemaViolation,
)
from .types import Block, LedgerTransaction, TxnType

CLOCK_SKEW_MS = 5 * 60 * 1000


@dataclass
class LedgerState:
    genesis: dict
    blocks: list[Block] = field(default_factory=list)
    txns: list[LedgerTransaction] = field(default_factory=list)
    committed_ids: set[str] = field(default_factory=set)
    # indexes
    nym_docs: dict[str, tuple[int, dict]] = field(default_factory=dict)  # did -> (seq, doc dict)
    schemas: dict[str, dict] = field(default_factory=dict)
    cred_defs: dict[str, dict] = field(default_factory=dict)
    revocations: list[tuple[int, str]] = field(default_factory=list)  # (seq, cred_id)

    @property
    def height(self) -> int:
        return self.blocks[-1].height if self.blocks else -1

    @property
    def head_hash(self) -> bytes:
        return self.blocks[-1].block_hash() if self.blocks else b"\x00" * 32

    @property
    def next_seq(self) -> int:
        return len(self.txns) + 1

    @property
    def trustee_did(self) -> str:
        return self.genesis["trustee"]["did"]

    @property
    def trustee_verkey(self) -> bytes:
        return b64_decode(self.genesis["trustee"]["verkey"])

    # -- validation ------------------------------------------------------

    def submitter_key(self, txn: LedgerTransaction) -> bytes:
        """Resolve the key a transaction's signature must verify against."""
        submitter = txn.submitter
        if submitter == self.trustee_did:
            return self.trustee_verkey
        parsed = did_mod.parse_did(submitter)
        if parsed.method == did_mod.DidMethod.KEY:
            return did_mod.resolve_local(parsed).primary_key
        entry = self.nym_docs.get(submitter)
        if entry is not None:
            return did_mod.DidDocument.from_dict(entry[1]).primary_key
        # Self-certifying bootstrap: a NYM may introduce its own DID, in
        # which case the signature verifies against the key it registers.
        if txn.txn_type == TxnType.NYM and txn.payload.get("did") == submitter:
            doc = did_mod.DidDocument.from_dict(txn.payload["document"])
            return doc.primary_key
        raise BadSignature(f"submitter {submitter} has no resolvable key")

    def validate_txn(self, txn: LedgerTransaction) -> None:
        """Raise if the transaction cannot be applied to this state."""
        if txn.txn_id in self.committed_ids:
            raise SchemaViolation("transaction already committed")
        now_ms = int(time.time() * 1000)
        if abs(txn.timestamp - now_ms) > CLOCK_SKEW_MS:
            raise SchemaViolation("transaction timestamp outside clock-skew bound")
        try:
            key = self.submitter_key(txn)
        except (did_mod.MalformedDid, KeyError, ValueError) as exc:
            raise BadSignature(str(exc)) from exc
        if not crypto.verify(key, txn.signed_portion(), txn.signature):
            raise BadSignature(f"bad signature from {txn.submitter}")

        check = getattr(self, f"_check_{txn.txn_type.value.lower()}")
        check(txn)

    def _check_nym(self, txn: LedgerTransaction) -> None:
        payload = txn.payload
        if not did_mod.verify_nym_proof(payload):
            raise BadSignature("NYM document proof does not verify")
        target = payload["did"]
        parsed = did_mod.parse_did(target)
        if parsed.method != did_mod.DidMethod.SOV:
            raise SchemaViolation("only did:sov documents are anchored as NYMs")
        doc = did_mod.DidDocument.from_dict(payload["document"])
        existing = self.nym_docs.get(target)
        if existing is None:
            # Fresh registration: the identifier must be derived from its key,
            # and the txn must come from the DID itself or the trustee.
            if str(did_mod.sov_did_for_key(doc.primary_key)) != target:
                raise SchemaViolation("did:sov identifier does not match its key")
            if txn.submitter not in (target, self.trustee_did):
                raise BadSignature("new NYM must be submitted by its owner or the trustee")
        else:
            # Update: last-writer-wins, but only the current owner (or
            # trustee) may overwrite.
            if txn.submitter not in (target, self.trustee_did):
                raise BadSignature("NYM update must be submitted by its owner or the trustee")

    def _check_schema(self, txn: LedgerTransaction) -> None:
        payload = txn.payload
        for field_name in ("schema_id", "name", "version", "attr_names"):
            if field_name not in payload:
                raise SchemaViolation(f"SCHEMA payload missing {field_name}")
        attrs = payload["attr_names"]
        if not attrs or len(set(attrs)) != len(attrs):
            raise SchemaViolation("attribute names must be non-empty and unique")
        expected = crypto.sha256(
            canonical_json(
                {"name": payload["name"], "version": payload["version"], "attr_names": attrs}
            )
        ).hex()
        if payload["schema_id"] != expected:
            raise SchemaViolation("schema_id does not hash its body")
        if payload["schema_id"] in self.schemas:
            raise DuplicateSchemaId(payload["schema_id"])
        self._require_registered(txn.submitter)

    def _check_cred_def(self, txn: LedgerTransaction) -> None:
        payload = txn.payload
        for field_name in ("cred_def_id", "schema_id", "issuer_did", "verkey_id"):
            if field_name not in payload:
                raise SchemaViolation(f"CRED_DEF payload missing {field_name}")
        if payload["schema_id"] not in self.schemas:
            raise SchemaViolation(f"unknown schema {payload['schema_id']}")
        if payload["issuer_did"] != txn.submitter:
            raise SchemaViolation("cred def issuer must be the submitter")
        if payload["cred_def_id"] in self.cred_defs:
            raise DuplicateSchemaId(payload["cred_def_id"])
        self._require_registered(txn.submitter)

    def _check_rev_entry(self, txn: LedgerTransaction) -> None:
        payload = txn.payload
        cred_def = self.cred_defs.get(payload.get("cred_def_id", ""))
        if cred_def is None:
            raise SchemaViolation("REV_ENTRY references unknown cred def")
        if cred_def["issuer_did"] != txn.submitter:
            raise SchemaViolation("only the cred def issuer may revoke against it")
        if not isinstance(payload.get("revoked_cred_ids"), list) or not payload["revoked_cred_ids"]:
            raise SchemaViolation("REV_ENTRY needs a non-empty revoked_cred_ids list")

    def _check_audit_anchor(self, txn: LedgerTransaction) -> None:
        payload = txn.payload
        for field_name in ("cipher", "wrapped_key", "hash"):
            if field_name not in payload:
                raise SchemaViolation(f"AUDIT_ANCHOR payload missing {field_name}")
        if crypto.sha256(b64_decode(payload["cipher"])).hex() != payload["hash"]:
            raise SchemaViolation("anchor hash does not match ciphertext")

    def _require_registered(self, submitter: str) -> None:
        if submitter != self.trustee_did and submitter not in self.nym_docs:
            raise SchemaViolation(f"{submitter} is not a registered DID")

    # -- application -------------------------------------------------------

    def apply_block(self, block: Block) -> None:
        self.blocks.append(block)
        for txn in block.txns:
            self.apply_txn(txn)

    def apply_txn(self, txn: LedgerTransaction) -> None:
        self.txns.append(txn)
        self.committed_ids.add(txn.txn_id)
        if txn.txn_type == TxnType.NYM:
            self.nym_docs[txn.payload["did"]] = (txn.seq_no, txn.payload["document"])
        elif txn.txn_type == TxnType.SCHEMA:
            self.schemas[txn.payload["schema_id"]] = txn.payload
        elif txn.txn_type == TxnType.CRED_DEF:
            self.cred_defs[txn.payload["cred_def_id"]] = txn.payload
        elif txn.txn_type == TxnType.REV_ENTRY:
            for cred_id in txn.payload["revoked_cred_ids"]:
                self.revocations.append((txn.seq_no, cred_id))

    def scratch_copy(self) -> "LedgerState":
        """Shallow working copy for validating a candidate transaction batch."""
        return LedgerState(
            genesis=self.genesis,
            blocks=list(self.blocks),
            txns=list(self.txns),
            committed_ids=set(self.committed_ids),
            nym_docs=dict(self.nym_docs),
            schemas=dict(self.schemas),
            cred_defs=dict(self.cred_defs),
            revocations=list(self.revocations),
        )

    # -- queries -----------------------------------------------------------

    def query(
        self,
        txn_type: str | None = None,
        submitter: str | None = None,
        seq_from: int | None = None,
        seq_to: int | None = None,
    ) -> list[LedgerTransaction]:
        out = []
        for txn in self.txns:
            if txn_type and txn.txn_type.value != txn_type:
                continue
            if submitter and txn.submitter != submitter:
                continue
            if seq_from is not None and txn.seq_no < seq_from:
                continue
            if seq_to is not None and txn.seq_no > seq_to:
                continue
            out.append(txn)
        return out

    def is_revoked(self, cred_id: str, at_seq_no: int | None = None) -> bool:
        limit = at_seq_no if at_seq_no is not None else self.next_seq
        return any(seq <= limit and cid == cred_id for seq, cid in self.revocations)
