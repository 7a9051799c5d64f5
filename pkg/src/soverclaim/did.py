"""DID syntax, DID documents, and the two resolution paths.

did:key identifiers are self-contained: the method-specific id is
base58(multicodec prefix || public key), so the document reconstructs
from the string alone. did:sov identifiers live on the ledger as NYM
transactions and resolve through a ledger client.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import crypto
from .encoding import b58decode, b58encode, b64, b64_decode, canonical_json
from .errors import MalformedDid

# multicodec-style prefix for an Ed25519 verification key
_ED25519_PREFIX = bytes([0xED, 0x01])


class DidMethod(str, Enum):
    KEY = "key"  # local, self-contained resolution
    SOV = "sov"  # ledger-backed resolution


@dataclass(frozen=True)
class Did:
    method: DidMethod
    method_specific_id: str

    def __str__(self) -> str:
        return f"did:{self.method.value}:{self.method_specific_id}"


@dataclass
class VerificationMethod:
    key_id: str
    algorithm: str
    public_key: bytes

    def to_dict(self) -> dict:
        return {"id": self.key_id, "type": self.algorithm, "publicKeyBase58": b58encode(self.public_key)}

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationMethod":
        return cls(
            key_id=data["id"],
            algorithm=data["type"],
            public_key=b58decode(data["publicKeyBase58"]),
        )


@dataclass
class DidDocument:
    id: str
    verification_methods: list[VerificationMethod]
    service_endpoints: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.verification_methods:
            raise ValueError("a DID document needs at least one verification method")
        key_ids = [vm.key_id for vm in self.verification_methods]
        if len(set(key_ids)) != len(key_ids):
            raise ValueError("verification method ids must be unique")

    @property
    def primary_key(self) -> bytes:
        return self.verification_methods[0].public_key

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "verificationMethod": [vm.to_dict() for vm in self.verification_methods],
            "service": [{"type": t, "serviceEndpoint": url} for t, url in self.service_endpoints],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DidDocument":
        return cls(
            id=data["id"],
            verification_methods=[VerificationMethod.from_dict(vm) for vm in data["verificationMethod"]],
            service_endpoints=[(s["type"], s["serviceEndpoint"]) for s in data.get("service", [])],
        )

    def canonical_bytes(self) -> bytes:
        """Canonical JSON form — this is what gets signed."""
        return canonical_json(self.to_dict())


def parse_did(did: str) -> Did:
    parts = did.split(":")
    if len(parts) != 3 or parts[0] != "did" or not parts[2]:
        raise MalformedDid(f"not a DID: {did!r}")
    try:
        method = DidMethod(parts[1])
    except ValueError as exc:
        raise MalformedDid(f"unknown DID method {parts[1]!r}") from exc
    return Did(method=method, method_specific_id=parts[2])


def create_local_did(keypair: crypto.KeyPair) -> tuple[Did, DidDocument]:
    """Derive a did:key DID from a signing keypair. Deterministic."""
    if keypair.algorithm != crypto.Alg.SIGN:
        raise ValueError("local DIDs are derived from SIGN keypairs")
    ident = b58encode(_ED25519_PREFIX + keypair.public_key)
    did = Did(method=DidMethod.KEY, method_specific_id=ident)
    return did, _local_document(str(did), keypair.public_key)


def _local_document(did: str, public_key: bytes) -> DidDocument:
    return DidDocument(
        id=did,
        verification_methods=[
            VerificationMethod(key_id=f"{did}#keys-1", algorithm="Ed25519", public_key=public_key)
        ],
    )


def resolve_local(did: Did | str) -> DidDocument:
    """Rebuild the document from the identifier alone; no ledger access."""
    if isinstance(did, str):
        did = parse_did(did)
    if did.method != DidMethod.KEY:
        raise MalformedDid(f"{did} is not locally resolvable")
    try:
        raw = b58decode(did.method_specific_id)
    except ValueError as exc:
        raise MalformedDid(f"invalid base58 in {did}") from exc
    if len(raw) != len(_ED25519_PREFIX) + 32 or not raw.startswith(_ED25519_PREFIX):
        raise MalformedDid(f"{did} does not encode an Ed25519 key")
    return _local_document(str(did), raw[len(_ED25519_PREFIX):])


def sov_did_for_key(public_key: bytes) -> Did:
    """did:sov identifier: base58 of the first 16 bytes of the key hash."""
    return Did(method=DidMethod.SOV, method_specific_id=b58encode(crypto.sha256(public_key)[:16]))


def nym_payload(document: DidDocument, keypair: crypto.KeyPair) -> dict:
    """NYM transaction payload: the document plus a proof signature by the
    document's own key."""
    proof = crypto.sign(keypair.secret_key, document.canonical_bytes())
    return {"did": document.id, "document": document.to_dict(), "proof": b64(proof)}


def verify_nym_proof(payload: dict) -> bool:
    try:
        document = DidDocument.from_dict(payload["document"])
        proof = b64_decode(payload["proof"])
    except (KeyError, ValueError, TypeError):
        return False
    if payload.get("did") != document.id:
        return False
    return crypto.verify(document.primary_key, document.canonical_bytes(), proof)


def register_public_did(ledger_client, document: DidDocument, keypair: crypto.KeyPair) -> Did:
    """Write a NYM transaction for the document, signed by its own key."""
    did = parse_did(document.id)
    payload = nym_payload(document, keypair)
    ledger_client.submit_payload("NYM", payload, submitter=document.id, keypair=keypair)
    return did


def resolve_public(ledger_client, did: Did | str) -> DidDocument:
    """Resolve the latest committed document for a did:sov identifier."""
    if isinstance(did, str):
        did = parse_did(did)
    if did.method != DidMethod.SOV:
        raise MalformedDid(f"{did} is not ledger-resolvable")
    return ledger_client.resolve_did(str(did))


def resolve(did: Did | str, ledger_client=None) -> DidDocument:
    """Resolve either method: did:key locally, did:sov via the ledger."""
    if isinstance(did, str):
        did = parse_did(did)
    if did.method == DidMethod.KEY:
        return resolve_local(did)
    if ledger_client is None:
        raise MalformedDid(f"{did} needs a ledger to resolve")
    return resolve_public(ledger_client, did)


def check_ownership(did: Did | str, challenge: bytes, signature: bytes, ledger_client=None) -> bool:
    """Verify a challenge signature against the key behind a DID."""
    try:
        document = resolve(did, ledger_client)
    except MalformedDid:
        return False
    return crypto.verify(document.primary_key, challenge, signature)
