"""Credential schemas and definitions, commitment-vector credentials,
selective-disclosure presentations, and revocation.

Every attribute is committed as H(salt || name || value); the issuer
signs the ordered digest vector, never the values. A presentation
reveals (value, salt) pairs for chosen attributes only — the rest stay
digests — and the holder countersigns everything together with the
verifier's nonce.
"""

from __future__ import annotations

import os
import struct
import time
import uuid
from dataclasses import dataclass, field

from . import crypto, did as did_mod
from .encoding import b64, b64_decode, canonical_json, sign_input
from .errors import (
    AlreadyRevoked,
    AttributeMismatch,
    NotIssuer,
    RevokedDefinition,
    UnsatisfiableRequest,
)
from .ledger import TxnType

CREDENTIAL_TYPE_TAG = ["SoverClaimCredential/1"]
PRESENTATION_TYPE_TAG = ["SoverClaimPresentation/1"]


@dataclass
class CredentialSchema:
    schema_id: str
    name: str
    version: str
    attribute_names: list[str]

    @staticmethod
    def body_hash(name: str, version: str, attribute_names: list[str]) -> str:
        return crypto.sha256(
            canonical_json({"name": name, "version": version, "attr_names": attribute_names})
        ).hex()

    @classmethod
    def from_payload(cls, payload: dict) -> "CredentialSchema":
        return cls(
            schema_id=payload["schema_id"],
            name=payload["name"],
            version=payload["version"],
            attribute_names=list(payload["attr_names"]),
        )


@dataclass
class CredentialDefinition:
    cred_def_id: str
    schema_id: str
    issuer_did: str
    verkey_id: str
    revocation_registry_id: str

    @classmethod
    def from_payload(cls, payload: dict) -> "CredentialDefinition":
        return cls(
            cred_def_id=payload["cred_def_id"],
            schema_id=payload["schema_id"],
            issuer_did=payload["issuer_did"],
            verkey_id=payload["verkey_id"],
            revocation_registry_id=payload.get("revocation_registry_id", ""),
        )


@dataclass
class VerifiableCredential:
    cred_id: str
    cred_def_id: str
    subject_did: str
    attributes: list[tuple[str, str, bytes]]  # (name, value, salt) in schema order
    commitment_vector: list[str]              # hex digests, schema order
    issuance_date: int                        # unix ms
    issuer_signature: bytes

    def signed_portion(self) -> bytes:
        return credential_signed_portion(
            self.cred_id, self.cred_def_id, self.subject_did,
            self.commitment_vector, self.issuance_date,
        )

    def value(self, name: str) -> str:
        for attr_name, value, _ in self.attributes:
            if attr_name == name:
                return value
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "@type": CREDENTIAL_TYPE_TAG,
            "cred_id": self.cred_id,
            "cred_def_id": self.cred_def_id,
            "subject_did": self.subject_did,
            "attributes": [
                {"name": n, "value": v, "salt": b64(s)} for n, v, s in self.attributes
            ],
            "commitment_vector": self.commitment_vector,
            "issuance_date": self.issuance_date,
            "issuer_signature": b64(self.issuer_signature),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VerifiableCredential":
        return cls(
            cred_id=data["cred_id"],
            cred_def_id=data["cred_def_id"],
            subject_did=data["subject_did"],
            attributes=[
                (a["name"], a["value"], b64_decode(a["salt"])) for a in data["attributes"]
            ],
            commitment_vector=list(data["commitment_vector"]),
            issuance_date=int(data["issuance_date"]),
            issuer_signature=b64_decode(data["issuer_signature"]),
        )


def credential_signed_portion(
    cred_id: str, cred_def_id: str, subject_did: str, commitment_vector: list[str], issuance_date: int
) -> bytes:
    return sign_input(
        cred_id.encode(),
        cred_def_id.encode(),
        subject_did.encode(),
        canonical_json(commitment_vector),
        struct.pack("<Q", issuance_date),
    )


@dataclass
class PresentationRequest:
    request_id: str
    nonce: bytes  # 32 bytes, single-use per verifier
    requested: list[dict]  # [{"name": ..., "cred_def_ids": [...] or []}]
    created_at: int
    freshness_window_ms: int = 120_000

    @classmethod
    def create(cls, attribute_names: list[str], cred_def_ids: dict[str, list[str]] | None = None) -> "PresentationRequest":
        cred_def_ids = cred_def_ids or {}
        return cls(
            request_id=uuid.uuid4().hex,
            nonce=os.urandom(32),
            requested=[
                {"name": name, "cred_def_ids": cred_def_ids.get(name, [])}
                for name in attribute_names
            ],
            created_at=int(time.time() * 1000),
        )

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "nonce": b64(self.nonce),
            "requested": self.requested,
            "created_at": self.created_at,
            "freshness_window_ms": self.freshness_window_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PresentationRequest":
        return cls(
            request_id=data["request_id"],
            nonce=b64_decode(data["nonce"]),
            requested=list(data["requested"]),
            created_at=int(data["created_at"]),
            freshness_window_ms=int(data.get("freshness_window_ms", 120_000)),
        )


@dataclass
class Disclosure:
    """One credential's contribution: full commitment vector and issuer
    signature, values and salts for the revealed subset only, plus a
    subject proof — the credential's pairwise subject key signing the
    verifier nonce — since the presenting DID is a different pairwise
    identity than the one the credential was issued to."""

    cred_id: str
    cred_def_id: str
    subject_did: str
    issuance_date: int
    commitment_vector: list[str]
    issuer_signature: bytes
    revealed: list[dict]  # {"name", "value", "salt" (b64), "index"}
    subject_proof: bytes = b""

    def to_dict(self) -> dict:
        return {
            "cred_id": self.cred_id,
            "cred_def_id": self.cred_def_id,
            "subject_did": self.subject_did,
            "issuance_date": self.issuance_date,
            "commitment_vector": self.commitment_vector,
            "issuer_signature": b64(self.issuer_signature),
            "revealed": self.revealed,
            "subject_proof": b64(self.subject_proof),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Disclosure":
        return cls(
            cred_id=data["cred_id"],
            cred_def_id=data["cred_def_id"],
            subject_did=data["subject_did"],
            issuance_date=int(data["issuance_date"]),
            commitment_vector=list(data["commitment_vector"]),
            issuer_signature=b64_decode(data["issuer_signature"]),
            revealed=list(data["revealed"]),
            subject_proof=b64_decode(data.get("subject_proof", "")),
        )


def subject_proof_portion(nonce: bytes, cred_id: str, holder_did: str) -> bytes:
    return sign_input(b"subject-proof", nonce, cred_id.encode(), holder_did.encode())


@dataclass
class VerifiablePresentation:
    request_id: str
    nonce: bytes
    holder_did: str
    disclosures: list[Disclosure]
    holder_signature: bytes = b""

    def signed_portion(self) -> bytes:
        return sign_input(
            self.request_id.encode(),
            self.nonce,
            self.holder_did.encode(),
            canonical_json([d.to_dict() for d in self.disclosures]),
        )

    def to_dict(self) -> dict:
        return {
            "@type": PRESENTATION_TYPE_TAG,
            "request_id": self.request_id,
            "nonce": b64(self.nonce),
            "holder_did": self.holder_did,
            "disclosures": [d.to_dict() for d in self.disclosures],
            "holder_signature": b64(self.holder_signature),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VerifiablePresentation":
        return cls(
            request_id=data["request_id"],
            nonce=b64_decode(data["nonce"]),
            holder_did=data["holder_did"],
            disclosures=[Disclosure.from_dict(d) for d in data["disclosures"]],
            holder_signature=b64_decode(data["holder_signature"]),
        )


@dataclass
class VerificationResult:
    checks: list[dict] = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append({"check": name, "ok": ok, "detail": detail})

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checks)

    def __bool__(self) -> bool:
        return self.ok

    def failed_checks(self) -> list[str]:
        return [c["check"] for c in self.checks if not c["ok"]]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": self.checks}


# ---------------------------------------------------------------------------
# Ledger anchoring
# ---------------------------------------------------------------------------

def publish_schema(ledger, issuer_did: str, issuer_kp: crypto.KeyPair, name: str, version: str, attrs: list[str]) -> str:
    schema_id = CredentialSchema.body_hash(name, version, attrs)
    payload = {"schema_id": schema_id, "name": name, "version": version, "attr_names": attrs}
    ledger.submit_payload(TxnType.SCHEMA, payload, issuer_did, issuer_kp)
    return schema_id


def publish_cred_def(ledger, issuer_did: str, issuer_kp: crypto.KeyPair, schema_id: str) -> str:
    verkey_id = f"{issuer_did}#keys-1"
    cred_def_id = crypto.sha256(
        canonical_json({"schema_id": schema_id, "issuer_did": issuer_did, "verkey_id": verkey_id})
    ).hex()[:32]
    payload = {
        "cred_def_id": cred_def_id,
        "schema_id": schema_id,
        "issuer_did": issuer_did,
        "verkey_id": verkey_id,
        "revocation_registry_id": f"{cred_def_id}:rev",
    }
    ledger.submit_payload(TxnType.CRED_DEF, payload, issuer_did, issuer_kp)
    return cred_def_id


# Schema and cred-def payloads are content-addressed and immutable once
# anchored, so caching them is safe; revocation state is never cached.
_CRED_DEF_CACHE: dict[str, CredentialDefinition] = {}
_SCHEMA_CACHE: dict[str, CredentialSchema] = {}


def fetch_cred_def(ledger, cred_def_id: str) -> CredentialDefinition | None:
    cached = _CRED_DEF_CACHE.get(cred_def_id)
    if cached is not None:
        return cached
    for txn in ledger.query(txn_type=TxnType.CRED_DEF.value):
        if txn.payload.get("cred_def_id") == cred_def_id:
            cred_def = CredentialDefinition.from_payload(txn.payload)
            _CRED_DEF_CACHE[cred_def_id] = cred_def
            return cred_def
    return None


def fetch_schema(ledger, schema_id: str) -> CredentialSchema | None:
    cached = _SCHEMA_CACHE.get(schema_id)
    if cached is not None:
        return cached
    for txn in ledger.query(txn_type=TxnType.SCHEMA.value):
        if txn.payload.get("schema_id") == schema_id:
            schema = CredentialSchema.from_payload(txn.payload)
            _SCHEMA_CACHE[schema_id] = schema
            return schema
    return None


# ---------------------------------------------------------------------------
# Issuance / verification
# ---------------------------------------------------------------------------

def issue_credential(
    ledger,
    issuer_did: str,
    issuer_kp: crypto.KeyPair,
    cred_def_id: str,
    subject_did: str,
    values: dict[str, str],
) -> VerifiableCredential:
    cred_def = fetch_cred_def(ledger, cred_def_id)
    if cred_def is None:
        raise RevokedDefinition(f"credential definition {cred_def_id} is not anchored")
    if cred_def.issuer_did != issuer_did:
        raise NotIssuer(f"{issuer_did} does not own {cred_def_id}")
    schema = fetch_schema(ledger, cred_def.schema_id)
    if schema is None:
        raise RevokedDefinition(f"schema {cred_def.schema_id} is not anchored")
    if set(values) != set(schema.attribute_names):
        missing = set(schema.attribute_names) - set(values)
        extra = set(values) - set(schema.attribute_names)
        raise AttributeMismatch(f"missing={sorted(missing)} unexpected={sorted(extra)}")

    attributes = []
    vector = []
    for name in schema.attribute_names:  # fresh salt per attribute, schema order
        commitment = crypto.commit_attribute(name, values[name])
        attributes.append((name, values[name], commitment.salt))
        vector.append(commitment.digest.hex())

    cred_id = uuid.uuid4().hex
    issuance_date = int(time.time() * 1000)
    portion = credential_signed_portion(cred_id, cred_def_id, subject_did, vector, issuance_date)
    return VerifiableCredential(
        cred_id=cred_id,
        cred_def_id=cred_def_id,
        subject_did=subject_did,
        attributes=attributes,
        commitment_vector=vector,
        issuance_date=issuance_date,
        issuer_signature=crypto.sign(issuer_kp.secret_key, portion),
    )


def _issuer_key_for(ledger, cred_def_id: str) -> tuple[bytes | None, str]:
    cred_def = fetch_cred_def(ledger, cred_def_id)
    if cred_def is None:
        return None, f"credential definition {cred_def_id} not on ledger"
    try:
        document = ledger.resolve_did(cred_def.issuer_did)
    except Exception as exc:
        return None, f"issuer DID unresolvable: {exc}"
    return document.primary_key, cred_def.issuer_did


def verify_credential(ledger, credential: VerifiableCredential) -> VerificationResult:
    result = VerificationResult()

    recomputed_ok = len(credential.attributes) == len(credential.commitment_vector)
    for i, (name, value, salt) in enumerate(credential.attributes):
        if not recomputed_ok:
            break
        digest = crypto.commitment_digest(name, value, salt)
        if digest.hex() != credential.commitment_vector[i]:
            recomputed_ok = False
    result.add("commitments", recomputed_ok, "every commitment recomputes from its value")

    issuer_key, issuer_detail = _issuer_key_for(ledger, credential.cred_def_id)
    result.add("issuer_resolvable", issuer_key is not None, issuer_detail)
    if issuer_key is not None:
        sig_ok = crypto.verify(issuer_key, credential.signed_portion(), credential.issuer_signature)
        result.add("issuer_signature", sig_ok)
    else:
        result.add("issuer_signature", False, "no issuer key")

    revoked = ledger.is_revoked(credential.cred_id)
    result.add("not_revoked", not revoked, "revocation checked at current ledger head")
    return result


# ---------------------------------------------------------------------------
# Presentations
# ---------------------------------------------------------------------------

def create_presentation(
    credentials: list[VerifiableCredential],
    request: PresentationRequest,
    holder_did: str,
    holder_kp: crypto.KeyPair,
    schemas: dict[str, list[str]],
    subject_keys: dict[str, crypto.KeyPair] | None = None,
) -> VerifiablePresentation:
    """Assemble a presentation revealing exactly the requested attributes.

    `schemas` maps cred_def_id -> ordered attribute names (the holder
    caches these when credentials arrive); `subject_keys` maps cred_id to
    the pairwise keypair each credential was issued to, used for the
    per-disclosure subject proofs. When omitted, holder_kp is assumed to
    own every credential (single-connection case)."""
    chosen: dict[str, list[dict]] = {}  # cred_id -> revealed entries
    by_id = {c.cred_id: c for c in credentials}

    for item in request.requested:
        name = item["name"]
        acceptable = item.get("cred_def_ids") or []
        source = None
        for cred in credentials:
            attr_names = schemas.get(cred.cred_def_id, [n for n, _, _ in cred.attributes])
            if name not in attr_names:
                continue
            if acceptable and cred.cred_def_id not in acceptable:
                continue
            source = (cred, attr_names.index(name))
            break
        if source is None:
            raise UnsatisfiableRequest(f"no credential covers attribute {name!r}")
        cred, index = source
        value = cred.value(name)
        salt = next(s for n, _, s in cred.attributes if n == name)
        chosen.setdefault(cred.cred_id, []).append(
            {"name": name, "value": value, "salt": b64(salt), "index": index}
        )

    disclosures = []
    for cred_id, revealed in chosen.items():
        cred = by_id[cred_id]
        subject_kp = (subject_keys or {}).get(cred_id, holder_kp)
        proof = crypto.sign(
            subject_kp.secret_key, subject_proof_portion(request.nonce, cred_id, holder_did)
        )
        disclosures.append(
            Disclosure(
                cred_id=cred.cred_id,
                cred_def_id=cred.cred_def_id,
                subject_did=cred.subject_did,
                issuance_date=cred.issuance_date,
                commitment_vector=cred.commitment_vector,
                issuer_signature=cred.issuer_signature,
                revealed=sorted(revealed, key=lambda r: r["index"]),
                subject_proof=proof,
            )
        )
    disclosures.sort(key=lambda d: d.cred_id)

    presentation = VerifiablePresentation(
        request_id=request.request_id,
        nonce=request.nonce,
        holder_did=holder_did,
        disclosures=disclosures,
    )
    presentation.holder_signature = crypto.sign(holder_kp.secret_key, presentation.signed_portion())
    return presentation


def verify_presentation(
    ledger,
    presentation: VerifiablePresentation,
    request: PresentationRequest,
    seen_nonces: set[bytes] | None = None,
) -> VerificationResult:
    """Check a presentation against the request that prompted it. Every
    check lands in the result; nothing raises."""
    result = VerificationResult()

    result.add("request_echo", presentation.request_id == request.request_id)
    nonce_ok = presentation.nonce == request.nonce
    if seen_nonces is not None:
        nonce_ok = nonce_ok and request.nonce not in seen_nonces
    result.add("nonce_fresh", nonce_ok, "nonce matches the request and was not used before")
    age = int(time.time() * 1000) - request.created_at
    result.add("request_fresh", 0 <= age <= request.freshness_window_ms)

    holder_ok = False
    try:
        holder_doc = did_mod.resolve(presentation.holder_did, ledger)
        holder_ok = crypto.verify(
            holder_doc.primary_key, presentation.signed_portion(), presentation.holder_signature
        )
    except Exception:
        holder_ok = False
    result.add("holder_signature", holder_ok, "holder signature binds disclosures to the nonce")

    covered: set[str] = set()
    for disclosure in presentation.disclosures:
        label = f"disclosure[{disclosure.cred_id[:8]}]"
        issuer_key, issuer_detail = _issuer_key_for(ledger, disclosure.cred_def_id)
        result.add(f"{label}.issuer_resolvable", issuer_key is not None, issuer_detail)
        portion = credential_signed_portion(
            disclosure.cred_id,
            disclosure.cred_def_id,
            disclosure.subject_did,
            disclosure.commitment_vector,
            disclosure.issuance_date,
        )
        sig_ok = issuer_key is not None and crypto.verify(
            issuer_key, portion, disclosure.issuer_signature
        )
        result.add(f"{label}.issuer_signature", sig_ok)

        commits_ok = True
        for entry in disclosure.revealed:
            index = int(entry["index"])
            if not (0 <= index < len(disclosure.commitment_vector)):
                commits_ok = False
                break
            digest = crypto.commitment_digest(entry["name"], entry["value"], b64_decode(entry["salt"]))
            if digest.hex() != disclosure.commitment_vector[index]:
                commits_ok = False
                break
            covered.add(entry["name"])
        result.add(f"{label}.commitments", commits_ok, "revealed values match their digests")

        subject_ok = False
        try:
            subject_doc = did_mod.resolve(disclosure.subject_did, ledger)
            subject_ok = crypto.verify(
                subject_doc.primary_key,
                subject_proof_portion(request.nonce, disclosure.cred_id, presentation.holder_did),
                disclosure.subject_proof,
            )
        except Exception:
            subject_ok = False
        result.add(
            f"{label}.subject_proof",
            subject_ok,
            "credential subject key signed this nonce for this presenter",
        )
        result.add(f"{label}.not_revoked", not ledger.is_revoked(disclosure.cred_id))

    wanted = {item["name"] for item in request.requested}
    result.add("covers_request", wanted <= covered, f"requested={sorted(wanted)}")
    for item in request.requested:
        acceptable = item.get("cred_def_ids") or []
        if not acceptable:
            continue
        ok = any(
            d.cred_def_id in acceptable
            and any(r["name"] == item["name"] for r in d.revealed)
            for d in presentation.disclosures
        )
        result.add(f"accepted_issuer[{item['name']}]", ok)
    return result


def revoke_credential(
    ledger, issuer_did: str, issuer_kp: crypto.KeyPair, cred_def_id: str, cred_id: str
) -> int:
    cred_def = fetch_cred_def(ledger, cred_def_id)
    if cred_def is None or cred_def.issuer_did != issuer_did:
        raise NotIssuer(f"{issuer_did} does not own {cred_def_id}")
    if ledger.is_revoked(cred_id):
        raise AlreadyRevoked(cred_id)
    payload = {"cred_def_id": cred_def_id, "revoked_cred_ids": [cred_id]}
    return ledger.submit_payload(TxnType.REV_ENTRY, payload, issuer_did, issuer_kp)
