"""The three long-running roles: Issuer, Holder (User), Verifier.

Each wires messaging, credentials, storage and the audit log into the
issue / present protocol state machines; records persist per thread so a
restarted agent resumes or abandons cleanly.
"""

from __future__ import annotations

import os
import time
import uuid

from .. import credentials as creds, crypto, did as did_mod
from ..audit import auditor_read
from ..credentials import PresentationRequest, VerifiableCredential, VerifiablePresentation
from ..encoding import b64, b64_decode, from_json, sign_input
from ..errors import (
    DocumentUnavailable,
    OwnershipUnproven,
    PolicyRejected,
    ProtocolError,
    SoverClaimError,
    UnsatisfiableRequest,
)
from ..storage import Uplink
from ..transport import Request, Response
from .base import AgentBase, PendingDecision, StateMachine
from .policy import DocumentValidationPolicy

# didcomm message types
ISSUE_PROPOSE = "issue/propose"
ISSUE_OFFER = "issue/offer"
ISSUE_REQUEST = "issue/request"
ISSUE_CREDENTIAL = "issue/credential"
ISSUE_ACK = "issue/ack"
ISSUE_ABANDON = "issue/abandon"
PRESENT_REQUEST = "present/request"
PRESENT_PRESENTATION = "present/presentation"
PRESENT_RESULT = "present/result"
AUDIT_REQUEST = "audit/request"
AUDIT_RELEASE = "audit/release"
AUDIT_DENY = "audit/deny"

ISSUE_HOLDER_FSM = StateMachine(
    "issue/holder",
    {
        "NEW": {"PROPOSAL_SENT"},
        "PROPOSAL_SENT": {"OFFER_RECEIVED", "ABANDONED"},
        "OFFER_RECEIVED": {"REQUEST_SENT", "ABANDONED"},
        "REQUEST_SENT": {"DONE", "ABANDONED"},
    },
)
ISSUE_ISSUER_FSM = StateMachine(
    "issue/issuer",
    {
        "NEW": {"PROPOSAL_RECEIVED"},
        "PROPOSAL_RECEIVED": {"OFFER_SENT", "ABANDONED"},
        "OFFER_SENT": {"REQUEST_RECEIVED", "ABANDONED"},
        "REQUEST_RECEIVED": {"CREDENTIAL_ISSUED", "ABANDONED"},
        "CREDENTIAL_ISSUED": {"DONE", "ABANDONED"},
    },
)
PRESENT_VERIFIER_FSM = StateMachine(
    "present/verifier",
    {
        "NEW": {"REQUEST_SENT"},
        "REQUEST_SENT": {"PRESENTATION_RECEIVED", "DENIED", "ABANDONED"},
        "PRESENTATION_RECEIVED": {"VERIFIED", "DENIED"},
        "VERIFIED": {"DONE"},
        "DENIED": {"DONE"},
    },
)
PRESENT_PROVER_FSM = StateMachine(
    "present/prover",
    {
        "NEW": {"REQUEST_RECEIVED"},
        "REQUEST_RECEIVED": {"PRESENTATION_SENT", "DENIED", "ABANDONED"},
        "PRESENTATION_SENT": {"VERIFIED", "DENIED", "ABANDONED"},
        "VERIFIED": {"DONE"},
        "DENIED": {"DONE"},
    },
)


def _ownership_portion(thread_id: str, holder_did: str) -> bytes:
    return sign_input(b"did-ownership", thread_id.encode(), holder_did.encode())


class HolderAgent(AgentBase):
    role = "holder"

    def __init__(self, *args, satellite_address: str | None = None, **kwargs) -> None:
        super().__init__(*args, **kwargs)
        self.uplink: Uplink | None = None
        if satellite_address:
            self.uplink = Uplink(
                self.net,
                satellite_address,
                state_dir=os.path.join(self.data_dir, "storage"),
                owner=self.wallet.keys["storage-owner"],
                region=self.config.region,
            )
        self.received_results: dict[str, dict] = {}

    # -- handlers ---------------------------------------------------------

    def _register_handlers(self) -> None:
        m = self.messenger
        m.register_handler(ISSUE_OFFER, self._on_offer)
        m.register_handler(ISSUE_CREDENTIAL, self._on_credential)
        m.register_handler(ISSUE_ABANDON, self._on_issue_abandon)
        m.register_handler(PRESENT_REQUEST, self._on_present_request)
        m.register_handler(PRESENT_RESULT, self._on_present_result)
        m.register_handler(AUDIT_REQUEST, self._on_audit_request)

    # -- issue flow (holder side) ------------------------------------------

    def propose_credential(
        self,
        connection_id: str,
        claims: dict[str, str],
        credential_type: str,
        document_url: str,
        document_checksum: str = "",
        document_content_type: str = "application/octet-stream",
    ) -> str:
        conn = self.messenger.get_connection(connection_id)
        if conn is None:
            raise SoverClaimError(f"unknown connection {connection_id}")
        thread_id = uuid.uuid4().hex
        record = {
            "thread_id": thread_id,
            "protocol": "issue",
            "role": "HOLDER",
            "state": "NEW",
            "connection_id": connection_id,
            "credential_type": credential_type,
            "claims": claims,
            "document_url": document_url,
            "created_at": int(time.time() * 1000),
            "updated_at": int(time.time() * 1000),
        }
        ISSUE_HOLDER_FSM.advance(record, "PROPOSAL_SENT")
        self.issue_records.put(record)
        self.audit_event("CREDENTIAL_REQUESTED", credential_type, conn.my_did, conn.their_did or "")
        ownership_sig = crypto.sign(conn.my_sign.secret_key, _ownership_portion(thread_id, conn.my_did))
        self.messenger.send(
            connection_id,
            ISSUE_PROPOSE,
            {
                "claims": claims,
                "credential_type": credential_type,
                "document_url": document_url,
                "document_checksum": document_checksum,
                "document_content_type": document_content_type,
                "subject_did": conn.my_did,
                "ownership_sig": b64(ownership_sig),
            },
            thread_id=thread_id,
        )
        self.emit("protocol", {"thread_id": thread_id, "state": record["state"]})
        return thread_id

    def _on_offer(self, conn, inner, thread_id) -> None:
        record = self.issue_records.get(thread_id)
        if record is None or record["state"] == "ABANDONED":
            return
        if record["state"] != "PROPOSAL_SENT":
            return  # duplicate
        try:
            ISSUE_HOLDER_FSM.advance(record, "OFFER_RECEIVED")
        except ProtocolError as exc:
            self.record_protocol_error(exc)
            return
        record["offer"] = {"cred_def_id": inner["cred_def_id"], "preview": inner.get("preview", {})}
        self.issue_records.put(record)
        self.emit("protocol", {"thread_id": thread_id, "state": record["state"]})
        if self.config.auto_approve:
            self.accept_offer(thread_id)
        else:
            self.queue_decision(
                "OFFER",
                thread_id,
                {
                    "issuer_label": conn.their_label,
                    "cred_def_id": inner["cred_def_id"],
                    "preview": inner.get("preview", {}),
                    "credential_type": record.get("credential_type", ""),
                },
            )

    def accept_offer(self, thread_id: str) -> None:
        record = self.issue_records.get(thread_id)
        if record is None or record["state"] != "OFFER_RECEIVED":
            raise ProtocolError(f"thread {thread_id} has no pending offer")
        ISSUE_HOLDER_FSM.advance(record, "REQUEST_SENT")
        self.issue_records.put(record)
        self.messenger.send(record["connection_id"], ISSUE_REQUEST, {}, thread_id=thread_id)
        self.emit("protocol", {"thread_id": thread_id, "state": record["state"]})

    def reject_offer(self, thread_id: str, reason: str = "holder_rejected") -> None:
        record = self.issue_records.get(thread_id)
        if record is None:
            return
        ISSUE_HOLDER_FSM.advance(record, "ABANDONED")
        record["reason"] = reason
        self.issue_records.put(record)
        self.messenger.send(record["connection_id"], ISSUE_ABANDON, {"reason": reason}, thread_id=thread_id)
        self.emit("protocol", {"thread_id": thread_id, "state": "ABANDONED"})

    def _on_credential(self, conn, inner, thread_id) -> None:
        record = self.issue_records.get(thread_id)
        if record is None or record["state"] in ("ABANDONED",):
            return
        if record["state"] == "DONE":
            # Replayed issue message: ack again, wallet stays unchanged.
            self.messenger.send(record["connection_id"], ISSUE_ACK, {}, thread_id=thread_id)
            return
        if record["state"] != "REQUEST_SENT":
            return
        credential = VerifiableCredential.from_dict(inner["credential"])
        attr_names = [name for name, _, _ in credential.attributes]
        verification = creds.verify_credential(self.ledger, credential)
        if not verification.ok:
            ISSUE_HOLDER_FSM.advance(record, "ABANDONED")
            record["reason"] = f"credential failed verification: {verification.failed_checks()}"
            self.issue_records.put(record)
            return
        self.wallet.store_credential(credential, attr_names, subject_kp=conn.my_sign)
        ISSUE_HOLDER_FSM.advance(record, "DONE")
        record["cred_id"] = credential.cred_id
        self.issue_records.put(record)
        self.audit_event(
            "CREDENTIAL_RECEIVED",
            record.get("credential_type", ""),
            conn.my_did,
            conn.their_did or "",
        )
        self.messenger.send(record["connection_id"], ISSUE_ACK, {}, thread_id=thread_id)
        self.emit("protocol", {"thread_id": thread_id, "state": "DONE"})
        self.emit("credential", credential.to_dict())

    def _on_issue_abandon(self, conn, inner, thread_id) -> None:
        record = self.issue_records.get(thread_id)
        if record is None or record["state"] in ("DONE", "ABANDONED"):
            return
        ISSUE_HOLDER_FSM.advance(record, "ABANDONED")
        record["reason"] = inner.get("reason", "abandoned by issuer")
        self.issue_records.put(record)
        self.emit("protocol", {"thread_id": thread_id, "state": "ABANDONED", "reason": record["reason"]})

    # -- present flow (prover side) -------------------------------------------

    def _on_present_request(self, conn, inner, thread_id) -> None:
        record = self.present_records.get(thread_id)
        if record is not None:
            return  # duplicate
        record = {
            "thread_id": thread_id,
            "protocol": "present",
            "role": "PROVER",
            "state": "NEW",
            "connection_id": conn.connection_id,
            "request": inner["request"],
            "created_at": int(time.time() * 1000),
            "updated_at": int(time.time() * 1000),
        }
        PRESENT_PROVER_FSM.advance(record, "REQUEST_RECEIVED")
        self.present_records.put(record)
        self.emit("protocol", {"thread_id": thread_id, "state": record["state"]})
        if self.config.auto_approve:
            try:
                self.present(thread_id)
            except UnsatisfiableRequest as exc:
                self.decline_presentation(thread_id, str(exc))
        else:
            request = PresentationRequest.from_dict(inner["request"])
            revealable = self._disclosure_preview(request)
            self.queue_decision(
                "PRESENT_REQUEST",
                thread_id,
                {
                    "verifier_label": conn.their_label,
                    "requested": [item["name"] for item in request.requested],
                    "revealable": revealable,
                },
            )

    def _disclosure_preview(self, request: PresentationRequest) -> dict:
        preview: dict[str, list[str]] = {}
        for item in request.requested:
            holders = [
                c.cred_id for c in self.wallet.list_credentials()
                if item["name"] in self.wallet.schemas.get(c.cred_def_id, [])
            ]
            preview[item["name"]] = holders
        return preview

    def present(self, thread_id: str) -> None:
        record = self.present_records.get(thread_id)
        if record is None or record["state"] != "REQUEST_RECEIVED":
            raise ProtocolError(f"thread {thread_id} has no pending presentation request")
        conn = self.messenger.get_connection(record["connection_id"])
        request = PresentationRequest.from_dict(record["request"])
        presentation = creds.create_presentation(
            self.wallet.list_credentials(),
            request,
            conn.my_did,
            conn.my_sign,
            self.wallet.schemas,
            subject_keys=self.wallet.subject_keys,
        )
        PRESENT_PROVER_FSM.advance(record, "PRESENTATION_SENT")
        record["presentation_cred_ids"] = [d.cred_id for d in presentation.disclosures]
        self.present_records.put(record)
        self.messenger.send(
            record["connection_id"],
            PRESENT_PRESENTATION,
            {"presentation": presentation.to_dict()},
            thread_id=thread_id,
        )
        self.audit_event(
            "PRESENTATION_SENT",
            ",".join(sorted({d.cred_def_id[:8] for d in presentation.disclosures})),
            conn.my_did,
            conn.their_did or "",
        )
        self.emit("protocol", {"thread_id": thread_id, "state": "PRESENTATION_SENT"})

    def decline_presentation(self, thread_id: str, reason: str) -> None:
        record = self.present_records.get(thread_id)
        if record is None or record["state"] != "REQUEST_RECEIVED":
            return
        PRESENT_PROVER_FSM.advance(record, "DENIED")
        record["result"] = {"granted": False, "reason": reason}
        PRESENT_PROVER_FSM.advance(record, "DONE")
        self.present_records.put(record)
        self.messenger.send(
            record["connection_id"], PRESENT_RESULT, {"granted": False, "reason": reason, "declined": True},
            thread_id=thread_id,
        )
        self.emit("protocol", {"thread_id": thread_id, "state": "DONE"})

    def _on_present_result(self, conn, inner, thread_id) -> None:
        record = self.present_records.get(thread_id)
        if record is None or record["state"] != "PRESENTATION_SENT":
            return
        granted = bool(inner.get("granted"))
        PRESENT_PROVER_FSM.advance(record, "VERIFIED" if granted else "DENIED")
        record["result"] = {"granted": granted, "reason": inner.get("reason", "")}
        PRESENT_PROVER_FSM.advance(record, "DONE")
        self.present_records.put(record)
        self.received_results[thread_id] = record["result"]
        self.audit_event("STATUS_RECEIVED", record.get("credential_type", ""), conn.my_did, conn.their_did or "")
        self.emit("protocol", {"thread_id": thread_id, "state": "DONE", "result": record["result"]})

    # -- audit release flow ------------------------------------------------------

    def _on_audit_request(self, conn, inner, thread_id) -> None:
        seq_nos = [int(s) for s in inner.get("seq_nos", [])]
        if self.config.auto_approve and seq_nos:
            self.grant_audit_access(conn.connection_id, seq_nos, thread_id)
        else:
            self.queue_decision(
                "AUDITOR_REQUEST",
                thread_id,
                {
                    "auditor_label": conn.their_label,
                    "connection_id": conn.connection_id,
                    "seq_nos": seq_nos,
                },
            )

    def grant_audit_access(self, connection_id: str, seq_nos: list[int], thread_id: str | None = None) -> None:
        release = self.audit.build_release(seq_nos)
        self.messenger.send(
            connection_id, AUDIT_RELEASE, {"release": release}, thread_id=thread_id or uuid.uuid4().hex
        )

    def deny_audit_access(self, connection_id: str, thread_id: str) -> None:
        self.messenger.send(
            connection_id, AUDIT_DENY, {"reason": "DeniedByUser"}, thread_id=thread_id
        )

    # -- decisions ----------------------------------------------------------------

    def on_decision(self, decision: PendingDecision, approve: bool, selection: dict) -> dict:
        if decision.kind == "OFFER":
            if approve:
                self.accept_offer(decision.thread_id)
                return {"action": "offer_accepted", "thread_id": decision.thread_id}
            self.reject_offer(decision.thread_id)
            return {"action": "offer_rejected", "thread_id": decision.thread_id}
        if decision.kind == "PRESENT_REQUEST":
            if approve:
                try:
                    self.present(decision.thread_id)
                    return {"action": "presented", "thread_id": decision.thread_id}
                except UnsatisfiableRequest as exc:
                    self.decline_presentation(decision.thread_id, str(exc))
                    return {"action": "declined", "reason": str(exc)}
            self.decline_presentation(decision.thread_id, "user declined")
            return {"action": "declined", "thread_id": decision.thread_id}
        if decision.kind == "AUDITOR_REQUEST":
            connection_id = decision.details["connection_id"]
            if approve:
                seq_nos = [int(s) for s in selection.get("seq_nos", decision.details["seq_nos"])]
                self.grant_audit_access(connection_id, seq_nos, decision.thread_id)
                return {"action": "audit_granted", "seq_nos": seq_nos}
            self.deny_audit_access(connection_id, decision.thread_id)
            return {"action": "audit_denied"}
        raise SoverClaimError(f"unknown decision kind {decision.kind}")

    # -- document management (proxied by the wallet UI) ----------------------------

    def _admin_routes(self) -> None:
        super()._admin_routes()
        router = self.messenger.router
        router.add("POST", "/documents", self._rpc_upload_document)
        router.add("GET", "/documents", self._rpc_list_documents)
        router.add("POST", "/documents/share", self._rpc_share_document)
        router.add("POST", "/documents/delete", self._rpc_delete_document)
        router.add("POST", "/issue/propose", self._rpc_propose)
        router.add("POST", "/audit/release", self._rpc_audit_release)

    def _require_uplink(self) -> Uplink:
        if self.uplink is None:
            raise SoverClaimError("agent has no storage uplink configured")
        return self.uplink

    def _rpc_upload_document(self, request: Request) -> Response:
        import struct as _struct

        (header_len,) = _struct.unpack_from("<I", request.body, 0)
        header = canonical_json_loads(request.body[4 : 4 + header_len])
        payload = request.body[4 + header_len :]
        uplink = self._require_uplink()
        bucket = header.get("bucket", "claims")
        try:
            uplink.make_bucket(bucket)
        except SoverClaimError:
            pass  # already there
        obj = uplink.upload(bucket, payload, key=header["key"])
        self.emit("document", {"bucket": bucket, "key": obj.key, "size": obj.size})
        return Response.json(
            {"bucket": bucket, "key": obj.key, "size": obj.size, "checksum": crypto.sha256(payload).hex()},
            status=201,
        )

    def _rpc_list_documents(self, request: Request) -> Response:
        uplink = self._require_uplink()
        bucket = request.query.get("bucket", "claims")
        try:
            keys = uplink.list_objects(bucket)
        except SoverClaimError:
            keys = []
        return Response.json({"bucket": bucket, "keys": keys})

    def _rpc_share_document(self, request: Request) -> Response:
        body = canonical_json_loads(request.body)
        uplink = self._require_uplink()
        capability = uplink.share(body["bucket"], body["key"], body.get("not_after"))
        return Response.json({"url": capability.url})

    def _rpc_delete_document(self, request: Request) -> Response:
        from ..errors import PartialDeletion

        body = canonical_json_loads(request.body)
        uplink = self._require_uplink()
        try:
            report = uplink.delete(body["bucket"], body["key"])
            partial = False
        except PartialDeletion as exc:
            report = exc.report
            partial = True
        payload = {
            "receipts": [r.to_dict() for r in report.receipts],
            "confirmed": len(report.receipts),
            "expected": len(report.receipts) + len(report.unreachable),
            "partial": partial,
            "unreachable": report.unreachable,
        }
        self.emit("document", {"deleted": body["key"], **payload})
        return Response.json(payload)

    def _rpc_propose(self, request: Request) -> Response:
        body = canonical_json_loads(request.body)
        try:
            thread_id = self.propose_credential(
                connection_id=body["connection_id"],
                claims=body["claims"],
                credential_type=body.get("credential_type", "Credential"),
                document_url=body.get("document_url", ""),
                document_checksum=body.get("document_checksum", ""),
                document_content_type=body.get("document_content_type", "application/octet-stream"),
            )
        except (KeyError, SoverClaimError) as exc:
            return Response.error(400, type(exc).__name__, str(exc))
        return Response.json({"thread_id": thread_id}, status=201)

    def _rpc_audit_release(self, request: Request) -> Response:
        body = canonical_json_loads(request.body)
        try:
            self.grant_audit_access(body["connection_id"], [int(s) for s in body["seq_nos"]])
        except (KeyError, SoverClaimError) as exc:
            return Response.error(400, type(exc).__name__, str(exc))
        return Response.json({"granted": True})


def canonical_json_loads(data: bytes) -> dict:
    return from_json(data)


class IssuerAgent(AgentBase):
    role = "issuer"

    def __init__(self, *args, policy: DocumentValidationPolicy | None = None, **kwargs) -> None:
        super().__init__(*args, **kwargs)
        self.policy = policy or DocumentValidationPolicy()
        self.sov_kp = self.wallet.ensure_key("issuer-sov", crypto.Alg.SIGN)
        self.sov_did = str(did_mod.sov_did_for_key(self.sov_kp.public_key))
        self.cred_def_id: str | None = None
        self.schema_attrs: list[str] = []
        # Stateless uplink: only used to fetch shared documents.
        self.reader_uplink: Uplink | None = None

    def attach_storage(self, satellite_address: str) -> None:
        self.reader_uplink = Uplink(
            self.net,
            satellite_address,
            state_dir=os.path.join(self.data_dir, "reader"),
            region=self.config.region,
        )

    def register_public_identity(self) -> str:
        document = did_mod.DidDocument(
            id=self.sov_did,
            verification_methods=[
                did_mod.VerificationMethod(f"{self.sov_did}#keys-1", "Ed25519", self.sov_kp.public_key)
            ],
            service_endpoints=[("didcomm", self.address)],
        )
        did_mod.register_public_did(self.ledger, document, self.sov_kp)
        return self.sov_did

    def setup_credential_type(self, name: str, version: str, attrs: list[str]) -> str:
        schema_id = creds.publish_schema(self.ledger, self.sov_did, self.sov_kp, name, version, attrs)
        self.cred_def_id = creds.publish_cred_def(self.ledger, self.sov_did, self.sov_kp, schema_id)
        self.schema_attrs = list(attrs)
        return self.cred_def_id

    def _register_handlers(self) -> None:
        m = self.messenger
        m.register_handler(ISSUE_PROPOSE, self._on_propose)
        m.register_handler(ISSUE_REQUEST, self._on_request)
        m.register_handler(ISSUE_ACK, self._on_ack)
        m.register_handler(ISSUE_ABANDON, self._on_abandon)

    def _on_propose(self, conn, inner, thread_id) -> None:
        if self.issue_records.get(thread_id) is not None:
            return  # duplicate
        record = {
            "thread_id": thread_id,
            "protocol": "issue",
            "role": "ISSUER",
            "state": "NEW",
            "connection_id": conn.connection_id,
            "credential_type": inner.get("credential_type", ""),
            "proposal": inner,
            "created_at": int(time.time() * 1000),
            "updated_at": int(time.time() * 1000),
        }
        ISSUE_ISSUER_FSM.advance(record, "PROPOSAL_RECEIVED")
        self.issue_records.put(record)
        self.emit("protocol", {"thread_id": thread_id, "state": record["state"]})
        try:
            self._process_proposal(conn, record, inner)
        except SoverClaimError as exc:
            self._abandon(record, f"{type(exc).__name__}: {exc}")

    def _process_proposal(self, conn, record, inner) -> None:
        # 1. Fetch the claim document through the holder's share URL.
        url = inner.get("document_url", "")
        if self.reader_uplink is None:
            raise DocumentUnavailable("issuer has no storage access configured")
        try:
            document = self.reader_uplink.download_shared(url)
        except SoverClaimError as exc:
            raise DocumentUnavailable(f"cannot fetch {url}: {exc}") from exc

        # 2. Deterministic document policy.
        self.policy.validate(
            record["credential_type"],
            document,
            {
                "content_type": inner.get("document_content_type", ""),
                "checksum": inner.get("document_checksum", ""),
            },
        )

        # 3. Prove the holder controls the pairwise DID it proposed under.
        subject = inner.get("subject_did", "")
        if subject != conn.their_did:
            raise OwnershipUnproven("proposal subject is not the connection peer DID")
        sig = b64u_decode_compat(inner.get("ownership_sig", ""))
        if not did_mod.check_ownership(subject, _ownership_portion(record["thread_id"], subject), sig):
            raise OwnershipUnproven("DID ownership challenge signature failed")

        # 4. Offer.
        if self.cred_def_id is None:
            raise ProtocolError("issuer has no credential definition configured")
        claims = inner.get("claims", {})
        if set(claims) != set(self.schema_attrs):
            raise PolicyRejected(
                f"claims {sorted(claims)} do not cover schema attributes {sorted(self.schema_attrs)}"
            )
        ISSUE_ISSUER_FSM.advance(record, "OFFER_SENT")
        record["offer"] = {"cred_def_id": self.cred_def_id, "preview": claims}
        self.issue_records.put(record)
        self.messenger.send(
            record["connection_id"],
            ISSUE_OFFER,
            {"cred_def_id": self.cred_def_id, "preview": claims},
            thread_id=record["thread_id"],
        )
        self.emit("protocol", {"thread_id": record["thread_id"], "state": "OFFER_SENT"})

    def _abandon(self, record, reason: str) -> None:
        if record["state"] in ("DONE", "ABANDONED"):
            return
        ISSUE_ISSUER_FSM.advance(record, "ABANDONED")
        record["reason"] = reason
        self.issue_records.put(record)
        try:
            self.messenger.send(
                record["connection_id"], ISSUE_ABANDON, {"reason": reason}, thread_id=record["thread_id"]
            )
        except SoverClaimError:
            pass
        self.emit("protocol", {"thread_id": record["thread_id"], "state": "ABANDONED", "reason": reason})

    def _on_request(self, conn, inner, thread_id) -> None:
        record = self.issue_records.get(thread_id)
        if record is None or record["state"] == "ABANDONED":
            return
        if record["state"] in ("CREDENTIAL_ISSUED", "DONE"):
            # Duplicate request: re-send the same credential.
            self.messenger.send(
                record["connection_id"], ISSUE_CREDENTIAL,
                {"credential": record["credential"]}, thread_id=thread_id,
            )
            return
        if record["state"] != "OFFER_SENT":
            return
        ISSUE_ISSUER_FSM.advance(record, "REQUEST_RECEIVED")
        self.issue_records.put(record)
        credential = creds.issue_credential(
            self.ledger,
            self.sov_did,
            self.sov_kp,
            record["offer"]["cred_def_id"],
            record["proposal"]["subject_did"],
            record["proposal"]["claims"],
        )
        ISSUE_ISSUER_FSM.advance(record, "CREDENTIAL_ISSUED")
        record["credential"] = credential.to_dict()
        record["cred_id"] = credential.cred_id
        self.issue_records.put(record)
        self.messenger.send(
            record["connection_id"], ISSUE_CREDENTIAL,
            {"credential": credential.to_dict()}, thread_id=thread_id,
        )
        self.emit("protocol", {"thread_id": thread_id, "state": "CREDENTIAL_ISSUED"})

    def _on_ack(self, conn, inner, thread_id) -> None:
        record = self.issue_records.get(thread_id)
        if record is None or record["state"] != "CREDENTIAL_ISSUED":
            return
        ISSUE_ISSUER_FSM.advance(record, "DONE")
        self.issue_records.put(record)
        self.emit("protocol", {"thread_id": thread_id, "state": "DONE"})

    def _on_abandon(self, conn, inner, thread_id) -> None:
        record = self.issue_records.get(thread_id)
        if record is None or record["state"] in ("DONE", "ABANDONED"):
            return
        ISSUE_ISSUER_FSM.advance(record, "ABANDONED")
        record["reason"] = inner.get("reason", "abandoned by holder")
        self.issue_records.put(record)

    def revoke(self, cred_id: str) -> int:
        if self.cred_def_id is None:
            raise ProtocolError("issuer has no credential definition configured")
        return creds.revoke_credential(self.ledger, self.sov_did, self.sov_kp, self.cred_def_id, cred_id)


def b64u_decode_compat(text: str) -> bytes:
    try:
        return b64_decode(text)
    except Exception:
        return b""


class VerifierAgent(AgentBase):
    role = "verifier"

    def __init__(self, *args, **kwargs) -> None:
        super().__init__(*args, **kwargs)
        self.seen_nonces: set[bytes] = set()
        self.results: dict[str, dict] = {}
        self.received_releases: dict[str, list] = {}
        self.audit_outcomes: dict[str, str] = {}

    def _register_handlers(self) -> None:
        m = self.messenger
        m.register_handler(PRESENT_PRESENTATION, self._on_presentation)
        m.register_handler(PRESENT_RESULT, self._on_declined)
        m.register_handler(AUDIT_RELEASE, self._on_audit_release)
        m.register_handler(AUDIT_DENY, self._on_audit_deny)

    def request_presentation(
        self, connection_id: str, attributes: list[str], cred_def_ids: dict[str, list[str]] | None = None
    ) -> str:
        conn = self.messenger.get_connection(connection_id)
        if conn is None:
            raise SoverClaimError(f"unknown connection {connection_id}")
        request = PresentationRequest.create(attributes, cred_def_ids)
        thread_id = request.request_id
        record = {
            "thread_id": thread_id,
            "protocol": "present",
            "role": "VERIFIER",
            "state": "NEW",
            "connection_id": connection_id,
            "request": request.to_dict(),
            "created_at": int(time.time() * 1000),
            "updated_at": int(time.time() * 1000),
        }
        PRESENT_VERIFIER_FSM.advance(record, "REQUEST_SENT")
        self.present_records.put(record)
        self.messenger.send(
            connection_id, PRESENT_REQUEST, {"request": request.to_dict()}, thread_id=thread_id
        )
        self.emit("protocol", {"thread_id": thread_id, "state": "REQUEST_SENT"})
        return thread_id

    def _on_presentation(self, conn, inner, thread_id) -> None:
        record = self.present_records.get(thread_id)
        if record is None or record["state"] != "REQUEST_SENT":
            return
        PRESENT_VERIFIER_FSM.advance(record, "PRESENTATION_RECEIVED")
        self.present_records.put(record)
        presentation = VerifiablePresentation.from_dict(inner["presentation"])
        request = PresentationRequest.from_dict(record["request"])
        result = creds.verify_presentation(self.ledger, presentation, request, seen_nonces=self.seen_nonces)
        self.seen_nonces.add(request.nonce)
        granted = result.ok
        reason = "" if granted else ";".join(result.failed_checks())
        PRESENT_VERIFIER_FSM.advance(record, "VERIFIED" if granted else "DENIED")
        record["result"] = {"granted": granted, "reason": reason, "checks": result.checks}
        PRESENT_VERIFIER_FSM.advance(record, "DONE")
        self.present_records.put(record)
        self.results[thread_id] = record["result"]
        self.messenger.send(
            record["connection_id"], PRESENT_RESULT,
            {"granted": granted, "reason": reason}, thread_id=thread_id,
        )
        self.emit("decision_result", {"thread_id": thread_id, "granted": granted, "reason": reason})

    def _on_declined(self, conn, inner, thread_id) -> None:
        if not inner.get("declined"):
            return
        record = self.present_records.get(thread_id)
        if record is None or record["state"] != "REQUEST_SENT":
            return
        PRESENT_VERIFIER_FSM.advance(record, "DENIED")
        record["result"] = {"granted": False, "reason": inner.get("reason", "declined by holder")}
        PRESENT_VERIFIER_FSM.advance(record, "DONE")
        self.present_records.put(record)
        self.results[thread_id] = record["result"]

    # -- auditor capability ------------------------------------------------------

    def request_audit_access(self, connection_id: str, seq_nos: list[int]) -> str:
        thread_id = uuid.uuid4().hex
        self.audit_outcomes[thread_id] = "pending"
        self.messenger.send(
            connection_id, AUDIT_REQUEST, {"seq_nos": seq_nos}, thread_id=thread_id
        )
        return thread_id

    def _on_audit_release(self, conn, inner, thread_id) -> None:
        entries = auditor_read(self.ledger, inner["release"])
        self.received_releases[thread_id] = [
            {"seq_no": seq, **entry.to_dict()} for seq, entry in entries
        ]
        self.audit_outcomes[thread_id] = "granted"
        self.emit("audit_release", {"thread_id": thread_id, "entries": len(entries)})

    def _on_audit_deny(self, conn, inner, thread_id) -> None:
        self.audit_outcomes[thread_id] = "denied"
        self.emit("audit_release", {"thread_id": thread_id, "denied": True})

    def _admin_routes(self) -> None:
        super()._admin_routes()
        router = self.messenger.router
        router.add("POST", "/present/request", self._rpc_request_presentation)
        router.add("GET", "/results/{thread_id}", self._rpc_result)
        router.add("POST", "/audit/request", self._rpc_audit_request)
        router.add("GET", "/audit/received", self._rpc_audit_received)
        router.add("GET", "/audit/outcomes", self._rpc_audit_outcomes)

    def _rpc_request_presentation(self, request: Request) -> Response:
        body = canonical_json_loads(request.body)
        try:
            thread_id = self.request_presentation(
                body["connection_id"], body["attributes"], body.get("cred_def_ids")
            )
        except (KeyError, TypeError) as exc:
            return Response.error(400, "BadRequest", str(exc))
        except SoverClaimError as exc:
            return Response.error(400, type(exc).__name__, str(exc))
        return Response.json({"thread_id": thread_id}, status=201)

    def _rpc_result(self, request: Request, thread_id: str) -> Response:
        result = self.results.get(thread_id)
        if result is None:
            return Response.error(404, "NoSuchThread", thread_id)
        return Response.json(result)

    def _rpc_audit_request(self, request: Request) -> Response:
        body = canonical_json_loads(request.body)
        try:
            thread_id = self.request_audit_access(
                body["connection_id"], [int(s) for s in body["seq_nos"]]
            )
        except (KeyError, TypeError) as exc:
            return Response.error(400, "BadRequest", str(exc))
        except SoverClaimError as exc:
            return Response.error(400, type(exc).__name__, str(exc))
        return Response.json({"thread_id": thread_id}, status=201)

    def _rpc_audit_received(self, request: Request) -> Response:
        return Response.json(self.received_releases)

    def _rpc_audit_outcomes(self, request: Request) -> Response:
        return Response.json(self.audit_outcomes)
