"""Pairwise encrypted messaging between agents (DIDComm-style), plus the
out-of-band invitation / request / response connection handshake.

Envelope keys come from X25519 static-static agreement between the
pairwise connection keys, so a captured envelope neither decrypts nor
identifies its inner message; sender authenticity falls out of the key
agreement once the handshake has pinned the peer's key. Delivery is
at-least-once with per-connection sequence numbers; the receiver
deduplicates and releases messages to handlers in order, which protocol
layers see as exactly-once.
"""

from __future__ import annotations

import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import crypto, qr
from .did import create_local_did, resolve_local
from .encoding import b64u, b64u_decode, canonical_json, from_json
from .errors import (
    ConnectionClosed,
    DecryptFailure,
    DeliveryFailed,
    HandshakeTimeout,
    InvitationConsumed,
    ProtocolError,
    SoverClaimError,
)
from .transport import Request, Response, Router, SimNetwork

ENVELOPE_CONTENT_TYPE = "application/ssi-envelope+json"

INVITE_URL_PREFIX = "didcomm://invite?oob="

# Connection handshake states, in order.
INVITED = "INVITED"
REQUESTED = "REQUESTED"
RESPONDED = "RESPONDED"
COMPLETE = "COMPLETE"

_NEXT_STATE = {INVITED: REQUESTED, REQUESTED: RESPONDED, RESPONDED: COMPLETE}


@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.2
    multiplier: float = 2.0


@dataclass
class OobInvitation:
    invitation_id: str
    label: str
    recipient_key: bytes
    service_endpoint: str

    def to_dict(self) -> dict:
        return {
            "id": self.invitation_id,
            "label": self.label,
            "recipient_key": b64u(self.recipient_key),
            "endpoint": self.service_endpoint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OobInvitation":
        return cls(
            invitation_id=data["id"],
            label=data["label"],
            recipient_key=b64u_decode(data["recipient_key"]),
            service_endpoint=data["endpoint"],
        )

    def to_url(self) -> str:
        return INVITE_URL_PREFIX + b64u(canonical_json(self.to_dict()))

    @classmethod
    def from_url(cls, url: str) -> "OobInvitation":
        if not url.startswith(INVITE_URL_PREFIX):
            raise ValueError(f"not an invitation URL: {url[:40]!r}")
        return cls.from_dict(from_json(b64u_decode(url[len(INVITE_URL_PREFIX):])))

    def qr_payload(self) -> str:
        return self.to_url()

    def qr_png(self) -> bytes:
        return qr.render_png(self.to_url())


@dataclass
class ConnectionRecord:
    connection_id: str
    role: str  # inviter | requester
    state: str
    my_did: str
    my_sign: crypto.KeyPair = field(repr=False)
    my_kem: crypto.KeyPair = field(repr=False)
    invitation_id: str = ""
    their_label: str = ""
    their_did: str | None = None
    their_kem: bytes | None = None
    their_endpoint: str | None = None
    send_seq: int = 1
    recv_next: int = 1
    recv_buffer: dict[int, dict] = field(default_factory=dict)
    complete_event: threading.Event = field(default_factory=threading.Event)

    def to_public_dict(self) -> dict:
        return {
            "connection_id": self.connection_id,
            "role": self.role,
            "state": self.state,
            "my_did": self.my_did,
            "their_did": self.their_did,
            "their_label": self.their_label,
            "their_endpoint": self.their_endpoint,
        }


def seal_envelope(
    sender_kem: crypto.KeyPair,
    recipient_key: bytes,
    inner: dict,
    seq: int,
    thread_id: str,
) -> dict:
    nonce = os.urandom(12)
    header = {
        "v": crypto.SUITE_ID,
        "sender_key": b64u(sender_kem.public_key),
        "recipient_key": b64u(recipient_key),
        "nonce": b64u(nonce),
        "seq": seq,
        "thread_id": thread_id,
    }
    key = _envelope_key(sender_kem.secret_key, sender_kem.public_key, recipient_key)
    ciphertext = crypto.aead_encrypt(key, nonce, canonical_json(inner), canonical_json(header))
    return {"header": header, "ciphertext": b64u(ciphertext)}


def open_envelope(recipient_kem: crypto.KeyPair, envelope: dict) -> tuple[dict, dict]:
    try:
        header = envelope["header"]
        sender_pub = b64u_decode(header["sender_key"])
        nonce = b64u_decode(header["nonce"])
        ciphertext = b64u_decode(envelope["ciphertext"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DecryptFailure(f"malformed envelope: {exc}") from exc
    key = _envelope_key(recipient_kem.secret_key, sender_pub, recipient_kem.public_key)
    try:
        plaintext = crypto.aead_decrypt(key, nonce, ciphertext, canonical_json(header))
    except SoverClaimError as exc:
        raise DecryptFailure("envelope failed authentication") from exc
    return header, from_json(plaintext)


def _envelope_key(my_secret: bytes, sender_pub: bytes, recipient_pub: bytes) -> bytes:
    from cryptography.hazmat.primitives.asymmetric.x25519 import (
        X25519PrivateKey,
        X25519PublicKey,
    )
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    priv = X25519PrivateKey.from_private_bytes(my_secret)
    my_pub = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    other = recipient_pub if my_pub == sender_pub else sender_pub
    shared = priv.exchange(X25519PublicKey.from_public_bytes(other))
    return crypto.derive_key(
        shared, b"didcomm-envelope/" + sender_pub + recipient_pub
    )


def _request_core(thread_id: str, did_str: str, kem_key: bytes, endpoint: str) -> bytes:
    return canonical_json(
        {"thread": thread_id, "did": did_str, "kem_key": b64u(kem_key), "endpoint": endpoint}
    )


class Messenger:
    """One agent's messaging runtime: inbound dispatch, handshakes,
    ordered delivery, and retries."""

    def __init__(
        self,
        net: SimNetwork,
        address: str,
        label: str,
        region: str = "local",
        retry: RetryPolicy | None = None,
    ) -> None:
        self.net = net
        self.address = address
        self.label = label
        self.region = region
        self.retry = retry or RetryPolicy()
        self.lock = threading.RLock()
        self.invitations: dict[str, dict] = {}  # id -> {kem, consumed_by, label}
        self.connections: dict[str, ConnectionRecord] = {}
        self._by_kem: dict[str, ConnectionRecord] = {}
        self.handlers: dict[str, object] = {}
        self.transition_log: list[tuple[str, str, str]] = []
        self.event_listeners: list = []
        self._executor = ThreadPoolExecutor(max_workers=4, thread_name_prefix=f"msg-{label}")
        self._conn_busy: set[str] = set()
        self._conn_queues: dict[str, list] = {}

        self.router = Router()
        self.router.add("POST", "/didcomm", self._rpc_didcomm)

    def start(self) -> None:
        self.net.register(self.address, self.router, self.region)

    def stop(self) -> None:
        self.net.deregister(self.address)
        self._executor.shutdown(wait=False, cancel_futures=True)

    # -- events ------------------------------------------------------------

    def _emit(self, event: str, data: dict) -> None:
        for listener in list(self.event_listeners):
            try:
                listener(event, data)
            except Exception:
                pass

    def _transition(self, conn: ConnectionRecord, new_state: str) -> None:
        if _NEXT_STATE.get(conn.state) != new_state:
            raise ProtocolError(
                f"illegal connection transition {conn.state} -> {new_state}"
            )
        self.transition_log.append((conn.connection_id, conn.state, new_state))
        conn.state = new_state
        if new_state == COMPLETE:
            conn.complete_event.set()
        self._emit("connection", conn.to_public_dict())

    # -- invitations ---------------------------------------------------------

    def create_invitation(self) -> OobInvitation:
        kem = crypto.generate_keypair(crypto.Alg.KEM)
        invitation = OobInvitation(
            invitation_id=uuid.uuid4().hex,
            label=self.label,
            recipient_key=kem.public_key,
            service_endpoint=self.address,
        )
        with self.lock:
            self.invitations[invitation.invitation_id] = {
                "kem": kem,
                "consumed_by": None,
                "connection_id": None,
            }
        return invitation

    def accept_invitation(self, invitation: OobInvitation | str, timeout: float = 10.0) -> ConnectionRecord:
        if isinstance(invitation, str):
            invitation = OobInvitation.from_url(invitation)
        sign = crypto.generate_keypair(crypto.Alg.SIGN)
        kem = crypto.generate_keypair(crypto.Alg.KEM)
        my_did, _ = create_local_did(sign)
        conn = ConnectionRecord(
            connection_id=uuid.uuid4().hex,
            role="requester",
            state=INVITED,
            my_did=str(my_did),
            my_sign=sign,
            my_kem=kem,
            invitation_id=invitation.invitation_id,
            their_label=invitation.label,
            their_endpoint=invitation.service_endpoint,
        )
        with self.lock:
            self.connections[conn.connection_id] = conn
            self._by_kem[b64u(kem.public_key)] = conn

        core = _request_core(invitation.invitation_id, conn.my_did, kem.public_key, self.address)
        inner = {
            "type": "connections/request",
            "did": conn.my_did,
            "kem_key": b64u(kem.public_key),
            "endpoint": self.address,
            "label": self.label,
            "sig": b64u(crypto.sign(sign.secret_key, core)),
        }
        with self.lock:
            self._transition(conn, REQUESTED)

        deadline = time.monotonic() + timeout
        delay = self.retry.backoff
        attempt = 0
        while time.monotonic() < deadline:
            if attempt < self.retry.attempts or attempt == 0:
                envelope = seal_envelope(
                    kem, invitation.recipient_key, inner, seq=0,
                    thread_id=invitation.invitation_id,
                )
                try:
                    response = self.net.request(
                        invitation.service_endpoint,
                        Request(
                            method="POST",
                            path="/didcomm",
                            body=canonical_json(envelope),
                            content_type=ENVELOPE_CONTENT_TYPE,
                        ),
                        src_region=self.region,
                    )
                    if response.status == 403:
                        raise InvitationConsumed(invitation.invitation_id)
                except InvitationConsumed:
                    raise
                except SoverClaimError:
                    pass  # lost; retry below
                attempt += 1
            if conn.complete_event.wait(min(delay, max(0.0, deadline - time.monotonic()))):
                return conn
            delay *= self.retry.multiplier
        raise HandshakeTimeout(f"connection to {invitation.label} did not complete")

    # -- inbound ---------------------------------------------------------------

    def _rpc_didcomm(self, request: Request) -> Response:
        envelope = from_json(request.body)
        header = envelope.get("header", {})
        recipient_key = header.get("recipient_key", "")

        with self.lock:
            invitation = next(
                (
                    (iid, inv)
                    for iid, inv in self.invitations.items()
                    if b64u(inv["kem"].public_key) == recipient_key
                ),
                None,
            )
            conn = self._by_kem.get(recipient_key)

        try:
            if invitation is not None:
                _, inner = open_envelope(invitation[1]["kem"], envelope)
                return self._on_connection_request(invitation[0], inner)
            if conn is None:
                return Response.error(404, "UnknownRecipient", recipient_key[:16])
            header, inner = open_envelope(conn.my_kem, envelope)
        except DecryptFailure as exc:
            return Response.error(400, "DecryptFailure", str(exc))

        msg_type = inner.get("type", "")
        if msg_type == "connections/response":
            return self._on_connection_response(conn, inner)
        if msg_type == "connections/complete":
            return self._on_connection_complete(conn, header)
        return self._on_protocol_message(conn, header, inner)

    def _on_connection_request(self, invitation_id: str, inner: dict) -> Response:
        their_did = inner.get("did", "")
        core = _request_core(
            invitation_id, their_did, b64u_decode(inner.get("kem_key", "")), inner.get("endpoint", "")
        )
        try:
            doc = resolve_local(their_did)
        except SoverClaimError as exc:
            return Response.error(400, "BadSignature", str(exc))
        if not crypto.verify(doc.primary_key, core, b64u_decode(inner.get("sig", ""))):
            return Response.error(400, "BadSignature", "request signature invalid")

        with self.lock:
            invitation = self.invitations[invitation_id]
            if invitation["consumed_by"] not in (None, their_did):
                return Response.error(403, "InvitationConsumed", invitation_id)
            if invitation["consumed_by"] is None:
                # First use: mint the pairwise identity for this connection.
                sign = crypto.generate_keypair(crypto.Alg.SIGN)
                kem = crypto.generate_keypair(crypto.Alg.KEM)
                my_did, _ = create_local_did(sign)
                conn = ConnectionRecord(
                    connection_id=uuid.uuid4().hex,
                    role="inviter",
                    state=INVITED,
                    my_did=str(my_did),
                    my_sign=sign,
                    my_kem=kem,
                    invitation_id=invitation_id,
                    their_label=inner.get("label", ""),
                    their_did=their_did,
                    their_kem=b64u_decode(inner["kem_key"]),
                    their_endpoint=inner["endpoint"],
                )
                self.connections[conn.connection_id] = conn
                self._by_kem[b64u(kem.public_key)] = conn
                invitation["consumed_by"] = their_did
                invitation["connection_id"] = conn.connection_id
                self._transition(conn, REQUESTED)
            else:
                conn = self.connections[invitation["connection_id"]]

        try:
            self._executor.submit(self._send_connection_response, conn)
        except RuntimeError:
            pass
        return Response.json({"ack": 0})

    def _send_connection_response(self, conn: ConnectionRecord) -> None:
        core = _request_core(
            conn.invitation_id, conn.my_did, conn.my_kem.public_key, self.address
        )
        inner = {
            "type": "connections/response",
            "did": conn.my_did,
            "kem_key": b64u(conn.my_kem.public_key),
            "endpoint": self.address,
            "label": self.label,
            "sig": b64u(crypto.sign(conn.my_sign.secret_key, core)),
        }
        with self.lock:
            if conn.state == REQUESTED:
                self._transition(conn, RESPONDED)
        envelope = seal_envelope(
            conn.my_kem, conn.their_kem, inner, seq=0, thread_id=conn.invitation_id
        )
        self._post_with_retries(conn.their_endpoint, envelope)

    def _on_connection_response(self, conn: ConnectionRecord, inner: dict) -> Response:
        their_did = inner.get("did", "")
        core = _request_core(
            conn.invitation_id, their_did, b64u_decode(inner.get("kem_key", "")), inner.get("endpoint", "")
        )
        try:
            doc = resolve_local(their_did)
        except SoverClaimError as exc:
            return Response.error(400, "BadSignature", str(exc))
        if not crypto.verify(doc.primary_key, core, b64u_decode(inner.get("sig", ""))):
            return Response.error(400, "BadSignature", "response signature invalid")
        with self.lock:
            if conn.state == REQUESTED:
                conn.their_did = their_did
                conn.their_kem = b64u_decode(inner["kem_key"])
                conn.their_endpoint = inner["endpoint"]
                conn.their_label = inner.get("label", conn.their_label)
                self._transition(conn, RESPONDED)
                self._transition(conn, COMPLETE)
        try:
            self._executor.submit(self._send_connection_complete, conn)
        except RuntimeError:
            pass
        return Response.json({"ack": 0})

    def _send_connection_complete(self, conn: ConnectionRecord) -> None:
        inner = {"type": "connections/complete"}
        envelope = seal_envelope(
            conn.my_kem, conn.their_kem, inner, seq=0, thread_id=conn.invitation_id
        )
        self._post_with_retries(conn.their_endpoint, envelope)

    def _on_connection_complete(self, conn: ConnectionRecord, header: dict) -> Response:
        if header.get("sender_key") != b64u(conn.their_kem or b""):
            return Response.error(400, "BadSignature", "complete from unknown key")
        with self.lock:
            if conn.state == RESPONDED:
                self._transition(conn, COMPLETE)
        return Response.json({"ack": 0})

    # -- protocol messages -------------------------------------------------------

    def register_handler(self, msg_type: str, handler) -> None:
        self.handlers[msg_type] = handler

    def _on_protocol_message(self, conn: ConnectionRecord, header: dict, inner: dict) -> Response:
        if header.get("sender_key") != b64u(conn.their_kem or b""):
            # Forged sender: key agreement would already have failed, but a
            # stolen envelope replayed from another key dies here too.
            return Response.error(400, "BadSignature", "sender key not pinned to connection")
        with self.lock:
            if conn.state == RESPONDED and conn.role == "inviter":
                # First authenticated traffic doubles as the handshake ack.
                self._transition(conn, COMPLETE)
            if conn.state != COMPLETE:
                return Response.error(409, "ConnectionClosed", conn.state)
            seq = int(header.get("seq", 0))
            if seq < conn.recv_next or seq in conn.recv_buffer:
                return Response.json({"ack": seq})  # duplicate
            conn.recv_buffer[seq] = {"inner": inner, "thread_id": header.get("thread_id", "")}
            ready = []
            while conn.recv_next in conn.recv_buffer:
                ready.append(conn.recv_buffer.pop(conn.recv_next))
                conn.recv_next += 1
        for message in ready:
            self._dispatch(conn, message)
        return Response.json({"ack": seq})

    def _dispatch(self, conn: ConnectionRecord, message: dict) -> None:
        with self.lock:
            self._conn_queues.setdefault(conn.connection_id, []).append(message)
            if conn.connection_id in self._conn_busy:
                return
            self._conn_busy.add(conn.connection_id)
        try:
            self._executor.submit(self._drain, conn)
        except RuntimeError:
            pass  # messenger is shutting down

    def _drain(self, conn: ConnectionRecord) -> None:
        while True:
            with self.lock:
                queue = self._conn_queues.get(conn.connection_id, [])
                if not queue:
                    self._conn_busy.discard(conn.connection_id)
                    return
                message = queue.pop(0)
            inner = message["inner"]
            handler = self.handlers.get(inner.get("type", ""))
            if handler is None:
                continue
            try:
                handler(conn, inner, message["thread_id"])
            except DeliveryFailed as exc:
                import logging

                logging.getLogger(__name__).debug(
                    "%s: %s handler could not reach peer: %s", self.label, inner.get("type"), exc
                )
            except Exception:
                import logging

                logging.getLogger(__name__).exception(
                    "%s: handler for %s failed", self.label, inner.get("type")
                )

    # -- outbound ------------------------------------------------------------------

    def send(self, connection_id: str, msg_type: str, body: dict, thread_id: str | None = None) -> int:
        """Deliver a typed message over a COMPLETE connection; returns the
        acknowledged sequence number."""
        with self.lock:
            conn = self.connections.get(connection_id)
            if conn is None or conn.state != COMPLETE:
                raise ConnectionClosed(f"connection {connection_id} not usable")
            seq = conn.send_seq
            conn.send_seq += 1
        inner = {"type": msg_type, **body}
        envelope = seal_envelope(
            conn.my_kem, conn.their_kem, inner, seq=seq, thread_id=thread_id or uuid.uuid4().hex
        )
        self._post_with_retries(conn.their_endpoint, envelope)
        return seq

    def _post_with_retries(self, endpoint: str, envelope: dict) -> None:
        delay = self.retry.backoff
        last: Exception | None = None
        for _ in range(self.retry.attempts):
            try:
                response = self.net.request(
                    endpoint,
                    Request(
                        method="POST",
                        path="/didcomm",
                        body=canonical_json(envelope),
                        content_type=ENVELOPE_CONTENT_TYPE,
                    ),
                    src_region=self.region,
                )
                if response.status == 200:
                    return
                last = DeliveryFailed(f"peer answered {response.status}")
            except SoverClaimError as exc:
                last = exc
            time.sleep(delay)
            delay *= self.retry.multiplier
        raise DeliveryFailed(str(last))

    # -- views ----------------------------------------------------------------------

    def get_connection(self, connection_id: str) -> ConnectionRecord | None:
        return self.connections.get(connection_id)

    def list_connections(self) -> list[dict]:
        with self.lock:
            return [c.to_public_dict() for c in self.connections.values()]
