"""Agent runtime shared by issuer, holder, and verifier roles: sealed
wallet, append-only protocol record store, DIDComm endpoint, audit log,
admin API routes, and the event stream feeding the UI."""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field

from .. import crypto
from ..audit import AuditLog, AuditLogEntry
from ..credentials import VerifiableCredential
from ..did import create_local_did
from ..encoding import b64, b64_decode, canonical_json, from_json
from ..errors import ProtocolError, SoverClaimError
from ..messaging import Messenger, OobInvitation, RetryPolicy
from ..transport import Request, Response, SimNetwork

WALLET_KEYS = ("audit-sign", "audit-kem", "storage-owner", "wallet-data")


@dataclass
class AgentConfig:
    protocol_timeout: float = 30.0
    auto_approve: bool = True
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    region: str = "local"
    keystore_kdf: dict | None = None  # tests pass cheaper scrypt params


class Wallet:
    """Keystore-sealed agent storage: long-lived keys plus encrypted
    credential records and the holder's schema cache."""

    def __init__(self, data_dir: str, passphrase: str, kdf_params: dict | None = None) -> None:
        self.data_dir = data_dir
        self.passphrase = passphrase
        self.kdf_params = kdf_params
        os.makedirs(data_dir, exist_ok=True)
        self.keystore_path = os.path.join(data_dir, "keys.svck")
        self.records_path = os.path.join(data_dir, "credentials.enc")
        self.keys = self._open_or_create_keys()
        self._data_key = crypto.derive_key(self.keys["wallet-data"].secret_key, b"wallet-data")
        self._lock = threading.Lock()
        self.credentials: dict[str, VerifiableCredential] = {}
        self.schemas: dict[str, list[str]] = {}  # cred_def_id -> attr names
        self.subject_keys: dict[str, crypto.KeyPair] = {}  # cred_id -> pairwise key
        self._load_records()

    def _open_or_create_keys(self) -> dict[str, crypto.KeyPair]:
        if os.path.exists(self.keystore_path):
            return crypto.open_keystore(self.keystore_path, self.passphrase)
        keys = {
            "audit-sign": crypto.generate_keypair(crypto.Alg.SIGN),
            "audit-kem": crypto.generate_keypair(crypto.Alg.KEM),
            "storage-owner": crypto.generate_keypair(crypto.Alg.SIGN),
            "wallet-data": crypto.generate_keypair(crypto.Alg.KEM),
        }
        crypto.seal_keystore(keys, self.passphrase, self.keystore_path, kdf_params=self.kdf_params)
        return keys

    def _load_records(self) -> None:
        if not os.path.exists(self.records_path):
            return
        with open(self.records_path, "rb") as fh:
            blob = fh.read()
        nonce, ciphertext = blob[:12], blob[12:]
        data = from_json(crypto.aead_decrypt(self._data_key, nonce, ciphertext, b"wallet-records"))
        self.credentials = {
            c["cred_id"]: VerifiableCredential.from_dict(c) for c in data.get("credentials", [])
        }
        self.schemas = data.get("schemas", {})
        self.subject_keys = {
            cred_id: crypto.keypair_from_secret(crypto.Alg.SIGN, b64_decode(secret))
            for cred_id, secret in data.get("subject_keys", {}).items()
        }

    def _persist(self) -> None:
        payload = canonical_json(
            {
                "credentials": [c.to_dict() for c in self.credentials.values()],
                "schemas": self.schemas,
                "subject_keys": {
                    cred_id: b64(kp.secret_key) for cred_id, kp in self.subject_keys.items()
                },
            }
        )
        nonce = os.urandom(12)
        blob = nonce + crypto.aead_encrypt(self._data_key, nonce, payload, b"wallet-records")
        tmp = self.records_path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, self.records_path)

    def ensure_key(self, name: str, alg: crypto.Alg) -> crypto.KeyPair:
        """Fetch a named long-lived key, creating and resealing if absent."""
        if name not in self.keys:
            self.keys[name] = crypto.generate_keypair(alg)
            crypto.seal_keystore(self.keys, self.passphrase, self.keystore_path, kdf_params=self.kdf_params)
        return self.keys[name]

    def store_credential(
        self,
        credential: VerifiableCredential,
        attr_names: list[str],
        subject_kp: crypto.KeyPair | None = None,
    ) -> bool:
        """Idempotent by cred_id; returns False on a duplicate."""
        with self._lock:
            if credential.cred_id in self.credentials:
                return False
            self.credentials[credential.cred_id] = credential
            self.schemas[credential.cred_def_id] = attr_names
            if subject_kp is not None:
                self.subject_keys[credential.cred_id] = subject_kp
            self._persist()
            return True

    def list_credentials(self) -> list[VerifiableCredential]:
        with self._lock:
            return list(self.credentials.values())


class RecordStore:
    """Append-only protocol record journal; the last line per thread_id
    wins on replay, which is what makes agents restartable."""

    def __init__(self, path: str) -> None:
        self.path = path
        self._lock = threading.Lock()
        self.records: dict[str, dict] = {}
        if os.path.exists(path):
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self.records[record["thread_id"]] = record

    def put(self, record: dict) -> None:
        with self._lock:
            self.records[record["thread_id"]] = record
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def get(self, thread_id: str) -> dict | None:
        with self._lock:
            record = self.records.get(thread_id)
            return dict(record) if record else None

    def all(self) -> list[dict]:
        with self._lock:
            return [dict(r) for r in self.records.values()]

    def persisted_bytes(self) -> int:
        try:
            return os.path.getsize(self.path)
        except OSError:
            return 0


class StateMachine:
    """Transition table guard shared by the issue and present protocols."""

    def __init__(self, name: str, transitions: dict[str, set[str]]) -> None:
        self.name = name
        self.transitions = transitions

    def advance(self, record: dict, new_state: str) -> None:
        current = record["state"]
        if new_state not in self.transitions.get(current, set()):
            raise ProtocolError(
                f"{self.name}: illegal transition {current} -> {new_state} (thread {record['thread_id']})"
            )
        record["state"] = new_state
        record["updated_at"] = int(time.time() * 1000)


@dataclass
class PendingDecision:
    decision_id: str
    kind: str  # OFFER | PRESENT_REQUEST | AUDITOR_REQUEST
    thread_id: str
    details: dict
    created_at: int

    def to_dict(self) -> dict:
        return {
            "decision_id": self.decision_id,
            "kind": self.kind,
            "thread_id": self.thread_id,
            "details": self.details,
            "created_at": self.created_at,
        }


class AgentBase:
    """Wiring common to all three roles."""

    role = "agent"

    def __init__(
        self,
        name: str,
        net: SimNetwork,
        data_dir: str,
        ledger,
        passphrase: str = "correct horse",
        config: AgentConfig | None = None,
        address: str | None = None,
    ) -> None:
        self.name = name
        self.net = net
        self.data_dir = data_dir
        self.ledger = ledger
        self.config = config or AgentConfig()
        self.address = address or f"net://{name}"

        self.wallet = Wallet(data_dir, passphrase, kdf_params=self.config.keystore_kdf)
        audit_did, _ = create_local_did(self.wallet.keys["audit-sign"])
        self.audit = AuditLog(
            ledger, str(audit_did), self.wallet.keys["audit-sign"], self.wallet.keys["audit-kem"]
        )
        self.issue_records = RecordStore(os.path.join(data_dir, "issue-records.jsonl"))
        self.present_records = RecordStore(os.path.join(data_dir, "present-records.jsonl"))

        self.messenger = Messenger(
            net, self.address, label=name, region=self.config.region, retry=self.config.retry
        )
        self.messenger.event_listeners.append(self._on_messenger_event)

        self.decisions: dict[str, PendingDecision] = {}
        self.events: deque = deque(maxlen=512)
        self._event_cond = threading.Condition()
        self._event_seq = 0
        self.protocol_errors: list[str] = []
        self._lock = threading.RLock()
        self._sweeper: threading.Thread | None = None
        self._audit_worker: threading.Thread | None = None
        self._audit_queue: deque = deque()
        self._audit_idle = threading.Event()
        self._audit_idle.set()
        self._running = False

        self._register_handlers()
        self._admin_routes()

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._running = True
        if hasattr(self.net, "add_sse_source"):
            self.net.add_sse_source(self.address, "/events", self.wait_events)
        self.messenger.start()
        self._abandon_stale_on_restart()
        self._sweeper = threading.Thread(target=self._sweep_loop, daemon=True, name=f"{self.name}-sweep")
        self._sweeper.start()
        self._audit_worker = threading.Thread(
            target=self._audit_loop, daemon=True, name=f"{self.name}-audit"
        )
        self._audit_worker.start()

    def stop(self) -> None:
        self.audit_drain(timeout=5.0)
        self._running = False
        self.messenger.stop()

    def _abandon_stale_on_restart(self) -> None:
        """Crash recovery: in-flight threads either resume (terminal states
        kept) or abandon cleanly. Never re-issues."""
        for store, terminal in (
            (self.issue_records, {"DONE", "ABANDONED"}),
            (self.present_records, {"DONE"}),
        ):
            for record in store.all():
                if record["state"] not in terminal:
                    record["state"] = "ABANDONED"
                    record["reason"] = "restarted mid-protocol"
                    store.put(record)

    def _sweep_loop(self) -> None:
        while self._running:
            time.sleep(min(1.0, self.config.protocol_timeout / 4))
            now = int(time.time() * 1000)
            horizon = self.config.protocol_timeout * 1000
            for store in (self.issue_records, self.present_records):
                for record in store.all():
                    if record["state"] in ("DONE", "ABANDONED", "VERIFIED", "DENIED"):
                        continue
                    if now - record.get("updated_at", now) > horizon:
                        record["state"] = "ABANDONED"
                        record["reason"] = "Timeout"
                        store.put(record)
                        self.emit("protocol", {"thread_id": record["thread_id"], "state": "ABANDONED"})

    # -- events ---------------------------------------------------------------

    def emit(self, event: str, data: dict) -> None:
        with self._event_cond:
            self._event_seq += 1
            self.events.append({"id": self._event_seq, "event": event, "data": data, "ts": int(time.time() * 1000)})
            self._event_cond.notify_all()

    def wait_events(self, after_id: int, timeout: float = 25.0) -> list[dict]:
        with self._event_cond:
            if not any(e["id"] > after_id for e in self.events):
                self._event_cond.wait(timeout)
            return [e for e in self.events if e["id"] > after_id]

    def _on_messenger_event(self, event: str, data: dict) -> None:
        self.emit(event, data)

    def record_protocol_error(self, exc: Exception) -> None:
        self.protocol_errors.append(str(exc))

    # -- audit helper -----------------------------------------------------------

    def audit_event(self, operation: str, credential_type: str, user_did: str, counterparty_did: str) -> None:
        """Queue an audit entry for anchoring. Anchoring runs on a worker
        so protocol handlers never wait on a ledger commit; the queue plus
        the ledger's transaction dedup give exactly-once anchoring."""
        entry = AuditLogEntry(
            operation=operation,
            credential_type=credential_type,
            user_did=user_did,
            counterparty_did=counterparty_did,
            timestamp=int(time.time() * 1000),
        )
        self._audit_idle.clear()
        self._audit_queue.append(entry)
        self.emit("audit", entry.to_dict())

    def _audit_loop(self) -> None:
        while self._running or self._audit_queue:
            if not self._audit_queue:
                self._audit_idle.set()
                time.sleep(0.005)
                continue
            entry = self._audit_queue.popleft()
            try:
                self.audit.record_event(entry)
            except Exception:
                import logging

                logging.getLogger(__name__).exception("%s: audit anchoring failed", self.name)
            if not self._audit_queue:
                self.audit.flush()
                self._audit_idle.set()
        self._audit_idle.set()

    def audit_drain(self, timeout: float = 10.0) -> bool:
        """Block until every queued audit entry has been anchored (or the
        outage queue retried once). Used by tests and shutdown."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if not self._audit_queue and self._audit_idle.is_set() and self.audit.pending_count == 0:
                return True
            time.sleep(0.01)
        return not self._audit_queue

    # -- decisions -----------------------------------------------------------

    def queue_decision(self, kind: str, thread_id: str, details: dict) -> PendingDecision:
        decision = PendingDecision(
            decision_id=uuid.uuid4().hex,
            kind=kind,
            thread_id=thread_id,
            details=details,
            created_at=int(time.time() * 1000),
        )
        with self._lock:
            self.decisions[decision.decision_id] = decision
        self.emit("decision", decision.to_dict())
        return decision

    def resolve_decision(self, decision_id: str, approve: bool, selection: dict | None = None) -> dict:
        with self._lock:
            decision = self.decisions.pop(decision_id, None)
        if decision is None:
            raise SoverClaimError(f"no pending decision {decision_id}")
        return self.on_decision(decision, approve, selection or {})

    def on_decision(self, decision: PendingDecision, approve: bool, selection: dict) -> dict:
        raise NotImplementedError

    # -- handlers & admin API ----------------------------------------------------

    def _register_handlers(self) -> None:
        """Subclasses attach their protocol message handlers."""

    def _admin_routes(self) -> None:
        router = self.messenger.router
        router.add("GET", "/health", self._rpc_health)
        router.add("POST", "/invitations", self._rpc_create_invitation)
        router.add("POST", "/connections/accept", self._rpc_accept_invitation)
        router.add("GET", "/connections", self._rpc_connections)
        router.add("GET", "/records/{thread_id}", self._rpc_record)
        router.add("GET", "/records", self._rpc_records)
        router.add("GET", "/audit", self._rpc_audit)
        router.add("GET", "/credentials", self._rpc_credentials)
        router.add("GET", "/decisions", self._rpc_decisions)
        router.add("POST", "/decisions/{decision_id}", self._rpc_resolve_decision)
        router.add("GET", "/events/poll", self._rpc_events_poll)

    def _rpc_health(self, request: Request) -> Response:
        return Response.json({"ok": True, "role": self.role, "name": self.name})

    def _rpc_create_invitation(self, request: Request) -> Response:
        invitation = self.messenger.create_invitation()
        return Response.json(
            {
                "invitation": invitation.to_dict(),
                "url": invitation.to_url(),
                "qr_png_b64": b64(invitation.qr_png()),
            },
            status=201,
        )

    def _rpc_accept_invitation(self, request: Request) -> Response:
        body = from_json(request.body)
        url = body.get("url", "")
        try:
            invitation = OobInvitation.from_url(url)
        except (ValueError, KeyError) as exc:
            return Response.error(400, "MalformedInvitation", str(exc))
        try:
            conn = self.messenger.accept_invitation(invitation, timeout=float(body.get("timeout", 10.0)))
        except SoverClaimError as exc:
            return Response.error(409, type(exc).__name__, str(exc))
        return Response.json(conn.to_public_dict(), status=201)

    def _rpc_connections(self, request: Request) -> Response:
        return Response.json(self.messenger.list_connections())

    def _rpc_record(self, request: Request, thread_id: str) -> Response:
        record = self.issue_records.get(thread_id) or self.present_records.get(thread_id)
        if record is None:
            return Response.error(404, "NoSuchThread", thread_id)
        return Response.json(record)

    def _rpc_records(self, request: Request) -> Response:
        return Response.json(
            {"issue": self.issue_records.all(), "present": self.present_records.all()}
        )

    def _rpc_audit(self, request: Request) -> Response:
        entries = [
            {"seq_no": seq, **entry.to_dict()} for seq, entry in self.audit.list_my_logs()
        ]
        return Response.json(entries)

    def _rpc_credentials(self, request: Request) -> Response:
        return Response.json([c.to_dict() for c in self.wallet.list_credentials()])

    def _rpc_decisions(self, request: Request) -> Response:
        with self._lock:
            return Response.json([d.to_dict() for d in self.decisions.values()])

    def _rpc_resolve_decision(self, request: Request, decision_id: str) -> Response:
        body = from_json(request.body)
        try:
            outcome = self.resolve_decision(
                decision_id, bool(body.get("approve")), body.get("selection")
            )
        except SoverClaimError as exc:
            return Response.error(404, type(exc).__name__, str(exc))
        return Response.json(outcome)

    def _rpc_events_poll(self, request: Request) -> Response:
        after = int(request.query.get("after", "0"))
        timeout = float(request.query.get("timeout", "0"))
        events = (
            self.wait_events(after, timeout) if timeout else [e for e in self.events if e["id"] > after]
        )
        return Response.json(events)
