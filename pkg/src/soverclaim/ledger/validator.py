"""A single validator: event loop, round-robin proposer, 2f+1 vote
collection, crash-restart catch-up by chain transfer, and the browse API
("Ledger Browser") every node serves."""

from __future__ import annotations

import logging
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .. import crypto
from ..encoding import b64, b64_decode, from_json
from ..errors import (
    BadSignature,
    DuplicateSchemaId,
    SchemaViolation,
    SoverClaimError,
)
from ..transport import Request, Response, Router, SimNetwork
from .state import LedgerState
from .types import Block, LedgerTransaction, check_quorum_sigs, merkle_root

log = logging.getLogger(__name__)


@dataclass
class LedgerConfig:
    batch_interval: float = 0.05   # seconds; or max_batch txns, whichever first
    max_batch: int = 100
    proposal_timeout: float = 1.0  # attempt rotation when a proposer stalls
    tick: float = 0.02


@dataclass
class _TxnTracking:
    status: str = "pending"  # pending | committed | rejected
    seq_no: int = 0
    error: str = ""
    detail: str = ""
    event: threading.Event = field(default_factory=threading.Event)


class ValidatorNode:
    def __init__(
        self,
        vid: int,
        keypair: crypto.KeyPair,
        genesis_block: Block,
        net: SimNetwork,
        address: str,
        region: str,
        quorum: int,
        peers: dict[int, str],
        config: LedgerConfig | None = None,
    ) -> None:
        self.vid = vid
        self.keypair = keypair
        self.net = net
        self.address = address
        self.region = region
        self.quorum = quorum
        self.peers = peers  # vid -> address, self included
        self.config = config or LedgerConfig()

        self.lock = threading.RLock()
        self.state = LedgerState(genesis=genesis_block.genesis)
        self.state.apply_block(genesis_block)
        self.validator_keys = {
            int(v["id"]): b64_decode(v["verkey"]) for v in genesis_block.genesis["validators"]
        }

        self.mempool: dict[str, LedgerTransaction] = {}
        self.arrival: dict[str, float] = {}
        self.tracking: dict[str, _TxnTracking] = {}
        self.attempt = 0
        self.signed_attempts: set[tuple[int, int]] = set()
        self.pending_block: Block | None = None
        self.pending_votes: dict[int, bytes] = {}
        self.last_progress = time.monotonic()

        self.inbox: queue.Queue = queue.Queue()
        self.running = False
        self._thread: threading.Thread | None = None
        self._sender: ThreadPoolExecutor | None = None

        self.router = Router()
        self.router.add("POST", "/submit", self._rpc_submit)
        self.router.add("POST", "/wait", self._rpc_wait)
        self.router.add("POST", "/consensus", self._rpc_consensus)
        self.router.add("GET", "/txns", self._rpc_txns)
        self.router.add("GET", "/blocks", self._rpc_blocks)
        self.router.add("GET", "/blocks/{height}", self._rpc_block)
        self.router.add("GET", "/did/{did}", self._rpc_did)
        self.router.add("GET", "/revoked/{cred_id}", self._rpc_revoked)
        self.router.add("GET", "/health", self._rpc_health)

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        self.running = True
        self._sender = ThreadPoolExecutor(max_workers=8, thread_name_prefix=f"val{self.vid}-out")
        self.net.register(self.address, self.router, self.region)
        self._thread = threading.Thread(target=self._loop, name=f"validator-{self.vid}", daemon=True)
        self._thread.start()
        self._catch_up()

    def stop(self) -> None:
        """Crash-stop: drop off the network and halt the loop. Committed
        chain survives (it would be on disk); mempool and votes do not."""
        self.running = False
        self.net.deregister(self.address)
        if self._thread:
            self._thread.join(timeout=2.0)
            self._thread = None
        if self._sender:
            self._sender.shutdown(wait=False, cancel_futures=True)
            self._sender = None
        with self.lock:
            self.mempool.clear()
            self.arrival.clear()
            self.pending_block = None
            self.pending_votes.clear()
            self.signed_attempts.clear()

    # -- event loop ------------------------------------------------------

    def _loop(self) -> None:
        while self.running:
            try:
                kind, msg = self.inbox.get(timeout=self.config.tick)
            except queue.Empty:
                kind, msg = None, None
            try:
                if kind == "txn":
                    self._on_txn(msg)
                elif kind == "propose":
                    self._on_propose(msg)
                elif kind == "vote":
                    self._on_vote(msg)
                elif kind == "commit":
                    self._on_commit(msg)
                self._maybe_rotate()
                self._maybe_propose()
            except Exception:
                log.exception("validator %d: error handling %s", self.vid, kind)

    def _send(self, vid: int, kind: str, msg: dict) -> None:
        if vid == self.vid:
            self.inbox.put((kind, msg))
            return
        address = self.peers[vid]

        def deliver() -> None:
            try:
                self.net.post(address, "/consensus", {"kind": kind, **msg}, src_region=self.region)
            except SoverClaimError:
                pass  # peer down; consensus tolerates f crash faults

        sender = self._sender
        if sender is not None:
            try:
                sender.submit(deliver)
            except RuntimeError:
                pass  # shutting down

    def _broadcast(self, kind: str, msg: dict) -> None:
        for vid in self.peers:
            if vid != self.vid:
                self._send(vid, kind, msg)

    # -- consensus -------------------------------------------------------

    def _maybe_rotate(self) -> None:
        with self.lock:
            if not self.mempool:
                return
            if time.monotonic() - self.last_progress > self.config.proposal_timeout:
                self.attempt += 1
                self.pending_block = None
                self.pending_votes.clear()
                self.last_progress = time.monotonic()

    def _leader(self, height: int, attempt: int) -> int:
        return (height + attempt) % len(self.peers)

    def _maybe_propose(self) -> None:
        with self.lock:
            height = self.state.height + 1
            if self._leader(height, self.attempt) != self.vid:
                return
            if self.pending_block is not None or not self.mempool:
                return
            oldest = min(self.arrival.values())
            if (
                len(self.mempool) < self.config.max_batch
                and time.monotonic() - oldest < self.config.batch_interval
            ):
                return
            block = self._build_block(height)
            if block is None:
                return
            self.pending_block = block
            sig = crypto.sign(self.keypair.secret_key, block.block_hash())
            self.pending_votes = {self.vid: sig}
            self.signed_attempts.add((height, self.attempt))
            payload = {"block": block.to_dict()}
        self._broadcast("propose", payload)
        self._try_commit()

    def _build_block(self, height: int) -> Block | None:
        """Assemble up to max_batch valid txns; invalid ones are rejected
        and reported back to their waiters."""
        scratch = self.state.scratch_copy()
        chosen: list[LedgerTransaction] = []
        seq = scratch.next_seq
        for txn_id in sorted(self.mempool, key=lambda t: self.arrival[t]):
            if len(chosen) >= self.config.max_batch:
                break
            txn = self.mempool[txn_id]
            try:
                scratch.validate_txn(txn)
            except SoverClaimError as exc:
                self._reject(txn_id, exc)
                continue
            txn.seq_no = seq
            seq += 1
            scratch.apply_txn(txn)
            chosen.append(txn)
        if not chosen:
            return None
        return Block(
            height=height,
            prev_hash=self.state.head_hash,
            txn_root=merkle_root(chosen),
            txns=chosen,
            proposer=self.vid,
            attempt=self.attempt,
            timestamp=int(time.time() * 1000),
        )

    def _reject(self, txn_id: str, exc: Exception) -> None:
        self.mempool.pop(txn_id, None)
        self.arrival.pop(txn_id, None)
        track = self.tracking.get(txn_id)
        if track:
            track.status = "rejected"
            track.error = type(exc).__name__
            track.detail = str(exc)
            track.event.set()

    def _on_txn(self, msg: dict) -> None:
        txn = LedgerTransaction.from_dict(msg["txn"])
        txn.seq_no = 0
        with self.lock:
            txn_id = txn.txn_id
            if txn_id in self.state.committed_ids or txn_id in self.mempool:
                return
            try:
                self.state.validate_txn(txn)
            except SoverClaimError:
                return  # stale gossip; the entry node reports errors
            self.mempool[txn_id] = txn
            self.arrival[txn_id] = time.monotonic()

    def _on_propose(self, msg: dict) -> None:
        block = Block.from_dict(msg["block"])
        behind = False
        with self.lock:
            expected = self.state.height + 1
            if block.height != expected or block.prev_hash != self.state.head_hash:
                behind = block.height > expected
        if behind:
            self._catch_up()
            return
        with self.lock:
            expected = self.state.height + 1
            if block.height != expected or block.prev_hash != self.state.head_hash:
                return
            if block.proposer != self._leader(block.height, block.attempt):
                return
            if block.attempt < self.attempt:
                return
            if (block.height, block.attempt) in self.signed_attempts:
                return
            if block.txn_root != merkle_root(block.txns):
                return
            scratch = self.state.scratch_copy()
            seq = scratch.next_seq
            for txn in block.txns:
                if txn.seq_no != seq:
                    return
                try:
                    scratch.validate_txn(txn)
                except SoverClaimError:
                    return
                scratch.apply_txn(txn)
                seq += 1
            self.attempt = block.attempt
            self.signed_attempts.add((block.height, block.attempt))
            sig = crypto.sign(self.keypair.secret_key, block.block_hash())
            proposer = block.proposer
        self._send(proposer, "vote", {
            "height": block.height,
            "hash": block.block_hash().hex(),
            "validator": self.vid,
            "sig": b64(sig),
        })

    def _on_vote(self, msg: dict) -> None:
        with self.lock:
            block = self.pending_block
            if block is None or block.block_hash().hex() != msg["hash"]:
                return
            vid = int(msg["validator"])
            sig = b64_decode(msg["sig"])
            if not crypto.verify(self.validator_keys[vid], block.block_hash(), sig):
                return
            self.pending_votes[vid] = sig
        self._try_commit()

    def _try_commit(self) -> None:
        with self.lock:
            block = self.pending_block
            if block is None or len(self.pending_votes) < self.quorum:
                return
            block.quorum_sigs = sorted(self.pending_votes.items())
            self.pending_block = None
            self.pending_votes = {}
            payload = {"block": block.to_dict()}
            self._apply_committed(block)
        self._broadcast("commit", payload)

    def _on_commit(self, msg: dict) -> None:
        block = Block.from_dict(msg["block"])
        with self.lock:
            expected = self.state.height + 1
            ahead = block.height > expected
        if ahead:
            self._catch_up()
            return
        with self.lock:
            expected = self.state.height + 1
            if block.height != expected:
                return
            if block.prev_hash != self.state.head_hash:
                return
            if block.txn_root != merkle_root(block.txns):
                return
            if not check_quorum_sigs(block, self.validator_keys, self.quorum):
                return
            self._apply_committed(block)

    def _apply_committed(self, block: Block) -> None:
        self.state.apply_block(block)
        self.attempt = 0
        self.pending_block = None
        self.pending_votes = {}
        self.last_progress = time.monotonic()
        for txn in block.txns:
            txn_id = txn.txn_id
            self.mempool.pop(txn_id, None)
            self.arrival.pop(txn_id, None)
            track = self.tracking.setdefault(txn_id, _TxnTracking())
            track.status = "committed"
            track.seq_no = txn.seq_no
            track.event.set()
        # Sweep mempool entries the new block made invalid (duplicates etc.).
        scratch = self.state.scratch_copy()
        for txn_id in list(self.mempool):
            try:
                scratch.validate_txn(self.mempool[txn_id])
            except SoverClaimError as exc:
                self._reject(txn_id, exc)

    def _catch_up(self) -> None:
        """Chain transfer: pull missing blocks from any live peer."""
        for vid, address in self.peers.items():
            if vid == self.vid:
                continue
            try:
                with self.lock:
                    from_height = self.state.height + 1
                response = self.net.get(
                    address, "/blocks", {"from": str(from_height)}, src_region=self.region
                )
            except SoverClaimError:
                continue
            if response.status != 200:
                continue
            blocks = [Block.from_dict(b) for b in from_json(response.body)]
            applied = False
            with self.lock:
                for block in blocks:
                    if block.height != self.state.height + 1:
                        continue
                    if block.prev_hash != self.state.head_hash:
                        break
                    if block.txn_root != merkle_root(block.txns):
                        break
                    if not check_quorum_sigs(block, self.validator_keys, self.quorum):
                        break
                    self._apply_committed(block)
                    applied = True
            if applied:
                return

    # -- RPC handlers (run on caller threads) ------------------------------

    def _rpc_submit(self, request: Request) -> Response:
        txn = LedgerTransaction.from_dict(from_json(request.body)["txn"])
        txn.seq_no = 0
        txn_id = txn.txn_id
        with self.lock:
            if txn_id in self.state.committed_ids:
                track = self.tracking.setdefault(txn_id, _TxnTracking())
                if track.status != "committed":
                    track.status = "committed"
                    track.seq_no = next(
                        t.seq_no for t in self.state.txns if t.txn_id == txn_id
                    )
                    track.event.set()
                return Response.json({"txn_id": txn_id})
            if txn_id not in self.mempool:
                try:
                    self.state.validate_txn(txn)
                except SoverClaimError as exc:
                    return Response.error(400, type(exc).__name__, str(exc))
                self.mempool[txn_id] = txn
                self.arrival[txn_id] = time.monotonic()
            self.tracking.setdefault(txn_id, _TxnTracking())
        self._broadcast("txn", {"txn": txn.to_dict()})
        return Response.json({"txn_id": txn_id})

    def _rpc_wait(self, request: Request) -> Response:
        body = from_json(request.body)
        txn_id = body["txn_id"]
        timeout = float(body.get("timeout", 5.0))
        with self.lock:
            track = self.tracking.setdefault(txn_id, _TxnTracking())
        track.event.wait(timeout)
        with self.lock:
            if track.status == "committed":
                return Response.json({"status": "committed", "seq_no": track.seq_no})
            if track.status == "rejected":
                return Response.json({"status": "rejected", "error": track.error, "detail": track.detail})
        return Response.json({"status": "pending"})

    def _rpc_consensus(self, request: Request) -> Response:
        msg = from_json(request.body)
        self.inbox.put((msg.pop("kind"), msg))
        return Response.json({"ok": True})

    def _rpc_txns(self, request: Request) -> Response:
        q = request.query
        with self.lock:
            txns = self.state.query(
                txn_type=q.get("type") or None,
                submitter=q.get("submitter") or None,
                seq_from=int(q["from"]) if q.get("from") else None,
                seq_to=int(q["to"]) if q.get("to") else None,
            )
            return Response.json([t.to_dict() for t in txns])

    def _rpc_blocks(self, request: Request) -> Response:
        from_height = int(request.query.get("from", "0"))
        with self.lock:
            blocks = [b.to_dict() for b in self.state.blocks if b.height >= from_height]
        return Response.json(blocks)

    def _rpc_block(self, request: Request, height: str) -> Response:
        with self.lock:
            for block in self.state.blocks:
                if block.height == int(height):
                    return Response.json(block.to_dict())
        return Response.error(404, "NoSuchBlock", height)

    def _rpc_did(self, request: Request, did: str) -> Response:
        with self.lock:
            entry = self.state.nym_docs.get(did)
        if entry is None:
            return Response.error(404, "UnknownDid", did)
        return Response.json({"seq_no": entry[0], "document": entry[1]})

    def _rpc_revoked(self, request: Request, cred_id: str) -> Response:
        at = request.query.get("at")
        with self.lock:
            revoked = self.state.is_revoked(cred_id, int(at) if at else None)
        return Response.json({"revoked": revoked})

    def _rpc_health(self, request: Request) -> Response:
        with self.lock:
            return Response.json(
                {
                    "ok": True,
                    "validator": self.vid,
                    "height": self.state.height,
                    "txn_count": len(self.state.txns),
                    "mempool": len(self.mempool),
                }
            )
