"""Satellite: bucket registry, segment pointers, node registry, delete
orchestration with signed receipts, and bloom-filter garbage collection.

The satellite holds metadata only. It never sees plaintext or content
keys; read access is granted either by an owner signature or by a
capability token the owner signed.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

from .. import crypto
from ..encoding import b64, b64_decode, canonical_json, from_json
from ..errors import SoverClaimError
from ..transport import Request, Response, Router, SimNetwork
from .bloom import BloomFilter
from .node import DeletionReceipt
from .urls import BUCKET_RE

AUTH_WINDOW_MS = 5 * 60 * 1000


def request_auth_portion(op: str, bucket: str, key: str, ts: int, nonce: str) -> bytes:
    return canonical_json({"op": op, "bucket": bucket, "key": key, "ts": ts, "nonce": nonce})


def token_body(token: dict) -> bytes:
    return canonical_json({k: v for k, v in token.items() if k != "sig"})


@dataclass
class SegmentPointer:
    segment_id: str
    k: int
    n: int
    segment_size: int       # ciphertext bytes
    plain_size: int
    locations: list[tuple[str, str]]  # (node_id, shard_id), n distinct nodes
    shard_hashes: list[str]

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "k": self.k,
            "n": self.n,
            "segment_size": self.segment_size,
            "plain_size": self.plain_size,
            "locations": [[n, s] for n, s in self.locations],
            "shard_hashes": self.shard_hashes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentPointer":
        return cls(
            segment_id=data["segment_id"],
            k=int(data["k"]),
            n=int(data["n"]),
            segment_size=int(data["segment_size"]),
            plain_size=int(data["plain_size"]),
            locations=[(n, s) for n, s in data["locations"]],
            shard_hashes=list(data["shard_hashes"]),
        )


@dataclass
class GcConfig:
    fp_target: float = 0.01
    grace_period: float = 24 * 3600.0  # seconds; tests shrink this


@dataclass
class _NodeInfo:
    verkey: bytes
    address: str
    region: str


@dataclass
class _ObjectMeta:
    size: int
    created_at: int
    segments: list[SegmentPointer] = field(default_factory=list)


class Satellite:
    def __init__(
        self,
        net: SimNetwork,
        address: str = "net://satellite",
        region: str = "local",
        gc_config: GcConfig | None = None,
    ) -> None:
        self.net = net
        self.address = address
        self.region = region
        self.gc_config = gc_config or GcConfig()
        self.keypair = crypto.generate_keypair(crypto.Alg.SIGN)
        self.lock = threading.RLock()

        self.nodes: dict[str, _NodeInfo] = {}
        self.buckets: dict[str, dict] = {}  # name -> {owner_verkey b64, created_at}
        self.objects: dict[tuple[str, str], _ObjectMeta] = {}
        self._pick_counter = 0

        self.router = Router()
        self.router.add("POST", "/nodes/register", self._rpc_register_node)
        self.router.add("GET", "/nodes/pick", self._rpc_pick_nodes)
        self.router.add("POST", "/buckets", self._rpc_make_bucket)
        self.router.add("POST", "/objects/commit", self._rpc_commit_object)
        self.router.add("POST", "/objects/list", self._rpc_list_objects)
        self.router.add("POST", "/objects/pointers", self._rpc_pointers)
        self.router.add("POST", "/objects/delete", self._rpc_delete_object)
        self.router.add("POST", "/gc/run", self._rpc_run_gc)
        self.router.add("GET", "/metering", self._rpc_metering)
        self.router.add("GET", "/health", self._rpc_health)

    def start(self) -> None:
        self.net.register(self.address, self.router, self.region)

    def stop(self) -> None:
        self.net.deregister(self.address)

    # -- auth helpers ------------------------------------------------------

    def _check_owner_sig(self, op: str, body: dict) -> Response | None:
        bucket = self.buckets.get(body.get("bucket", ""))
        if bucket is None:
            return Response.error(404, "NoSuchBucket", body.get("bucket", ""))
        ts = int(body.get("ts", 0))
        if abs(ts - int(time.time() * 1000)) > AUTH_WINDOW_MS:
            return Response.error(403, "BadSignature", "request timestamp out of window")
        portion = request_auth_portion(op, body["bucket"], body.get("key", ""), ts, body.get("nonce", ""))
        if not crypto.verify(b64_decode(bucket["owner_verkey"]), portion, b64_decode(body.get("sig", ""))):
            return Response.error(403, "BadSignature", f"owner signature invalid for {op}")
        return None

    def _check_token(self, body: dict) -> Response | None:
        token = body.get("token")
        if not isinstance(token, dict):
            return Response.error(403, "BadSignature", "no token and no owner signature")
        bucket = self.buckets.get(token.get("bucket", ""))
        if bucket is None:
            return Response.error(404, "NoSuchBucket", token.get("bucket", ""))
        if token.get("owner") != bucket["owner_verkey"]:
            return Response.error(403, "BadSignature", "token owner is not the bucket owner")
        if not crypto.verify(
            b64_decode(bucket["owner_verkey"]), token_body(token), b64_decode(token.get("sig", ""))
        ):
            return Response.error(403, "BadSignature", "token signature invalid")
        if "read" not in token.get("perms", []):
            return Response.error(403, "BadSignature", "token grants no read permission")
        not_after = token.get("not_after")
        if not_after is not None and int(not_after) < int(time.time() * 1000):
            return Response.error(403, "ExpiredCapability", "token expired")
        prefix = token.get("key_prefix")
        if (
            token.get("bucket") != body.get("bucket")
            or not isinstance(prefix, str)
            or not body.get("key", "").startswith(prefix)
        ):
            return Response.error(403, "BadSignature", "token scope does not cover this object")
        return None

    def _authorize_read(self, op: str, body: dict) -> Response | None:
        if "token" in body:
            return self._check_token(body)
        return self._check_owner_sig(op, body)

    # -- RPC ---------------------------------------------------------------

    def _rpc_register_node(self, request: Request) -> Response:
        body = from_json(request.body)
        with self.lock:
            self.nodes[body["node_id"]] = _NodeInfo(
                verkey=b64_decode(body["verkey"]),
                address=body["address"],
                region=body.get("region", "local"),
            )
        return Response.json({"satellite_verkey": b64(self.keypair.public_key)})

    def _rpc_pick_nodes(self, request: Request) -> Response:
        wanted = int(request.query.get("n", "4"))
        with self.lock:
            live = [
                {"node_id": nid, "address": info.address}
                for nid, info in self.nodes.items()
                if self.net.is_registered(info.address)
            ]
            if len(live) < wanted:
                return Response.error(
                    409, "InsufficientNodes", f"need {wanted} distinct nodes, have {len(live)}"
                )
            # Rotate placement so load spreads across the pool.
            start = self._pick_counter % len(live)
            self._pick_counter += 1
            chosen = (live + live)[start : start + wanted]
        return Response.json({"nodes": chosen})

    def _rpc_make_bucket(self, request: Request) -> Response:
        body = from_json(request.body)
        name = body.get("name", "")
        if not BUCKET_RE.match(name):
            return Response.error(400, "BadName", name)
        with self.lock:
            if name in self.buckets:
                return Response.error(409, "BucketExists", name)
            self.buckets[name] = {
                "owner_verkey": body["owner_verkey"],
                "created_at": int(time.time() * 1000),
            }
        return Response.json({"bucket": name}, status=201)

    def _rpc_commit_object(self, request: Request) -> Response:
        body = from_json(request.body)
        denied = self._check_owner_sig("commit", body)
        if denied:
            return denied
        segments = [SegmentPointer.from_dict(s) for s in body["segments"]]
        for pointer in segments:
            node_ids = [n for n, _ in pointer.locations]
            if len(set(node_ids)) != pointer.n:
                return Response.error(400, "SchemaViolation", "segment must span n distinct nodes")
        with self.lock:
            self.objects[(body["bucket"], body["key"])] = _ObjectMeta(
                size=int(body["size"]),
                created_at=int(time.time() * 1000),
                segments=segments,
            )
        return Response.json({"committed": True}, status=201)

    def _rpc_list_objects(self, request: Request) -> Response:
        body = from_json(request.body)
        denied = self._check_owner_sig("list", body)
        if denied:
            return denied
        with self.lock:
            keys = sorted(k for (b, k) in self.objects if b == body["bucket"])
            sizes = {k: self.objects[(body["bucket"], k)].size for k in keys}
        return Response.json({"keys": keys, "sizes": sizes})

    def _rpc_pointers(self, request: Request) -> Response:
        body = from_json(request.body)
        denied = self._authorize_read("pointers", body)
        if denied:
            return denied
        with self.lock:
            meta = self.objects.get((body["bucket"], body["key"]))
            if meta is None:
                return Response.error(404, "NoSuchObject", f"{body['bucket']}/{body['key']}")
            node_addresses = {
                nid: info.address
                for nid, info in self.nodes.items()
            }
            return Response.json(
                {
                    "size": meta.size,
                    "segments": [s.to_dict() for s in meta.segments],
                    "node_addresses": node_addresses,
                }
            )

    def _rpc_delete_object(self, request: Request) -> Response:
        body = from_json(request.body)
        denied = self._check_owner_sig("delete", body)
        if denied:
            return denied
        with self.lock:
            meta = self.objects.get((body["bucket"], body["key"]))
            if meta is None:
                return Response.error(404, "NoSuchObject", f"{body['bucket']}/{body['key']}")
            by_node: dict[str, list[str]] = {}
            for pointer in meta.segments:
                for node_id, shard_id in pointer.locations:
                    by_node.setdefault(node_id, []).append(shard_id)
            node_addresses = {nid: self.nodes[nid].address for nid in by_node if nid in self.nodes}
            pointers_removed = len(meta.segments)
            # Pointers go first: once they are gone the object is dead and
            # billing stops, even if some nodes cannot be reached right now.
            del self.objects[(body["bucket"], body["key"])]

        receipts: list[dict] = []
        unreachable: list[str] = []
        for node_id, shard_ids in by_node.items():
            address = node_addresses.get(node_id)
            info = self.nodes.get(node_id)
            if address is None or info is None:
                unreachable.append(node_id)
                continue
            order = {"shard_ids": sorted(shard_ids), "ts": int(time.time() * 1000), "nonce": os.urandom(8).hex()}
            signed = {"order": order, "sig": b64(crypto.sign(self.keypair.secret_key, canonical_json(order)))}
            try:
                response = self.net.post(address, "/delete", signed, src_region=self.region, faults=False)
            except SoverClaimError:
                unreachable.append(node_id)
                continue
            if response.status != 200:
                unreachable.append(node_id)
                continue
            verified = []
            for raw in from_json(response.body)["receipts"]:
                receipt = DeletionReceipt.from_dict(raw)
                if receipt.node_id == node_id and receipt.verify(info.verkey):
                    verified.append(raw)
            if len(verified) < len(shard_ids):
                # Forged or missing receipts: deletion on that node is
                # unconfirmed, so GC must finish the job.
                unreachable.append(node_id)
            receipts.extend(verified)

        return Response.json(
            {
                "receipts": receipts,
                "pointers_removed": pointers_removed,
                "partial": bool(unreachable),
                "unreachable": sorted(unreachable),
            }
        )

    def _live_shards_by_node(self) -> dict[str, list[str]]:
        live: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for meta in self.objects.values():
            for pointer in meta.segments:
                for node_id, shard_id in pointer.locations:
                    live.setdefault(node_id, []).append(shard_id)
        return live

    def run_gc(self, grace_period: float | None = None) -> dict[str, int]:
        """One garbage-collection round: hand every node a bloom filter of
        its live shards; nodes drop anything absent and out of grace."""
        grace = self.gc_config.grace_period if grace_period is None else grace_period
        with self.lock:
            live = self._live_shards_by_node()
            node_addresses = {nid: info.address for nid, info in self.nodes.items()}
        results: dict[str, int] = {}
        for node_id, shard_ids in live.items():
            address = node_addresses.get(node_id)
            if address is None:
                continue
            bloom = BloomFilter.for_items(shard_ids, self.gc_config.fp_target)
            order = {
                "filter": bloom.to_dict(),
                "issued_at": int(time.time() * 1000),
                "grace_period": grace,
                "node_id": node_id,
            }
            signed = {"order": order, "sig": b64(crypto.sign(self.keypair.secret_key, canonical_json(order)))}
            try:
                response = self.net.post(address, "/gc", signed, src_region=self.region, faults=False)
            except SoverClaimError:
                continue
            if response.status == 200:
                results[node_id] = from_json(response.body)["deleted"]
        return results

    def _rpc_run_gc(self, request: Request) -> Response:
        grace_override = None
        if request.body:
            grace_override = from_json(request.body).get("grace_period")
        return Response.json({"deleted": self.run_gc(grace_override)})

    def _rpc_metering(self, request: Request) -> Response:
        """Billing view: bytes this satellite is charging for, per node."""
        with self.lock:
            per_node: dict[str, int] = {nid: 0 for nid in self.nodes}
            for meta in self.objects.values():
                for pointer in meta.segments:
                    shard = (pointer.segment_size + pointer.k - 1) // pointer.k
                    for node_id, _ in pointer.locations:
                        per_node[node_id] = per_node.get(node_id, 0) + shard
        return Response.json({"billed_bytes": per_node})

    def _rpc_health(self, request: Request) -> Response:
        with self.lock:
            return Response.json(
                {
                    "ok": True,
                    "buckets": len(self.buckets),
                    "objects": len(self.objects),
                    "nodes": len(self.nodes),
                }
            )
