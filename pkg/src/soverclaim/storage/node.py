"""Storage node: holds shards on disk, honors satellite-signed delete
orders with signed receipts, and sweeps itself against GC live-filters."""

from __future__ import annotations

import os
import struct
import threading
import time
from dataclasses import dataclass

from .. import crypto
from ..encoding import b64, b64_decode, canonical_json, from_json, sign_input
from ..transport import Request, Response, Router, SimNetwork
from .bloom import BloomFilter


def receipt_portion(shard_id: str, status: str, timestamp: int) -> bytes:
    """The bytes a node signs to acknowledge a shard deletion."""
    return sign_input(shard_id.encode(), status.encode(), struct.pack("<Q", timestamp))


@dataclass
class DeletionReceipt:
    node_id: str
    shard_id: str
    status: str  # DELETED | ALREADY_ABSENT
    timestamp: int
    signature: bytes

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "shard_id": self.shard_id,
            "status": self.status,
            "timestamp": self.timestamp,
            "sig": b64(self.signature),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeletionReceipt":
        return cls(
            node_id=data["node_id"],
            shard_id=data["shard_id"],
            status=data["status"],
            timestamp=int(data["timestamp"]),
            signature=b64_decode(data["sig"]),
        )

    def verify(self, node_verkey: bytes) -> bool:
        portion = receipt_portion(self.shard_id, self.status, self.timestamp)
        return crypto.verify(node_verkey, portion, self.signature)


class StorageNode:
    def __init__(
        self,
        node_id: str,
        store_dir: str,
        net: SimNetwork,
        address: str,
        satellite_address: str,
        region: str = "local",
        keypair: crypto.KeyPair | None = None,
    ) -> None:
        self.node_id = node_id
        self.store_dir = store_dir
        self.net = net
        self.address = address
        self.satellite_address = satellite_address
        self.region = region
        self.keypair = keypair or crypto.generate_keypair(crypto.Alg.SIGN)
        self.satellite_verkey: bytes | None = None
        self.lock = threading.Lock()
        os.makedirs(store_dir, exist_ok=True)

        self.router = Router()
        self.router.add("POST", "/shards", self._rpc_store)
        self.router.add("GET", "/shards/{shard_id}", self._rpc_fetch)
        self.router.add("POST", "/delete", self._rpc_delete)
        self.router.add("POST", "/gc", self._rpc_gc)
        self.router.add("GET", "/health", self._rpc_health)

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        self.net.register(self.address, self.router, self.region)
        response = self.net.post(
            self.satellite_address,
            "/nodes/register",
            {
                "node_id": self.node_id,
                "verkey": b64(self.keypair.public_key),
                "address": self.address,
                "region": self.region,
            },
            src_region=self.region,
        )
        self.satellite_verkey = b64_decode(from_json(response.body)["satellite_verkey"])

    def stop(self) -> None:
        self.net.deregister(self.address)

    # -- store helpers ----------------------------------------------------

    def _path(self, shard_id: str) -> str:
        if not shard_id.replace("-", "").isalnum():
            raise ValueError(f"suspicious shard id {shard_id!r}")
        return os.path.join(self.store_dir, f"{shard_id}.shard")

    def shard_ids(self) -> list[str]:
        return [f[:-6] for f in os.listdir(self.store_dir) if f.endswith(".shard")]

    def stored_bytes(self) -> int:
        total = 0
        for name in os.listdir(self.store_dir):
            if name.endswith(".shard"):
                total += os.path.getsize(os.path.join(self.store_dir, name))
        return total

    def _check_satellite_sig(self, body: dict) -> bool:
        if self.satellite_verkey is None:
            return False
        sig = b64_decode(body["sig"])
        return crypto.verify(self.satellite_verkey, canonical_json(body["order"]), sig)

    # -- RPC ---------------------------------------------------------------

    def _rpc_store(self, request: Request) -> Response:
        (header_len,) = struct.unpack_from("<I", request.body, 0)
        header = from_json(request.body[4 : 4 + header_len])
        payload = request.body[4 + header_len :]
        shard_id = header["shard_id"]
        with self.lock:
            with open(self._path(shard_id), "wb") as fh:
                fh.write(payload)
        return Response.json({"stored": len(payload)}, status=201)

    def _rpc_fetch(self, request: Request, shard_id: str) -> Response:
        try:
            with open(self._path(shard_id), "rb") as fh:
                return Response(status=200, body=fh.read(), content_type="application/octet-stream")
        except (OSError, ValueError):
            return Response.error(404, "NoSuchShard", shard_id)

    def _rpc_delete(self, request: Request) -> Response:
        body = from_json(request.body)
        if not self._check_satellite_sig(body):
            return Response.error(403, "BadSignature", "delete order not signed by satellite")
        receipts = []
        now = int(time.time() * 1000)
        with self.lock:
            for shard_id in body["order"]["shard_ids"]:
                path = self._path(shard_id)
                if os.path.exists(path):
                    os.remove(path)
                    status = "DELETED"
                else:
                    status = "ALREADY_ABSENT"
                sig = crypto.sign(self.keypair.secret_key, receipt_portion(shard_id, status, now))
                receipts.append(
                    DeletionReceipt(self.node_id, shard_id, status, now, sig).to_dict()
                )
        return Response.json({"receipts": receipts})

    def _rpc_gc(self, request: Request) -> Response:
        body = from_json(request.body)
        if not self._check_satellite_sig(body):
            return Response.error(403, "BadSignature", "GC filter not signed by satellite")
        order = body["order"]
        live = BloomFilter.from_dict(order["filter"])
        grace = float(order["grace_period"])
        deleted = []
        now = time.time()
        with self.lock:
            for shard_id in self.shard_ids():
                if shard_id in live:
                    continue
                path = self._path(shard_id)
                try:
                    age = now - os.path.getmtime(path)
                except OSError:
                    continue
                if age >= grace:
                    os.remove(path)
                    deleted.append(shard_id)
        return Response.json({"deleted": len(deleted), "shard_ids": deleted})

    def _rpc_health(self, request: Request) -> Response:
        with self.lock:
            ids = self.shard_ids()
            return Response.json(
                {
                    "ok": True,
                    "node_id": self.node_id,
                    "shards": len(ids),
                    "stored_bytes": self.stored_bytes(),
                }
            )
