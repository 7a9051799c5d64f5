"""Uplink: the client side of the document store.

All encryption happens here. Objects get a client-held 32-byte content
key; each segment is sealed with a subkey derived from it before being
erasure-coded across n distinct nodes, so neither the satellite nor any
single node can reconstruct anything.
"""

from __future__ import annotations

import json
import os
import struct
import time
from dataclasses import dataclass, field

from .. import crypto
from ..encoding import b64, b64_decode, canonical_json, from_json
from ..errors import (
    AuthFailure,
    ExpiredCapability,
    NoSuchObject,
    NotEnoughShards,
    PartialDeletion,
    SoverClaimError,
)
from ..transport import Request, Response, SimNetwork
from . import erasure
from .erasure import ErasureParams
from .node import DeletionReceipt
from .satellite import SegmentPointer, request_auth_portion, token_body
from .urls import check_bucket_name, parse_share_url, share_url

DEFAULT_SEGMENT_SIZE = 4 * 1024 * 1024

_ERRORS = {
    "BadName": "BadName",
    "BucketExists": "BucketExists",
    "NoSuchBucket": "NoSuchBucket",
    "NoSuchObject": "NoSuchObject",
    "InsufficientNodes": "InsufficientNodes",
    "ExpiredCapability": "ExpiredCapability",
    "BadSignature": "BadSignature",
    "SchemaViolation": "SchemaViolation",
}


def _raise_storage_error(response: Response) -> None:
    from .. import errors

    body = from_json(response.body)
    kind = body.get("error", "")
    detail = body.get("detail", "")
    cls = getattr(errors, _ERRORS.get(kind, ""), SoverClaimError)
    raise cls(detail or kind)


@dataclass
class StoredObject:
    bucket: str
    key: str
    object_key: bytes = field(repr=False)  # client-held; never leaves the uplink
    segment_pointers: list[SegmentPointer]
    size: int
    created_at: int


@dataclass
class ShareCapability:
    token: dict  # satellite-facing signed grant
    object_key: bytes = field(repr=False)
    url: str


@dataclass
class DeletionReport:
    receipts: list[DeletionReceipt]
    pointers_removed: int
    partial: bool
    unreachable: list[str]


class Uplink:
    def __init__(
        self,
        net: SimNetwork,
        satellite_address: str,
        state_dir: str,
        owner: crypto.KeyPair | None = None,
        region: str = "local",
        segment_size: int = DEFAULT_SEGMENT_SIZE,
        erasure_params: ErasureParams | None = None,
    ) -> None:
        self.net = net
        self.satellite = satellite_address
        self.state_dir = state_dir
        self.region = region
        self.segment_size = segment_size
        self.erasure_params = erasure_params or ErasureParams(k=2, n=4)
        os.makedirs(state_dir, exist_ok=True)
        self.owner = owner or crypto.generate_keypair(crypto.Alg.SIGN)
        self._access_path = os.path.join(state_dir, "access.json")
        self._access = self._load_access()

    # -- local access store (object content keys) -------------------------

    def _load_access(self) -> dict:
        try:
            with open(self._access_path) as fh:
                return json.load(fh)
        except (OSError, ValueError):
            return {}

    def _save_access(self) -> None:
        with open(self._access_path, "w") as fh:
            json.dump(self._access, fh, indent=1, sort_keys=True)

    def _remember_key(self, bucket: str, key: str, object_key: bytes) -> None:
        self._access[f"{bucket}/{key}"] = {"object_key": b64(object_key)}
        self._save_access()

    def _object_key(self, bucket: str, key: str) -> bytes:
        entry = self._access.get(f"{bucket}/{key}")
        if entry is None:
            raise NoSuchObject(f"no content key held for {bucket}/{key}")
        return b64_decode(entry["object_key"])

    # -- satellite plumbing ------------------------------------------------

    def _signed_fields(self, op: str, bucket: str, key: str = "") -> dict:
        ts = int(time.time() * 1000)
        nonce = os.urandom(8).hex()
        sig = crypto.sign(self.owner.secret_key, request_auth_portion(op, bucket, key, ts, nonce))
        return {"bucket": bucket, "key": key, "ts": ts, "nonce": nonce, "sig": b64(sig)}

    def _post(self, path: str, body: dict) -> dict:
        response = self.net.post(self.satellite, path, body, src_region=self.region, faults=False)
        if response.status >= 400:
            _raise_storage_error(response)
        return from_json(response.body)

    # -- bucket + object operations -----------------------------------------

    def make_bucket(self, name: str) -> str:
        check_bucket_name(name)
        self._post("/buckets", {"name": name, "owner_verkey": b64(self.owner.public_key)})
        return name

    def upload(self, bucket: str, source: str | bytes, key: str | None = None) -> StoredObject:
        if isinstance(source, bytes):
            data = source
            if key is None:
                raise ValueError("key is required when uploading raw bytes")
        else:
            with open(source, "rb") as fh:
                data = fh.read()
            key = key or os.path.basename(source)

        object_key = os.urandom(32)
        params = self.erasure_params
        segments = []
        chunks = [data[i : i + self.segment_size] for i in range(0, len(data), self.segment_size)]
        if not chunks:
            chunks = [b""]  # zero-byte object still gets one (empty) segment
        for index, chunk in enumerate(chunks):
            seg_key = crypto.derive_key(object_key, b"segment:%d" % index)
            aad = canonical_json({"bucket": bucket, "key": key, "segment": index})
            ciphertext = crypto.aead_encrypt(seg_key, b"\x00" * 12, chunk, aad)
            shards = erasure.encode(params, ciphertext)

            response = self.net.get(
                self.satellite, "/nodes/pick", {"n": str(params.n)}, src_region=self.region
            )
            if response.status >= 400:
                _raise_storage_error(response)
            nodes = from_json(response.body)["nodes"]
            locations = []
            hashes = []
            for shard, node in zip(shards, nodes):
                shard_id = os.urandom(16).hex()
                frame_header = canonical_json({"shard_id": shard_id})
                frame = struct.pack("<I", len(frame_header)) + frame_header + shard
                response = self.net.request(
                    node["address"],
                    Request(method="POST", path="/shards", body=frame),
                    src_region=self.region,
                    faults=False,
                )
                if response.status != 201:
                    _raise_storage_error(response)
                locations.append((node["node_id"], shard_id))
                hashes.append(crypto.sha256(shard).hex())
            segments.append(
                SegmentPointer(
                    segment_id=os.urandom(16).hex(),
                    k=params.k,
                    n=params.n,
                    segment_size=len(ciphertext),
                    plain_size=len(chunk),
                    locations=locations,
                    shard_hashes=hashes,
                )
            )

        self._post(
            "/objects/commit",
            {
                **self._signed_fields("commit", bucket, key),
                "size": len(data),
                "segments": [s.to_dict() for s in segments],
            },
        )
        self._remember_key(bucket, key, object_key)
        return StoredObject(
            bucket=bucket,
            key=key,
            object_key=object_key,
            segment_pointers=segments,
            size=len(data),
            created_at=int(time.time() * 1000),
        )

    def _fetch_segment(self, pointer: SegmentPointer, node_addresses: dict, bucket: str, key: str, index: int, object_key: bytes) -> bytes:
        collected: dict[int, bytes] = {}
        for row, (node_id, shard_id) in enumerate(pointer.locations):
            if len(collected) >= pointer.k:
                break
            address = node_addresses.get(node_id)
            if address is None:
                continue
            try:
                response = self.net.get(address, f"/shards/{shard_id}", src_region=self.region)
            except SoverClaimError:
                continue
            if response.status != 200:
                continue
            if crypto.sha256(response.body).hex() != pointer.shard_hashes[row]:
                continue  # corrupted shard; try another
            collected[row] = response.body
        if len(collected) < pointer.k:
            raise NotEnoughShards(
                f"segment {pointer.segment_id}: {len(collected)} of {pointer.k} shards reachable"
            )
        ciphertext = erasure.decode(
            ErasureParams(pointer.k, pointer.n), collected, pointer.segment_size
        )
        seg_key = crypto.derive_key(object_key, b"segment:%d" % index)
        aad = canonical_json({"bucket": bucket, "key": key, "segment": index})
        return crypto.aead_decrypt(seg_key, b"\x00" * 12, ciphertext, aad)

    def download(self, bucket: str, key: str) -> bytes:
        pointers = self._post(
            "/objects/pointers", self._signed_fields("pointers", bucket, key)
        )
        return self._assemble(pointers, bucket, key, self._object_key(bucket, key))

    def _assemble(self, pointers: dict, bucket: str, key: str, object_key: bytes) -> bytes:
        node_addresses = pointers["node_addresses"]
        out = []
        for index, raw in enumerate(pointers["segments"]):
            pointer = SegmentPointer.from_dict(raw)
            out.append(
                self._fetch_segment(pointer, node_addresses, bucket, key, index, object_key)
            )
        data = b"".join(out)
        if len(data) != pointers["size"]:
            raise AuthFailure("reassembled object size mismatch")
        return data

    def list_objects(self, bucket: str) -> list[str]:
        return self._post("/objects/list", self._signed_fields("list", bucket))["keys"]

    def share(self, bucket: str, key: str, not_after: int | None = None) -> ShareCapability:
        """Mint a read capability URL for exactly this object.

        The signed grant goes to the satellite; the content key rides only
        in the URL so the satellite stays blind to it."""
        object_key = self._object_key(bucket, key)
        grant = {
            "bucket": bucket,
            "key_prefix": key,
            "perms": ["read"],
            "not_after": not_after,
            "owner": b64(self.owner.public_key),
        }
        grant["sig"] = b64(crypto.sign(self.owner.secret_key, token_body(grant)))
        url_token = {**grant, "object_key": b64(object_key)}
        return ShareCapability(
            token=grant, object_key=object_key, url=share_url(bucket, key, url_token)
        )

    def download_shared(self, url: str) -> bytes:
        """Fetch an object through a capability URL; needs no owner state."""
        bucket, key, url_token = parse_share_url(url)
        object_key = b64_decode(url_token.pop("object_key"))
        not_after = url_token.get("not_after")
        if not_after is not None and int(not_after) < int(time.time() * 1000):
            raise ExpiredCapability(f"capability for {bucket}/{key} expired")
        pointers = self._post(
            "/objects/pointers", {"bucket": bucket, "key": key, "token": url_token}
        )
        return self._assemble(pointers, bucket, key, object_key)

    def delete(self, bucket: str, key: str) -> DeletionReport:
        body = self._post("/objects/delete", self._signed_fields("delete", bucket, key))
        report = DeletionReport(
            receipts=[DeletionReceipt.from_dict(r) for r in body["receipts"]],
            pointers_removed=int(body["pointers_removed"]),
            partial=bool(body["partial"]),
            unreachable=list(body["unreachable"]),
        )
        self._access.pop(f"{bucket}/{key}", None)
        self._save_access()
        if report.partial:
            raise PartialDeletion(report)
        return report
