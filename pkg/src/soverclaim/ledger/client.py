"""Client handle and network orchestration for the validator pool."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

from .. import crypto, did as did_mod
from ..encoding import b64, from_json
from ..errors import (
    AlreadyRevoked,
    BadQuorumConfig,
    BadSignature,
    DuplicateSchemaId,
    LedgerUnavailable,
    NotIssuer,
    SchemaViolation,
    SoverClaimError,
    UnknownDid,
)
from ..transport import SimNetwork
from .types import Block, LedgerTransaction, TxnType, build_txn, merkle_root, verify_chain_dicts
from .validator import LedgerConfig, ValidatorNode

_ERROR_MAP = {
    "BadSignature": BadSignature,
    "SchemaViolation": SchemaViolation,
    "DuplicateSchemaId": DuplicateSchemaId,
    "NotIssuer": NotIssuer,
    "AlreadyRevoked": AlreadyRevoked,
    "UnknownDid": UnknownDid,
}


def _raise_mapped(kind: str, detail: str) -> None:
    raise _ERROR_MAP.get(kind, SoverClaimError)(detail)


@dataclass
class Trustee:
    did: str
    keypair: crypto.KeyPair


class LedgerHandle:
    """Submission and query client. Safe to share across threads;
    submissions are serialized per handle, waits run concurrently."""

    def __init__(
        self,
        net: SimNetwork,
        addresses: list[str],
        quorum: int,
        region: str = "local",
        commit_timeout: float = 10.0,
    ) -> None:
        self.net = net
        self.addresses = list(addresses)
        self.quorum = quorum
        self.region = region
        self.commit_timeout = commit_timeout
        self._submit_lock = threading.Lock()
        self._preferred = 0

    # -- plumbing --------------------------------------------------------

    def _each_address(self):
        n = len(self.addresses)
        for i in range(n):
            yield self.addresses[(self._preferred + i) % n]

    def _post(self, path: str, obj: dict) -> dict:
        last = None
        for i, address in enumerate(list(self._each_address())):
            try:
                response = self.net.post(address, path, obj, src_region=self.region, faults=False)
            except SoverClaimError as exc:
                last = exc
                continue
            self._preferred = (self._preferred + i) % len(self.addresses)
            body = from_json(response.body)
            if response.status >= 400:
                _raise_mapped(body.get("error", ""), body.get("detail", ""))
            return body
        raise LedgerUnavailable(f"no validator reachable: {last}")

    def _get(self, path: str, query: dict | None = None) -> dict | list:
        last = None
        for address in self._each_address():
            try:
                response = self.net.get(address, path, query, src_region=self.region)
            except SoverClaimError as exc:
                last = exc
                continue
            body = from_json(response.body)
            if response.status >= 400:
                _raise_mapped(body.get("error", ""), body.get("detail", ""))
            return body
        raise LedgerUnavailable(f"no validator reachable: {last}")

    # -- operations ------------------------------------------------------

    def submit(self, txn: LedgerTransaction) -> int:
        with self._submit_lock:
            body = self._post("/submit", {"txn": txn.to_dict()})
        txn_id = body["txn_id"]
        deadline = time.monotonic() + self.commit_timeout
        while time.monotonic() < deadline:
            remaining = max(0.1, min(2.0, deadline - time.monotonic()))
            body = self._post("/wait", {"txn_id": txn_id, "timeout": remaining})
            if body["status"] == "committed":
                seq = int(body["seq_no"])
                txn.seq_no = seq
                return seq
            if body["status"] == "rejected":
                _raise_mapped(body["error"], body.get("detail", ""))
        raise LedgerUnavailable(f"transaction {txn_id} not committed in time")

    def submit_payload(
        self, txn_type: TxnType | str, payload: dict, submitter: str, keypair: crypto.KeyPair
    ) -> int:
        txn = build_txn(txn_type, payload, submitter, keypair, int(time.time() * 1000))
        return self.submit(txn)

    def query(
        self,
        txn_type: str | None = None,
        submitter: str | None = None,
        seq_from: int | None = None,
        seq_to: int | None = None,
    ) -> list[LedgerTransaction]:
        query: dict[str, str] = {}
        if txn_type:
            query["type"] = txn_type
        if submitter:
            query["submitter"] = submitter
        if seq_from is not None:
            query["from"] = str(seq_from)
        if seq_to is not None:
            query["to"] = str(seq_to)
        return [LedgerTransaction.from_dict(t) for t in self._get("/txns", query)]

    def resolve_did(self, target: str) -> did_mod.DidDocument:
        body = self._get(f"/did/{target}")
        return did_mod.DidDocument.from_dict(body["document"])

    def get_blocks(self, from_height: int = 0) -> list[dict]:
        return self._get("/blocks", {"from": str(from_height)})

    def verify_chain(self) -> bool:
        return verify_chain_dicts(self.get_blocks(), self.quorum)

    def is_revoked(self, cred_id: str, at_seq_no: int | None = None) -> bool:
        query = {"at": str(at_seq_no)} if at_seq_no is not None else None
        return bool(self._get(f"/revoked/{cred_id}", query)["revoked"])

    def health(self) -> dict:
        return self._get("/health")


class LedgerNetwork:
    """The running validator pool plus a default client handle."""

    def __init__(
        self,
        net: SimNetwork,
        validators: list[ValidatorNode],
        trustee: Trustee,
        genesis_block: Block,
        quorum: int,
    ) -> None:
        self.net = net
        self.validators = validators
        self.trustee = trustee
        self.genesis_block = genesis_block
        self.quorum = quorum
        self.handle = self.new_client()

    @property
    def addresses(self) -> list[str]:
        return [v.address for v in self.validators]

    def new_client(self, region: str = "local", commit_timeout: float = 10.0) -> LedgerHandle:
        return LedgerHandle(self.net, self.addresses, self.quorum, region, commit_timeout)

    def crash(self, vid: int) -> None:
        self.validators[vid].stop()

    def restart(self, vid: int) -> None:
        self.validators[vid].start()

    def stop(self) -> None:
        for validator in self.validators:
            validator.stop()

    # Convenience delegation so the network object doubles as a handle.
    def submit(self, txn: LedgerTransaction) -> int:
        return self.handle.submit(txn)

    def submit_payload(self, txn_type, payload, submitter, keypair) -> int:
        return self.handle.submit_payload(txn_type, payload, submitter, keypair)

    def query(self, **kwargs) -> list[LedgerTransaction]:
        return self.handle.query(**kwargs)

    def resolve_did(self, target: str) -> did_mod.DidDocument:
        return self.handle.resolve_did(target)

    def verify_chain(self) -> bool:
        return self.handle.verify_chain()

    def is_revoked(self, cred_id: str, at_seq_no: int | None = None) -> bool:
        return self.handle.is_revoked(cred_id, at_seq_no)


def start_network(
    n_validators: int = 4,
    f: int = 1,
    net: SimNetwork | None = None,
    config: LedgerConfig | None = None,
    regions: list[str] | None = None,
    address_prefix: str = "net://validator",
    addresses: list[str] | None = None,
) -> LedgerNetwork:
    """Start an n-validator pool tolerating f crash faults (n >= 3f+1)."""
    if f < 1 or n_validators < 3 * f + 1:
        raise BadQuorumConfig(f"n={n_validators} cannot tolerate f={f} (need n >= 3f+1)")
    quorum = 2 * f + 1
    net = net or SimNetwork()

    keypairs = [crypto.generate_keypair(crypto.Alg.SIGN) for _ in range(n_validators)]
    trustee_kp = crypto.generate_keypair(crypto.Alg.SIGN)
    trustee = Trustee(did=str(did_mod.sov_did_for_key(trustee_kp.public_key)), keypair=trustee_kp)

    if addresses is None:
        addresses = [f"{address_prefix}-{i}" for i in range(n_validators)]
    elif len(addresses) != n_validators:
        raise BadQuorumConfig("addresses list must match validator count")
    genesis = {
        "validators": [
            {"id": i, "verkey": b64(keypairs[i].public_key), "address": addresses[i]}
            for i in range(n_validators)
        ],
        "trustee": {"did": trustee.did, "verkey": b64(trustee_kp.public_key)},
        "quorum": quorum,
    }
    genesis_block = Block(
        height=0,
        prev_hash=b"\x00" * 32,
        txn_root=merkle_root([]),
        txns=[],
        proposer=0,
        attempt=0,
        timestamp=int(time.time() * 1000),
        genesis=genesis,
    )
    genesis_hash = genesis_block.block_hash()
    genesis_block.quorum_sigs = [
        (i, crypto.sign(keypairs[i].secret_key, genesis_hash)) for i in range(n_validators)
    ]

    peers = dict(enumerate(addresses))
    validators = []
    for i in range(n_validators):
        region = regions[i % len(regions)] if regions else "local"
        validators.append(
            ValidatorNode(
                vid=i,
                keypair=keypairs[i],
                genesis_block=genesis_block,
                net=net,
                address=addresses[i],
                region=region,
                quorum=quorum,
                peers=peers,
                config=config,
            )
        )
    for validator in validators:
        validator.start()
    return LedgerNetwork(net, validators, trustee, genesis_block, quorum)
