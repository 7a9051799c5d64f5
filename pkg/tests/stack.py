"""Full-platform stack assembly shared by the agent, acceptance, and
bench-oriented tests."""

from __future__ import annotations

import time

from soverclaim import crypto
from soverclaim.agents import AgentConfig, HolderAgent, IssuerAgent, VerifierAgent
from soverclaim.errors import SoverClaimError
from soverclaim.ledger import LedgerConfig, start_network
from soverclaim.messaging import RetryPolicy
from soverclaim.storage import GcConfig, Satellite, StorageNode
from soverclaim.transport import SimNetwork

TEST_KDF = {"kdf": "scrypt", "n": 1024, "r": 8, "p": 1}
FAST_LEDGER = LedgerConfig(batch_interval=0.01, max_batch=100, proposal_timeout=0.4, tick=0.005)
FAST_RETRY = RetryPolicy(attempts=6, backoff=0.02, multiplier=1.5)

INSURANCE_ATTRS = ["name", "policy_no", "valid_until"]


class FullStack:
    """4 validators + satellite + 4 storage nodes + issuer/holder/verifier."""

    def __init__(
        self,
        base_dir,
        seed: int = 5,
        regions: dict[str, str] | None = None,
        wan_delay: float = 0.0,
        wan_jitter: float = 0.0,
        auto_approve: bool = True,
        protocol_timeout: float = 30.0,
        ledger_config: LedgerConfig | None = None,
        n_nodes: int = 4,
    ) -> None:
        self.base_dir = base_dir
        self.net = SimNetwork(seed=seed)
        regions = regions or {}
        if wan_delay:
            self.net.set_default_link(wan_delay, wan_jitter)

        self.ledger_net = start_network(
            4,
            1,
            net=self.net,
            config=ledger_config or FAST_LEDGER,
            regions=[regions.get("ledger", "ledger-region")] if regions or wan_delay else None,
        )

        self.satellite = Satellite(
            self.net,
            region=regions.get("storage", "storage-region") if (regions or wan_delay) else "local",
            gc_config=GcConfig(grace_period=0.0),
        )
        self.satellite.start()
        self.nodes = []
        for i in range(n_nodes):
            node = StorageNode(
                node_id=f"node-{i}",
                store_dir=str(base_dir / f"node{i}"),
                net=self.net,
                address=f"net://node-{i}",
                satellite_address=self.satellite.address,
                region=self.satellite.region,
            )
            node.start()
            self.nodes.append(node)

        def agent_config(region_key: str) -> AgentConfig:
            return AgentConfig(
                protocol_timeout=protocol_timeout,
                auto_approve=auto_approve,
                retry=FAST_RETRY,
                region=regions.get(region_key, f"{region_key}-region") if (regions or wan_delay) else "local",
                keystore_kdf=TEST_KDF,
            )

        self.issuer = IssuerAgent(
            "issuer",
            self.net,
            str(base_dir / "issuer"),
            self.ledger_net.new_client(region=agent_config("issuer").region),
            config=agent_config("issuer"),
        )
        self.issuer.attach_storage(self.satellite.address)
        self.holder = HolderAgent(
            "holder",
            self.net,
            str(base_dir / "holder"),
            self.ledger_net.new_client(region=agent_config("holder").region),
            config=agent_config("holder"),
            satellite_address=self.satellite.address,
        )
        self.verifier = VerifierAgent(
            "verifier",
            self.net,
            str(base_dir / "verifier"),
            self.ledger_net.new_client(region=agent_config("verifier").region),
            config=agent_config("verifier"),
        )
        for agent in (self.issuer, self.holder, self.verifier):
            agent.start()

        self.issuer.register_public_identity()
        self.issuer.setup_credential_type("insurance", "1.0", INSURANCE_ATTRS)

    def connect(self, inviter, requester):
        invitation = inviter.messenger.create_invitation()
        conn_requester = requester.messenger.accept_invitation(invitation, timeout=15.0)
        conn_id = inviter.messenger.invitations[invitation.invitation_id]["connection_id"]
        conn_inviter = inviter.messenger.connections[conn_id]
        deadline = time.monotonic() + 10
        while conn_inviter.state != "COMPLETE" and time.monotonic() < deadline:
            time.sleep(0.005)
        if conn_inviter.state != "COMPLETE":
            raise SoverClaimError("handshake did not complete on the inviter side")
        return conn_inviter, conn_requester

    def upload_and_share(self, data: bytes, key: str = "scan.png", bucket: str = "claims", not_after=None):
        uplink = self.holder.uplink
        try:
            uplink.make_bucket(bucket)
        except SoverClaimError:
            pass
        uplink.upload(bucket, data, key=key)
        capability = uplink.share(bucket, key, not_after)
        return capability.url, crypto.sha256(data).hex()

    def stop(self) -> None:
        for agent in (self.issuer, self.holder, self.verifier):
            agent.stop()
        self.satellite.stop()
        for node in self.nodes:
            node.stop()
        self.ledger_net.stop()


def wait_for(predicate, timeout: float = 10.0, interval: float = 0.01, message: str = "condition"):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(interval)
    raise TimeoutError(f"timed out waiting for {message}")


def wait_record_state(store, thread_id: str, states: set[str], timeout: float = 10.0) -> dict:
    return wait_for(
        lambda: (lambda r: r if r and r["state"] in states else None)(store.get(thread_id)),
        timeout=timeout,
        message=f"thread {thread_id} to reach {states}",
    )
