"""Single-call assembly of the whole platform: 4-validator ledger,
satellite + storage nodes, and the three agents. Works over the
simulated network (tests, bench) or real HTTP (demo, deployed
processes), since both expose the same transport interface."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .agents import AgentConfig, DocumentValidationPolicy, HolderAgent, IssuerAgent, VerifierAgent
from .errors import SoverClaimError
from .ledger import LedgerConfig, start_network
from .messaging import RetryPolicy
from .storage import ErasureParams, GcConfig, Satellite, StorageNode
from .transport import SimNetwork

# the four deployment regions the latency evaluation emulates
REGIONS = {
    "holder": "london",
    "issuer": "frankfurt",
    "verifier": "netherlands",
    "ledger": "belgium",
    "storage": "belgium",
}


@dataclass
class PlatformConfig:
    seed: int = 7
    wan_delay: float = 0.0   # one-way seconds between distinct regions
    wan_jitter: float = 0.0
    auto_approve: bool = True
    protocol_timeout: float = 30.0
    ledger: LedgerConfig = field(default_factory=LedgerConfig)
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    keystore_kdf: dict | None = None
    n_nodes: int = 4
    erasure: ErasureParams = field(default_factory=lambda: ErasureParams(2, 4))
    gc_grace_period: float = 0.0
    credential_type: tuple = ("insurance", "1.0", ("name", "policy_no", "valid_until"))
    policy: DocumentValidationPolicy | None = None
    http_base_port: int = 0  # when set, deploy over real HTTP from this port


def http_addresses(base_port: int, n_nodes: int = 4) -> dict:
    """Port layout for an HTTP deployment rooted at base_port."""
    return {
        "validators": [f"http://127.0.0.1:{base_port + i}" for i in range(4)],
        "satellite": f"http://127.0.0.1:{base_port + 10}",
        "nodes": [f"http://127.0.0.1:{base_port + 11 + i}" for i in range(n_nodes)],
        "issuer": f"http://127.0.0.1:{base_port + 30}",
        "holder": f"http://127.0.0.1:{base_port + 31}",
        "verifier": f"http://127.0.0.1:{base_port + 32}",
    }


class Platform:
    def __init__(self, base_dir: str, net=None, config: PlatformConfig | None = None) -> None:
        self.config = config or PlatformConfig()
        cfg = self.config
        self.base_dir = str(base_dir)
        os.makedirs(self.base_dir, exist_ok=True)

        self.addresses = None
        if cfg.http_base_port:
            from .httpd import HttpNetwork

            net = net or HttpNetwork()
            self.addresses = http_addresses(cfg.http_base_port, cfg.n_nodes)
        if net is None:
            net = SimNetwork(seed=cfg.seed)
            if cfg.wan_delay:
                net.set_default_link(cfg.wan_delay, cfg.wan_jitter)
        self.net = net
        use_regions = bool(cfg.wan_delay)

        def region(role: str) -> str:
            return REGIONS[role] if use_regions else "local"

        def address(role: str, default: str) -> str:
            if self.addresses is None:
                return default
            return self.addresses[role] if isinstance(self.addresses[role], str) else default

        self.ledger_net = start_network(
            4, 1, net=self.net, config=cfg.ledger,
            regions=[region("ledger")] if use_regions else None,
            addresses=self.addresses["validators"] if self.addresses else None,
        )

        self.satellite = Satellite(
            self.net,
            address=address("satellite", "net://satellite"),
            region=region("storage"),
            gc_config=GcConfig(grace_period=cfg.gc_grace_period),
        )
        self.satellite.start()
        self.nodes: list[StorageNode] = []
        for i in range(cfg.n_nodes):
            node = StorageNode(
                node_id=f"node-{i}",
                store_dir=os.path.join(self.base_dir, f"node{i}"),
                net=self.net,
                address=self.addresses["nodes"][i] if self.addresses else f"net://node-{i}",
                satellite_address=self.satellite.address,
                region=region("storage"),
            )
            node.start()
            self.nodes.append(node)

        def agent_config(role: str) -> AgentConfig:
            return AgentConfig(
                protocol_timeout=cfg.protocol_timeout,
                auto_approve=cfg.auto_approve,
                retry=cfg.retry,
                region=region(role),
                keystore_kdf=cfg.keystore_kdf,
            )

        self.issuer = IssuerAgent(
            "issuer",
            self.net,
            os.path.join(self.base_dir, "issuer"),
            self.ledger_net.new_client(region=region("issuer")),
            config=agent_config("issuer"),
            policy=cfg.policy,
            address=self.addresses["issuer"] if self.addresses else None,
        )
        self.issuer.attach_storage(self.satellite.address)
        self.holder = self.new_holder("holder")
        self.verifier = VerifierAgent(
            "verifier",
            self.net,
            os.path.join(self.base_dir, "verifier"),
            self.ledger_net.new_client(region=region("verifier")),
            config=agent_config("verifier"),
            address=self.addresses["verifier"] if self.addresses else None,
        )
        for agent in (self.issuer, self.verifier):
            agent.start()
        self.holder.start()

        self.issuer.register_public_identity()
        name, version, attrs = cfg.credential_type
        self.issuer.setup_credential_type(name, version, list(attrs))

    def new_holder(self, name: str) -> HolderAgent:
        """Additional simulated users for multi-user load runs."""
        cfg = self.config
        use_regions = bool(cfg.wan_delay)
        holder = HolderAgent(
            name,
            self.net,
            os.path.join(self.base_dir, name),
            self.ledger_net.new_client(region=REGIONS["holder"] if use_regions else "local"),
            config=AgentConfig(
                protocol_timeout=cfg.protocol_timeout,
                auto_approve=cfg.auto_approve,
                retry=cfg.retry,
                region=REGIONS["holder"] if use_regions else "local",
                keystore_kdf=cfg.keystore_kdf,
            ),
            satellite_address=self.satellite.address,
            address=self.addresses["holder"] if (self.addresses and name == "holder") else None,
        )
        holder.uplink.erasure_params = cfg.erasure
        return holder

    def connect(self, inviter, requester, timeout: float = 15.0):
        """Handshake two agents; returns (inviter record, requester record)."""
        import time as _time

        invitation = inviter.messenger.create_invitation()
        conn_requester = requester.messenger.accept_invitation(invitation, timeout=timeout)
        conn_id = inviter.messenger.invitations[invitation.invitation_id]["connection_id"]
        conn_inviter = inviter.messenger.connections[conn_id]
        deadline = _time.monotonic() + timeout
        while conn_inviter.state != "COMPLETE" and _time.monotonic() < deadline:
            _time.sleep(0.005)
        if conn_inviter.state != "COMPLETE":
            raise SoverClaimError("handshake did not complete on the inviter side")
        return conn_inviter, conn_requester

    def stop(self) -> None:
        for agent in (self.issuer, self.holder, self.verifier):
            try:
                agent.stop()
            except Exception:
                pass
        self.satellite.stop()
        for node in self.nodes:
            node.stop()
        self.ledger_net.stop()
