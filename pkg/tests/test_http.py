"""The real-HTTP facade: the same routers served over TCP, agents across
processes-worth of isolation, and the server-sent event stream."""

import json
import threading
import time

import pytest
import requests

from soverclaim.deploy import Platform, PlatformConfig
from soverclaim.encoding import from_json
from soverclaim.httpd import HttpNetwork, HttpService
from soverclaim.transport import Response, Router

from .stack import TEST_KDF


def test_router_served_over_http():
    router = Router()
    router.add("GET", "/ping", lambda request: Response.json({"pong": True}))
    router.add("POST", "/echo", lambda request: Response(200, request.body))
    service = HttpService(router).start()
    try:
        base = service.url
        assert requests.get(f"{base}/ping").json() == {"pong": True}
        assert requests.post(f"{base}/echo", data=b"hello").content == b"hello"
        assert requests.get(f"{base}/nope").status_code == 404
    finally:
        service.stop()


def test_http_network_register_and_request():
    net = HttpNetwork()
    router = Router()
    router.add("GET", "/health", lambda request: Response.json({"ok": True}))
    address = "http://127.0.0.1:18231"
    net.register(address, router)
    try:
        assert net.is_registered(address)
        response = net.get(address, "/health")
        assert from_json(response.body)["ok"]
    finally:
        net.deregister(address)


@pytest.fixture(scope="module")
def http_platform(tmp_path_factory):
    platform = Platform(
        str(tmp_path_factory.mktemp("httpstack")),
        config=PlatformConfig(http_base_port=18300, keystore_kdf=TEST_KDF),
    )
    yield platform
    platform.stop()


class TestHttpPlatform:
    def test_health_endpoints(self, http_platform):
        for port, kind in ((18300, "validator"), (18310, None), (18330, "issuer")):
            body = requests.get(f"http://127.0.0.1:{port}/health").json()
            assert body["ok"]

    def test_full_scenario_over_http(self, http_platform):
        from soverclaim.scenario import run_claim_scenario

        report = run_claim_scenario(
            http_platform.issuer,
            http_platform.holder,
            http_platform.verifier,
            http_platform.satellite,
            nodes=http_platform.nodes,
        )
        assert report["ok"]
        assert report["residual_shards"] == 0

    def test_admin_api_over_http(self, http_platform):
        base = "http://127.0.0.1:18331"  # holder
        invitation = requests.post(f"{base}/invitations", data=b"{}").json()
        assert invitation["url"].startswith("didcomm://invite?oob=")
        connections = requests.get(f"{base}/connections").json()
        assert isinstance(connections, list)
        assert requests.get(f"{base}/records/ghost").status_code == 404
        bad = requests.post(
            "http://127.0.0.1:18332/present/request",
            data=json.dumps({"bogus": 1}).encode(),
        )
        assert bad.status_code == 400

    def test_sse_event_stream(self, http_platform):
        base = "http://127.0.0.1:18331"
        found = []

        def listen():
            with requests.get(f"{base}/events", stream=True, timeout=30) as stream:
                for line in stream.iter_lines(chunk_size=1):
                    if not line.startswith(b"data: "):
                        continue
                    event = json.loads(line[len(b"data: "):])
                    if event["event"] == "test":
                        found.append(event)
                        return

        listener = threading.Thread(target=listen, daemon=True)
        listener.start()
        time.sleep(0.3)
        started = time.monotonic()
        http_platform.holder.emit("test", {"hello": "world"})
        listener.join(timeout=10)
        latency = time.monotonic() - started
        assert found and found[0]["data"] == {"hello": "world"}
        assert latency < 1.0  # UI-visible within a second


def test_cross_http_agents_connect(tmp_path):
    """Two agents on separate HTTP endpoints complete the handshake and a
    full issuance without any shared in-process transport."""
    platform = Platform(
        str(tmp_path),
        config=PlatformConfig(http_base_port=18400, keystore_kdf=TEST_KDF),
    )
    try:
        conn_inviter, conn_requester = platform.connect(platform.issuer, platform.holder)
        assert conn_inviter.state == "COMPLETE"
        assert conn_requester.state == "COMPLETE"
    finally:
        platform.stop()
