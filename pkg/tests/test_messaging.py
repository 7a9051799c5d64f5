import threading
import time

import pytest

from soverclaim import crypto, did, messaging
from soverclaim.errors import ConnectionClosed, InvitationConsumed
from soverclaim.messaging import Messenger, OobInvitation, RetryPolicy, seal_envelope
from soverclaim.transport import SimNetwork

FAST_RETRY = RetryPolicy(attempts=4, backoff=0.02, multiplier=1.5)


@pytest.fixture
def net():
    return SimNetwork(seed=3)


def make_messenger(net, name) -> Messenger:
    m = Messenger(net, f"net://{name}", label=name, retry=FAST_RETRY)
    m.start()
    return m


@pytest.fixture
def pair(net):
    issuer = make_messenger(net, "issuer")
    holder = make_messenger(net, "holder")
    yield issuer, holder
    issuer.stop()
    holder.stop()


def connect(inviter: Messenger, requester: Messenger):
    invitation = inviter.create_invitation()
    conn_requester = requester.accept_invitation(invitation, timeout=10.0)
    conn_inviter = inviter.connections[
        inviter.invitations[invitation.invitation_id]["connection_id"]
    ]
    deadline = time.monotonic() + 5
    while conn_inviter.state != messaging.COMPLETE and time.monotonic() < deadline:
        time.sleep(0.005)
    return conn_inviter, conn_requester


class TestInvitations:
    def test_url_roundtrip(self, pair):
        issuer, _ = pair
        invitation = issuer.create_invitation()
        again = OobInvitation.from_url(invitation.to_url())
        assert again == invitation

    def test_distinct_ids(self, pair):
        issuer, _ = pair
        assert issuer.create_invitation().invitation_id != issuer.create_invitation().invitation_id

    def test_qr_payload_decodes_with_independent_reader(self, pair):
        import cv2
        import numpy as np

        issuer, _ = pair
        invitation = issuer.create_invitation()
        png = invitation.qr_png()
        arr = cv2.imdecode(np.frombuffer(png, np.uint8), cv2.IMREAD_GRAYSCALE)
        decoded, *_ = cv2.QRCodeDetector().detectAndDecode(arr)
        assert decoded == invitation.to_url()


class TestHandshake:
    def test_full_handshake_both_complete(self, pair):
        issuer, holder = pair
        conn_i, conn_h = connect(issuer, holder)
        assert conn_i.state == messaging.COMPLETE
        assert conn_h.state == messaging.COMPLETE
        assert conn_i.their_did == conn_h.my_did
        assert conn_h.their_did == conn_i.my_did
        # Pairwise DIDs resolve locally to the keys in use.
        assert did.resolve_local(conn_i.their_did).primary_key == conn_h.my_sign.public_key

    def test_invitation_single_use(self, pair, net):
        issuer, holder = pair
        stranger = make_messenger(net, "stranger")
        try:
            invitation = issuer.create_invitation()
            holder.accept_invitation(invitation)
            with pytest.raises(InvitationConsumed):
                stranger.accept_invitation(invitation, timeout=2.0)
        finally:
            stranger.stop()

    def test_dropped_response_retried(self, pair, net):
        issuer, holder = pair
        dropped = {"count": 0}

        def drop_first_response(src, dst, request):
            if dst == "net://holder" and dropped["count"] == 0:
                dropped["count"] += 1
                return True
            return False

        net.intercept = drop_first_response
        conn_i, conn_h = connect(issuer, holder)
        assert dropped["count"] == 1
        assert conn_h.state == messaging.COMPLETE
        assert conn_i.state == messaging.COMPLETE

    def test_pairwise_dids_unique_per_connection(self, pair):
        issuer, holder = pair
        _, conn1 = connect(issuer, holder)
        _, conn2 = connect(issuer, holder)
        assert conn1.my_did != conn2.my_did


class TestMessaging:
    def test_100_messages_in_order(self, pair):
        issuer, holder = pair
        conn_i, conn_h = connect(issuer, holder)
        received = []
        done = threading.Event()

        def handler(conn, inner, thread_id):
            received.append(inner["n"])
            if len(received) == 100:
                done.set()

        issuer.register_handler("test/number", handler)
        for n in range(1, 101):
            holder.send(conn_h.connection_id, "test/number", {"n": n})
        assert done.wait(10)
        assert received == list(range(1, 101))

    def test_send_on_incomplete_connection(self, pair):
        issuer, holder = pair
        invitation = issuer.create_invitation()
        # Build a connection record by hand that never completed.
        with pytest.raises(ConnectionClosed):
            holder.send("nonexistent", "x", {})

    def test_tampered_envelope_rejected_then_retry_succeeds(self, pair, net):
        issuer, holder = pair
        conn_i, conn_h = connect(issuer, holder)
        got = threading.Event()
        issuer.register_handler("test/msg", lambda c, i, t: got.set())

        envelope = seal_envelope(
            conn_h.my_kem, conn_h.their_kem, {"type": "test/msg"}, seq=99, thread_id="t"
        )
        envelope["ciphertext"] = envelope["ciphertext"][:-2] + "AA"
        response = net.post("net://issuer", "/didcomm", envelope)
        assert response.status == 400  # dropped, no ack

        holder.send(conn_h.connection_id, "test/msg", {})
        assert got.wait(5)

    def test_duplicate_suppression(self, pair, net):
        issuer, holder = pair
        conn_i, conn_h = connect(issuer, holder)
        hits = []
        issuer.register_handler("test/dup", lambda c, i, t: hits.append(i["x"]))
        envelope = seal_envelope(
            conn_h.my_kem, conn_h.their_kem, {"type": "test/dup", "x": 1},
            seq=conn_h.send_seq, thread_id="t",
        )
        conn_h.send_seq += 1
        for _ in range(3):
            net.post("net://issuer", "/didcomm", envelope)
        time.sleep(0.1)
        assert hits == [1]

    def test_loss_and_duplication_still_exactly_once(self, pair, net):
        issuer, holder = pair
        conn_i, conn_h = connect(issuer, holder)
        net.loss_rate = 0.1
        net.dup_rate = 0.1
        received = []
        issuer.register_handler("test/seq", lambda c, i, t: received.append(i["n"]))
        for n in range(30):
            holder.send(conn_h.connection_id, "test/seq", {"n": n})
        deadline = time.monotonic() + 5
        while len(received) < 30 and time.monotonic() < deadline:
            time.sleep(0.01)
        net.loss_rate = net.dup_rate = 0.0
        assert received == list(range(30))


class TestConfidentiality:
    def test_eavesdropper_sees_no_plaintext(self, pair, net):
        issuer, holder = pair
        captured = []
        net.add_tap(lambda src, dst, request: captured.append(bytes(request.body)))
        conn_i, conn_h = connect(issuer, holder)
        marker = "extremely-secret-policy-number-XJ9"
        done = threading.Event()
        issuer.register_handler("test/secret", lambda c, i, t: done.set())
        holder.send(conn_h.connection_id, "test/secret", {"value": marker})
        assert done.wait(5)
        blob = b"".join(captured)
        assert marker.encode() not in blob

    def test_pairwise_isolation_across_counterparties(self, net):
        issuer = make_messenger(net, "issuer2")
        verifier = make_messenger(net, "verifier2")
        holder = make_messenger(net, "holder2")
        try:
            traffic: dict[str, list[bytes]] = {}
            net.add_tap(
                lambda src, dst, request: traffic.setdefault(dst, []).append(bytes(request.body))
            )
            _, conn_to_issuer = connect(issuer, holder)
            _, conn_to_verifier = connect(verifier, holder)
            assert conn_to_issuer.my_did != conn_to_verifier.my_did
            verifier_traffic = b"".join(traffic.get("net://verifier2", []))
            assert conn_to_issuer.my_did.encode() not in verifier_traffic
            issuer_traffic = b"".join(traffic.get("net://issuer2", []))
            assert conn_to_verifier.my_did.encode() not in issuer_traffic
        finally:
            issuer.stop()
            verifier.stop()
            holder.stop()

    def test_forged_sender_key_rejected_before_dispatch(self, pair, net):
        issuer, holder = pair
        conn_i, conn_h = connect(issuer, holder)
        hits = []
        issuer.register_handler("test/forged", lambda c, i, t: hits.append(1))
        mallory = crypto.generate_keypair(crypto.Alg.KEM)
        envelope = seal_envelope(
            mallory, conn_h.their_kem, {"type": "test/forged"}, seq=5, thread_id="t"
        )
        response = net.post("net://issuer", "/didcomm", envelope)
        assert response.status == 400
        time.sleep(0.05)
        assert hits == []
