import time

import pytest

from soverclaim import crypto, did
from soverclaim.ledger import LedgerConfig, start_network
from soverclaim.transport import SimNetwork

FAST_LEDGER = LedgerConfig(batch_interval=0.01, max_batch=100, proposal_timeout=0.3, tick=0.005)


@pytest.fixture
def sim_net():
    return SimNetwork(seed=7)


@pytest.fixture
def ledger_net(sim_net):
    network = start_network(4, 1, net=sim_net, config=FAST_LEDGER)
    yield network
    network.stop()


def make_sov_identity(handle, endpoint: str = "") -> tuple[str, crypto.KeyPair]:
    """Create a signing keypair, register its did:sov NYM, return both."""
    keypair = crypto.generate_keypair(crypto.Alg.SIGN)
    target = did.sov_did_for_key(keypair.public_key)
    services = [("didcomm", endpoint)] if endpoint else []
    document = did.DidDocument(
        id=str(target),
        verification_methods=[
            did.VerificationMethod(f"{target}#keys-1", "Ed25519", keypair.public_key)
        ],
        service_endpoints=services,
    )
    did.register_public_did(handle, document, keypair)
    return str(target), keypair


def make_anchor_payload(payload: bytes = b"opaque-ciphertext") -> dict:
    from soverclaim.encoding import b64

    return {
        "cipher": b64(payload),
        "wrapped_key": b64(b"\x01" * crypto.WRAPPED_KEY_SIZE),
        "hash": crypto.sha256(payload).hex(),
    }


def wait_for_quiescence(network, timeout: float = 10.0) -> None:
    """Block until every running validator reports the same height and an
    empty mempool."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        live = [v for v in network.validators if v.running]
        with_heights = []
        busy = False
        for validator in live:
            with validator.lock:
                with_heights.append(validator.state.height)
                busy = busy or bool(validator.mempool) or validator.pending_block is not None
        if not busy and len(set(with_heights)) == 1:
            return
        time.sleep(0.02)
    raise TimeoutError("validators did not quiesce")
