import pytest

from soverclaim import crypto, did
from soverclaim.crypto import Alg
from soverclaim.errors import MalformedDid, UnknownDid

from .conftest import make_sov_identity


def test_create_local_did_deterministic():
    kp = crypto.generate_keypair(Alg.SIGN)
    d1, _ = did.create_local_did(kp)
    d2, _ = did.create_local_did(kp)
    assert str(d1) == str(d2)
    assert str(d1).startswith("did:key:")


def test_distinct_keypairs_distinct_dids():
    a, _ = did.create_local_did(crypto.generate_keypair(Alg.SIGN))
    b, _ = did.create_local_did(crypto.generate_keypair(Alg.SIGN))
    assert str(a) != str(b)


def test_resolve_local_roundtrip():
    kp = crypto.generate_keypair(Alg.SIGN)
    d, doc = did.create_local_did(kp)
    resolved = did.resolve_local(d)
    assert resolved.primary_key == kp.public_key
    assert resolved.to_dict() == doc.to_dict()


def test_resolve_local_needs_no_ledger():
    # No ledger exists anywhere in this test; resolution is self-contained.
    kp = crypto.generate_keypair(Alg.SIGN)
    d, _ = did.create_local_did(kp)
    assert did.resolve(str(d)).primary_key == kp.public_key


def test_resolve_local_referentially_transparent():
    d, _ = did.create_local_did(crypto.generate_keypair(Alg.SIGN))
    docs = {did.resolve_local(d).canonical_bytes() for _ in range(100)}
    assert len(docs) == 1


@pytest.mark.parametrize(
    "bad",
    [
        "did:key:0OIl",          # invalid base58 characters
        "did:key:",              # empty id
        "did:unknown:abc",       # unknown method
        "not-a-did",
        "did:key:abc:extra:parts",
        "did:key:2g",            # decodes but wrong length/prefix
    ],
)
def test_malformed_local_dids(bad):
    with pytest.raises(MalformedDid):
        did.resolve_local(bad)


def test_kem_keypair_rejected_for_local_did():
    with pytest.raises(ValueError):
        did.create_local_did(crypto.generate_keypair(Alg.KEM))


def test_ownership_check():
    kp = crypto.generate_keypair(Alg.SIGN)
    d, _ = did.create_local_did(kp)
    challenge = b"prove-it-12345"
    sig = crypto.sign(kp.secret_key, challenge)
    assert did.check_ownership(d, challenge, sig)
    other = crypto.generate_keypair(Alg.SIGN)
    assert not did.check_ownership(d, challenge, crypto.sign(other.secret_key, challenge))


class TestPublicDids:
    def test_register_then_resolve(self, ledger_net):
        did_str, kp = make_sov_identity(ledger_net.handle, endpoint="http://issuer:8030")
        doc = did.resolve_public(ledger_net.handle, did_str)
        assert doc.primary_key == kp.public_key
        assert doc.service_endpoints == [("didcomm", "http://issuer:8030")]

    def test_resolve_unknown(self, ledger_net):
        ghost = did.sov_did_for_key(crypto.generate_keypair(Alg.SIGN).public_key)
        with pytest.raises(UnknownDid):
            did.resolve_public(ledger_net.handle, str(ghost))

    def test_reregister_updates_document(self, ledger_net):
        did_str, kp = make_sov_identity(ledger_net.handle, endpoint="http://old:1")
        updated = did.DidDocument(
            id=did_str,
            verification_methods=[
                did.VerificationMethod(f"{did_str}#keys-1", "Ed25519", kp.public_key)
            ],
            service_endpoints=[("didcomm", "http://new:2")],
        )
        did.register_public_did(ledger_net.handle, updated, kp)
        doc = did.resolve_public(ledger_net.handle, did_str)
        assert doc.service_endpoints == [("didcomm", "http://new:2")]
        nyms = ledger_net.query(txn_type="NYM", submitter=did_str)
        assert len(nyms) == 2
