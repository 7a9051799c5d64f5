import os

import pytest

from soverclaim import crypto
from soverclaim.crypto import Alg
from soverclaim.errors import AuthFailure, CorruptStore, WrongPassphrase


def test_generate_keypair_fresh():
    a = crypto.generate_keypair(Alg.SIGN)
    b = crypto.generate_keypair(Alg.SIGN)
    assert a.public_key != b.public_key
    assert len(a.public_key) == 32


def test_public_key_derivable_from_secret():
    kp = crypto.generate_keypair(Alg.SIGN)
    again = crypto.keypair_from_secret(Alg.SIGN, kp.secret_key)
    assert again.public_key == kp.public_key
    kem = crypto.generate_keypair(Alg.KEM)
    assert crypto.keypair_from_secret(Alg.KEM, kem.secret_key).public_key == kem.public_key


def test_sign_verify_roundtrip():
    kp = crypto.generate_keypair(Alg.SIGN)
    sig = crypto.sign(kp.secret_key, b"hello")
    assert crypto.verify(kp.public_key, b"hello", sig)


def test_sign_verify_empty_message():
    kp = crypto.generate_keypair(Alg.SIGN)
    assert crypto.verify(kp.public_key, b"", crypto.sign(kp.secret_key, b""))


def test_verify_rejects_wrong_key():
    kp, other = crypto.generate_keypair(Alg.SIGN), crypto.generate_keypair(Alg.SIGN)
    sig = crypto.sign(kp.secret_key, b"msg")
    assert not crypto.verify(other.public_key, b"msg", sig)


def test_verify_rejects_tampered_message():
    kp = crypto.generate_keypair(Alg.SIGN)
    msg = bytearray(b"some message bytes")
    sig = crypto.sign(kp.secret_key, bytes(msg))
    msg[3] ^= 0x01
    assert not crypto.verify(kp.public_key, bytes(msg), sig)


def test_verify_1000_random_messages():
    kp = crypto.generate_keypair(Alg.SIGN)
    for _ in range(1000):
        msg = os.urandom(32)
        assert crypto.verify(kp.public_key, msg, crypto.sign(kp.secret_key, msg))


def test_malformed_key_lengths_rejected():
    with pytest.raises(ValueError):
        crypto.sign(b"short", b"m")
    with pytest.raises(ValueError):
        crypto.verify(b"\x00" * 31, b"m", b"\x00" * 64)


def test_forged_signatures_never_verify():
    kp = crypto.generate_keypair(Alg.SIGN)
    msg = b"forgery target"
    hits = sum(
        crypto.verify(kp.public_key, msg, os.urandom(64)) for _ in range(100_000)
    )
    assert hits == 0


class TestAead:
    def test_roundtrip_1mib(self):
        key = crypto.new_session_key()
        payload = os.urandom(1024 * 1024)
        nonce = key.next_nonce()
        ct = crypto.aead_encrypt(key, nonce, payload, b"aad")
        assert crypto.aead_decrypt(key, nonce, ct, b"aad") == payload

    def test_wrong_key_fails(self):
        k1, k2 = crypto.new_session_key(), crypto.new_session_key()
        ct = crypto.aead_encrypt(k1, b"\x00" * 12, b"secret")
        with pytest.raises(AuthFailure):
            crypto.aead_decrypt(k2, b"\x00" * 12, ct)

    def test_nonce_changes_ciphertext(self):
        key = crypto.new_session_key()
        c1 = crypto.aead_encrypt(key, key.next_nonce(), b"same plaintext")
        c2 = crypto.aead_encrypt(key, key.next_nonce(), b"same plaintext")
        assert c1 != c2

    def test_nonce_counter_starts_at_zero(self):
        key = crypto.new_session_key()
        assert key.next_nonce() == b"\x00" * 12
        assert key.next_nonce() != b"\x00" * 12

    def test_exhaustive_bit_flip_detected(self):
        # Any single-bit mutation of ciphertext, tag, nonce, or aad fails.
        key = crypto.new_session_key()
        nonce = key.next_nonce()
        aad = b"context"
        ct = crypto.aead_encrypt(key, nonce, os.urandom(64), aad)
        for i in range(len(ct) * 8):
            bad = bytearray(ct)
            bad[i // 8] ^= 1 << (i % 8)
            with pytest.raises(AuthFailure):
                crypto.aead_decrypt(key, nonce, bytes(bad), aad)
        for i in range(len(nonce) * 8):
            bad = bytearray(nonce)
            bad[i // 8] ^= 1 << (i % 8)
            with pytest.raises(AuthFailure):
                crypto.aead_decrypt(key, bytes(bad), ct, aad)
        for i in range(len(aad) * 8):
            bad = bytearray(aad)
            bad[i // 8] ^= 1 << (i % 8)
            with pytest.raises(AuthFailure):
                crypto.aead_decrypt(key, nonce, ct, bytes(bad))


class TestKeyWrap:
    def test_roundtrip(self):
        recipient = crypto.generate_keypair(Alg.KEM)
        session = crypto.new_session_key()
        wrapped = crypto.wrap_key(recipient.public_key, session)
        out = crypto.unwrap_key(recipient.secret_key, wrapped)
        assert out.key == session.key and out.id == session.id

    def test_unrelated_secret_key_fails(self):
        recipient, other = crypto.generate_keypair(Alg.KEM), crypto.generate_keypair(Alg.KEM)
        wrapped = crypto.wrap_key(recipient.public_key, crypto.new_session_key())
        with pytest.raises(AuthFailure):
            crypto.unwrap_key(other.secret_key, wrapped)

    def test_wrapped_length_constant(self):
        lengths = set()
        for _ in range(100):
            recipient = crypto.generate_keypair(Alg.KEM)
            wrapped = crypto.wrap_key(recipient.public_key, crypto.new_session_key())
            lengths.add(len(wrapped))
        assert lengths == {crypto.WRAPPED_KEY_SIZE}


class TestCommitments:
    def test_roundtrip(self):
        c = crypto.commit_attribute("age", "34")
        assert crypto.verify_commitment(c, "age", "34", c.salt)

    def test_wrong_value_rejected(self):
        c = crypto.commit_attribute("age", "34")
        assert not crypto.verify_commitment(c, "age", "35", c.salt)
        assert not crypto.verify_commitment(c, "name", "34", c.salt)
        assert not crypto.verify_commitment(c, "age", "34", os.urandom(16))

    def test_deterministic_for_fixed_salt(self):
        salt = os.urandom(16)
        assert (
            crypto.commit_attribute("k", "v", salt).digest
            == crypto.commit_attribute("k", "v", salt).digest
        )

    def test_distinct_salts_distinct_digests(self):
        a = crypto.commit_attribute("policy", "P-123")
        b = crypto.commit_attribute("policy", "P-123")
        assert a.salt != b.salt and a.digest != b.digest

    def test_no_collisions_over_10k_pairs(self):
        seen = set()
        for i in range(10_000):
            c = crypto.commit_attribute(f"attr{i % 7}", os.urandom(8).hex())
            assert c.digest not in seen
            seen.add(c.digest)

    def test_digest_reveals_no_value_bytes(self):
        # Hiding proxy: no >=4 byte window of the value shows up in the digest.
        for _ in range(1000):
            value = os.urandom(12)
            c = crypto.commit_attribute("blob", value.hex())
            raw = value.hex().encode()
            for i in range(len(raw) - 3):
                assert raw[i : i + 4] not in c.digest


class TestKeystore:
    PARAMS = {"kdf": "scrypt", "n": 1024, "r": 8, "p": 1}  # fast for tests

    def _keys(self):
        return {
            "sig": crypto.generate_keypair(Alg.SIGN),
            "kem": crypto.generate_keypair(Alg.KEM),
        }

    def test_seal_open_roundtrip(self, tmp_path):
        path = str(tmp_path / "keys.svck")
        keys = self._keys()
        crypto.seal_keystore(keys, "hunter2", path, kdf_params=self.PARAMS)
        opened = crypto.open_keystore(path, "hunter2")
        assert opened.keys() == keys.keys()
        for name in keys:
            assert opened[name].secret_key == keys[name].secret_key
            assert opened[name].public_key == keys[name].public_key
            assert opened[name].algorithm == keys[name].algorithm

    def test_wrong_passphrase(self, tmp_path):
        path = str(tmp_path / "keys.svck")
        crypto.seal_keystore(self._keys(), "right", path, kdf_params=self.PARAMS)
        with pytest.raises(WrongPassphrase):
            crypto.open_keystore(path, "wrong")

    def test_magic_bytes(self, tmp_path):
        path = str(tmp_path / "keys.svck")
        crypto.seal_keystore(self._keys(), "pw", path, kdf_params=self.PARAMS)
        with open(path, "rb") as fh:
            assert fh.read(5) == b"SVCK1"

    def test_truncation_fuzz(self, tmp_path):
        path = str(tmp_path / "keys.svck")
        crypto.seal_keystore(self._keys(), "pw", path, kdf_params=self.PARAMS)
        blob = open(path, "rb").read()
        # Every truncation point must surface CorruptStore, never garbage.
        for cut in range(len(blob)):
            with open(path, "wb") as fh:
                fh.write(blob[:cut])
            with pytest.raises(CorruptStore):
                crypto.open_keystore(path, "pw")

    def test_default_params_within_latency_band(self, tmp_path):
        import time

        path = str(tmp_path / "keys.svck")
        crypto.seal_keystore(self._keys(), "pw", path)
        start = time.monotonic()
        crypto.open_keystore(path, "pw")
        elapsed = time.monotonic() - start
        assert 0.01 < elapsed < 2.0  # generous bound; target band is 50-500 ms

    def test_concurrent_seal_surfaces_lock_error(self, tmp_path):
        import fcntl

        from soverclaim.errors import KeystoreLocked

        path = str(tmp_path / "keys.svck")
        lock_fd = os.open(path + ".lock", os.O_CREAT | os.O_RDWR)
        fcntl.flock(lock_fd, fcntl.LOCK_EX)  # another writer holds the lock
        try:
            with pytest.raises(KeystoreLocked):
                crypto.seal_keystore(self._keys(), "pw", path, kdf_params=self.PARAMS)
        finally:
            fcntl.flock(lock_fd, fcntl.LOCK_UN)
            os.close(lock_fd)
        crypto.seal_keystore(self._keys(), "pw", path, kdf_params=self.PARAMS)
