"""Cryptographic primitives used by every other subsystem.

One fixed suite, identified by SUITE_ID and embedded in every serialized
object so a future suite can coexist:

  signatures            Ed25519
  key agreement (KEM)   X25519 + HKDF-SHA256
  authenticated cipher  ChaCha20-Poly1305
  hashing / commitments SHA-256
  key store KDF         scrypt (parameters stored in the file header)

Secret keys never appear in any serialized output except the
passphrase-sealed key store file.
"""

from __future__ import annotations

import fcntl
import hashlib
import os
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from .encoding import b64, b64_decode, canonical_json, from_json, pack_fields, unpack_fields
from .errors import AuthFailure, CorruptStore, KeystoreLocked, WrongPassphrase

SUITE_ID = "SC1:ed25519+x25519+chacha20poly1305+sha256"

KEYSTORE_MAGIC = b"SVCK1"

# scrypt cost chosen so opening a store lands in the 50-500 ms band on
# commodity hardware; the parameters travel in the file header so they
# can be raised without breaking old stores.
DEFAULT_KDF_PARAMS = {"kdf": "scrypt", "n": 16384, "r": 8, "p": 1}

NONCE_SIZE = 12
TAG_SIZE = 16
SESSION_KEY_SIZE = 32
SESSION_ID_SIZE = 16


class Alg(str, Enum):
    SIGN = "sign"
    KEM = "kem"


@dataclass(frozen=True)
class KeyPair:
    algorithm: Alg
    public_key: bytes
    secret_key: bytes = field(repr=False)

    @property
    def key_id(self) -> str:
        return sha256(self.public_key)[:8].hex()


def sha256(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


def random_bytes(n: int) -> bytes:
    return os.urandom(n)


# ---------------------------------------------------------------------------
# Signatures
# ---------------------------------------------------------------------------

def generate_keypair(alg: Alg) -> KeyPair:
    if alg == Alg.SIGN:
        priv = Ed25519PrivateKey.generate()
        secret = priv.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        public = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    elif alg == Alg.KEM:
        priv = X25519PrivateKey.generate()
        secret = priv.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        public = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    else:
        raise ValueError(f"unknown key algorithm {alg!r}")
    return KeyPair(algorithm=alg, public_key=public, secret_key=secret)


def keypair_from_secret(alg: Alg, secret_key: bytes) -> KeyPair:
    """Rebuild a keypair from its 32-byte secret; the public key is derived."""
    _check_key_len(secret_key)
    if alg == Alg.SIGN:
        pub = Ed25519PrivateKey.from_private_bytes(secret_key).public_key()
        public = pub.public_bytes(Encoding.Raw, PublicFormat.Raw)
    elif alg == Alg.KEM:
        pub = X25519PrivateKey.from_private_bytes(secret_key).public_key()
        public = pub.public_bytes(Encoding.Raw, PublicFormat.Raw)
    else:
        raise ValueError(f"unknown key algorithm {alg!r}")
    return KeyPair(algorithm=alg, public_key=public, secret_key=secret_key)


def _check_key_len(key: bytes) -> None:
    if not isinstance(key, (bytes, bytearray)) or len(key) != 32:
        raise ValueError("key must be exactly 32 bytes")


def sign(secret_key: bytes | KeyPair, message: bytes) -> bytes:
    if isinstance(secret_key, KeyPair):
        secret_key = secret_key.secret_key
    _check_key_len(secret_key)
    return Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    _check_key_len(public_key)
    if len(signature) != 64:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except InvalidSignature:
        return False


# ---------------------------------------------------------------------------
# Authenticated symmetric encryption
# ---------------------------------------------------------------------------

@dataclass
class SessionKey:
    """Single-purpose 32-byte symmetric key with a 12-byte counter nonce
    sequence starting at 0. Never reused across contexts."""

    key: bytes
    id: bytes
    _counter: int = field(default=0, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def next_nonce(self) -> bytes:
        with self._lock:
            nonce = struct.pack("<Q", self._counter) + b"\x00" * 4
            self._counter += 1
        return nonce


def new_session_key() -> SessionKey:
    return SessionKey(key=os.urandom(SESSION_KEY_SIZE), id=os.urandom(SESSION_ID_SIZE))


def _aead_key(key: SessionKey | bytes) -> bytes:
    raw = key.key if isinstance(key, SessionKey) else key
    _check_key_len(raw)
    return raw


def aead_encrypt(key: SessionKey | bytes, nonce: bytes, plaintext: bytes, aad: bytes = b"") -> bytes:
    if len(nonce) != NONCE_SIZE:
        raise ValueError("nonce must be 12 bytes")
    return ChaCha20Poly1305(_aead_key(key)).encrypt(nonce, plaintext, aad)


def aead_decrypt(key: SessionKey | bytes, nonce: bytes, ciphertext: bytes, aad: bytes = b"") -> bytes:
    if len(nonce) != NONCE_SIZE:
        raise ValueError("nonce must be 12 bytes")
    try:
        return ChaCha20Poly1305(_aead_key(key)).decrypt(nonce, ciphertext, aad)
    except InvalidTag as exc:
        raise AuthFailure("AEAD authentication failed") from exc


# ---------------------------------------------------------------------------
# Asymmetric key wrapping (KEM)
# ---------------------------------------------------------------------------

_WRAP_INFO = b"soverclaim/key-wrap/" + SUITE_ID.encode()

# ephemeral pub (32) + sealed key+id (48) + tag (16)
WRAPPED_KEY_SIZE = 32 + SESSION_KEY_SIZE + SESSION_ID_SIZE + TAG_SIZE


def wrap_key(recipient_public_key: bytes, session: SessionKey) -> bytes:
    _check_key_len(recipient_public_key)
    eph = X25519PrivateKey.generate()
    eph_pub = eph.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient_public_key))
    kek = HKDF(
        algorithm=SHA256(),
        length=32,
        salt=eph_pub + recipient_public_key,
        info=_WRAP_INFO,
    ).derive(shared)
    # kek is fresh per wrap (fresh ephemeral), so a zero nonce is safe.
    sealed = ChaCha20Poly1305(kek).encrypt(b"\x00" * NONCE_SIZE, session.key + session.id, eph_pub)
    return eph_pub + sealed


def unwrap_key(recipient_secret_key: bytes, wrapped: bytes) -> SessionKey:
    _check_key_len(recipient_secret_key)
    if len(wrapped) != WRAPPED_KEY_SIZE:
        raise AuthFailure("wrapped key has wrong length")
    eph_pub, sealed = wrapped[:32], wrapped[32:]
    priv = X25519PrivateKey.from_private_bytes(recipient_secret_key)
    recipient_pub = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    shared = priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    kek = HKDF(
        algorithm=SHA256(),
        length=32,
        salt=eph_pub + recipient_pub,
        info=_WRAP_INFO,
    ).derive(shared)
    try:
        plain = ChaCha20Poly1305(kek).decrypt(b"\x00" * NONCE_SIZE, sealed, eph_pub)
    except InvalidTag as exc:
        raise AuthFailure("key unwrap failed") from exc
    return SessionKey(key=plain[:SESSION_KEY_SIZE], id=plain[SESSION_KEY_SIZE:])


def derive_key(base: bytes, info: bytes) -> bytes:
    """Derive a 32-byte subkey from a base secret for a distinct context."""
    return HKDF(algorithm=SHA256(), length=32, salt=None, info=info).derive(base)


# ---------------------------------------------------------------------------
# Salted attribute commitments (selective disclosure)
# ---------------------------------------------------------------------------

SALT_SIZE = 16


@dataclass(frozen=True)
class AttributeCommitment:
    attr_name: str
    salt: bytes
    digest: bytes


def commitment_digest(name: str, value: str, salt: bytes) -> bytes:
    # Length-prefixed framing keeps (name, value) pairs unambiguous.
    return sha256(pack_fields(salt, name.encode("utf-8"), value.encode("utf-8")))


def commit_attribute(name: str, value: str, salt: bytes | None = None) -> AttributeCommitment:
    if salt is None:
        salt = os.urandom(SALT_SIZE)
    return AttributeCommitment(attr_name=name, salt=salt, digest=commitment_digest(name, value, salt))


def verify_commitment(commitment: AttributeCommitment, name: str, value: str, salt: bytes) -> bool:
    return commitment.digest == commitment_digest(name, value, salt)


# ---------------------------------------------------------------------------
# Passphrase-sealed key stores
# ---------------------------------------------------------------------------

def _kdf(passphrase: str, salt: bytes, params: Mapping[str, int]) -> bytes:
    return Scrypt(
        salt=salt, length=32, n=params["n"], r=params["r"], p=params["p"]
    ).derive(passphrase.encode("utf-8"))


def seal_keystore(
    keys: Mapping[str, KeyPair],
    passphrase: str,
    path: str,
    kdf_params: Mapping[str, int] | None = None,
) -> None:
    """Write a sealed key store. Holding the adjacent .lock file makes
    concurrent sealing of the same path an error rather than a race."""
    params = dict(kdf_params or DEFAULT_KDF_PARAMS)
    salt = os.urandom(16)
    payload = canonical_json(
        {
            name: {"alg": kp.algorithm.value, "secret": b64(kp.secret_key)}
            for name, kp in keys.items()
        }
    )
    key = _kdf(passphrase, salt, params)
    header = pack_fields(SUITE_ID.encode(), salt, canonical_json(params))
    blob = ChaCha20Poly1305(key).encrypt(b"\x00" * NONCE_SIZE, payload, KEYSTORE_MAGIC + header)

    lock_path = path + ".lock"
    lock_fd = os.open(lock_path, os.O_CREAT | os.O_RDWR)
    try:
        try:
            fcntl.flock(lock_fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            raise KeystoreLocked(f"key store {path} is being written by another process") from exc
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(KEYSTORE_MAGIC + header + pack_fields(blob))
        os.replace(tmp, path)
    finally:
        fcntl.flock(lock_fd, fcntl.LOCK_UN)
        os.close(lock_fd)


def open_keystore(path: str, passphrase: str) -> dict[str, KeyPair]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CorruptStore(f"cannot read key store {path}") from exc

    if not data.startswith(KEYSTORE_MAGIC):
        raise CorruptStore("bad magic bytes")
    try:
        (suite, salt, params_json), offset = unpack_fields(data, 3, len(KEYSTORE_MAGIC))
        (blob,), offset = unpack_fields(data, 1, offset)
    except ValueError as exc:
        raise CorruptStore(str(exc)) from exc
    if offset != len(data):
        raise CorruptStore("trailing bytes after sealed blob")
    if suite.decode("utf-8", "replace") != SUITE_ID:
        raise CorruptStore(f"unsupported suite {suite!r}")
    if len(salt) != 16:
        raise CorruptStore("bad KDF salt length")
    try:
        params = from_json(params_json)
        key = _kdf(passphrase, salt, params)
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptStore("bad KDF parameters") from exc

    header = pack_fields(suite, salt, params_json)
    try:
        payload = ChaCha20Poly1305(key).decrypt(b"\x00" * NONCE_SIZE, blob, KEYSTORE_MAGIC + header)
    except InvalidTag as exc:
        raise WrongPassphrase("passphrase did not authenticate") from exc

    keys = {}
    for name, entry in from_json(payload).items():
        keys[name] = keypair_from_secret(Alg(entry["alg"]), b64_decode(entry["secret"]))
    return keys
