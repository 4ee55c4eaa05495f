"""Owner identity: keypairs, verifier strings and detached signatures.

Signatures are Ed25519 (RFC 8032), which is deterministic, so the wonder
filter derived from a signature can be recomputed from the key and the
verifier string alone.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import FormatError, InvalidOwnerId, InvalidSeed, SigningFailure

SCHEME_ED25519 = "ed25519"
SEED_BYTES = 32
SIGNATURE_BYTES = 64
MAX_OWNER_ID_BYTES = 255  # single length byte in the canonical encoding

_RAW = serialization.Encoding.Raw


@dataclass(frozen=True)
class OwnerKeypair:
    private_key: bytes = field(repr=False)
    public_key: bytes
    scheme_id: str = SCHEME_ED25519


@dataclass(frozen=True)
class VerifierString:
    owner_id: str
    timestamp: int

    @property
    def canonical_bytes(self) -> bytes:
        raw = self.owner_id.encode("utf-8")
        return bytes([len(raw)]) + raw + struct.pack(">Q", self.timestamp)

    @classmethod
    def from_bytes(cls, data: bytes) -> "VerifierString":
        if not data:
            raise FormatError("empty verifier encoding")
        n = data[0]
        if len(data) != 1 + n + 8:
            raise FormatError("verifier encoding has the wrong length")
        owner = data[1 : 1 + n].decode("utf-8")
        (ts,) = struct.unpack(">Q", data[1 + n :])
        return build_verifier_string(owner, ts)


@dataclass(frozen=True)
class Signature:
    bytes: bytes
    scheme_id: str = SCHEME_ED25519

    def hex(self) -> str:
        return self.bytes.hex()


def generate_keypair(seed: bytes) -> OwnerKeypair:
    """Derive an Ed25519 keypair from exactly 32 bytes of entropy."""
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_BYTES:
        raise InvalidSeed(f"seed must be exactly {SEED_BYTES} bytes")
    sk = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    pk = sk.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    return OwnerKeypair(private_key=bytes(seed), public_key=pk)


def build_verifier_string(owner_id: str, timestamp: int) -> VerifierString:
    if not owner_id:
        raise InvalidOwnerId("owner_id must be non-empty")
    n = len(owner_id.encode("utf-8"))
    if n > MAX_OWNER_ID_BYTES:
        raise InvalidOwnerId(f"owner_id is {n} bytes; limit is {MAX_OWNER_ID_BYTES}")
    timestamp = int(timestamp)
    if not 0 <= timestamp < 2**64:
        raise ValueError("timestamp must fit in an unsigned 64-bit integer")
    return VerifierString(owner_id, timestamp)


def sign_verifier(keypair: OwnerKeypair, v: VerifierString) -> Signature:
    if keypair.scheme_id != SCHEME_ED25519:
        raise SigningFailure(f"unsupported scheme {keypair.scheme_id!r}")
    if len(keypair.private_key) != SEED_BYTES:
        raise SigningFailure("private key has the wrong length")
    sk = Ed25519PrivateKey.from_private_bytes(keypair.private_key)
    derived = sk.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    if derived != keypair.public_key:
        raise SigningFailure("private key does not match the public key")
    return Signature(sk.sign(v.canonical_bytes), keypair.scheme_id)


def verify_signature(public_key: bytes, sig: Signature, v: VerifierString) -> bool:
    """True iff ``sig`` signs ``v.canonical_bytes`` under ``public_key``.

    Malformed keys or signatures yield False rather than raising.
    """
    if sig.scheme_id != SCHEME_ED25519 or len(sig.bytes) != SIGNATURE_BYTES:
        return False
    try:
        pk = Ed25519PublicKey.from_public_bytes(bytes(public_key))
        pk.verify(sig.bytes, v.canonical_bytes)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


# -- key and signature files ------------------------------------------------

def _write_hex_file(path: Path, scheme_id: str, payload: bytes) -> None:
    path.write_text(f"scheme_id: {scheme_id}\n{payload.hex()}\n", encoding="ascii")


def _read_hex_file(path: Path) -> tuple[str, bytes]:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="ascii").splitlines() if ln.strip()]
    if len(lines) != 2 or not lines[0].startswith("scheme_id:"):
        raise FormatError(f"{path}: expected a scheme_id header and one hex line")
    scheme = lines[0].split(":", 1)[1].strip()
    try:
        payload = bytes.fromhex(lines[1])
    except ValueError as exc:
        raise FormatError(f"{path}: key line is not hex") from exc
    return scheme, payload


def write_keypair(keypair: OwnerKeypair, private_path, public_path) -> None:
    _write_hex_file(Path(private_path), keypair.scheme_id, keypair.private_key)
    _write_hex_file(Path(public_path), keypair.scheme_id, keypair.public_key)


def read_private_key(path) -> OwnerKeypair:
    scheme, sk = _read_hex_file(Path(path))
    if scheme != SCHEME_ED25519:
        raise FormatError(f"{path}: unsupported scheme {scheme!r}")
    return generate_keypair(sk)


def read_public_key(path) -> bytes:
    scheme, pk = _read_hex_file(Path(path))
    if scheme != SCHEME_ED25519:
        raise FormatError(f"{path}: unsupported scheme {scheme!r}")
    return pk


def write_signature(sig: Signature, path) -> None:
    Path(path).write_text(sig.hex() + "\n", encoding="ascii")


def read_signature(path) -> Signature:
    text = Path(path).read_text(encoding="ascii").strip()
    try:
        return Signature(bytes.fromhex(text))
    except ValueError as exc:
        raise FormatError(f"{path}: signature is not hex") from exc
