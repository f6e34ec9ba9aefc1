"""Canonical signing string and Ed25519 helpers."""

from __future__ import annotations

import base64

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, NoEncryption, PrivateFormat, PublicFormat

from hdlnet.handles import HandleName
from hdlnet.registry.model import HandleValue

OPS = ("CREATE", "UPDATE", "DELETE", "VERIFY")


def signing_string(op: str, handle: HandleName, nonce: bytes, values: list[HandleValue]) -> bytes:
    """op 0x00 handle 0x00 nonce 0x00 values, values joined by 0x1E, fields by 0x1F."""
    parts = [
        b"%d\x1f%s\x1f%s" % (v.index, v.value_type.encode("ascii"), base64.b64encode(v.data))
        for v in sorted(values, key=lambda v: v.index)
    ]
    return b"\x00".join([op.encode("ascii"), str(handle).encode("ascii"), nonce, b"\x1e".join(parts)])


def generate_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def key_from_seed(seed: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(seed)


def private_bytes(key: Ed25519PrivateKey) -> bytes:
    return key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())


def public_bytes(key: Ed25519PrivateKey | Ed25519PublicKey) -> bytes:
    if isinstance(key, Ed25519PrivateKey):
        key = key.public_key()
    return key.public_bytes(Encoding.Raw, PublicFormat.Raw)


def sign(key: Ed25519PrivateKey, message: bytes) -> bytes:
    return key.sign(message)


def verify(public_raw: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_raw).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True
