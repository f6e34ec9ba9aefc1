"""Passphrase-sealed credential cache.

File layout: one version byte (0x01), a 16-byte random salt, then a Fernet
token holding the JSON credentials. The Fernet key is derived from the
passphrase with scrypt over the salt.
"""

from __future__ import annotations

import base64
import json
import os
import secrets
from dataclasses import dataclass
from pathlib import Path

from cryptography.fernet import Fernet, InvalidToken
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from hdlnet.handles import HandleName, parse_handle

FORMAT_VERSION = 1
SALT_BYTES = 16
_SCRYPT_N = 2**14


class CacheCorrupt(Exception):
    """Cache missing, tampered, from an unknown format, or sealed under another passphrase."""


@dataclass(frozen=True)
class Credentials:
    handle: HandleName
    private_key: bytes

    @property
    def prefix(self) -> str:
        return self.handle.prefix


def _fernet(passphrase: str, salt: bytes) -> Fernet:
    kdf = Scrypt(salt=salt, length=32, n=_SCRYPT_N, r=8, p=1)
    return Fernet(base64.urlsafe_b64encode(kdf.derive(passphrase.encode("utf-8"))))


def seal(creds: Credentials, passphrase: str) -> bytes:
    salt = secrets.token_bytes(SALT_BYTES)
    plaintext = json.dumps(
        {
            "handle": str(creds.handle),
            "prefix": creds.prefix,
            "private_key_b64": base64.b64encode(creds.private_key).decode("ascii"),
        }
    ).encode("utf-8")
    return bytes([FORMAT_VERSION]) + salt + _fernet(passphrase, salt).encrypt(plaintext)


def unseal(blob: bytes, passphrase: str) -> Credentials:
    if len(blob) <= 1 + SALT_BYTES or blob[0] != FORMAT_VERSION:
        raise CacheCorrupt("unrecognized cache header")
    salt, token = blob[1 : 1 + SALT_BYTES], blob[1 + SALT_BYTES :]
    try:
        obj = json.loads(_fernet(passphrase, salt).decrypt(token))
        return Credentials(parse_handle(obj["handle"]), base64.b64decode(obj["private_key_b64"]))
    except (InvalidToken, ValueError, KeyError, TypeError) as exc:
        raise CacheCorrupt(f"cannot unseal cache: {type(exc).__name__}") from None


def write_cache(path: str | Path, creds: Credentials, passphrase: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(seal(creds, passphrase))
    os.replace(tmp, path)


def read_cache(path: str | Path, passphrase: str) -> Credentials:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CacheCorrupt(f"cannot read cache: {exc}") from None
    return unseal(blob, passphrase)
