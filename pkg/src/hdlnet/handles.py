"""Handle names: parsing, DNS transliteration and deterministic derivation.

A handle is ``prefix/suffix``. Both parts are restricted to the
hostname-safe alphabet ``[A-Za-z0-9._-]`` so that any handle can be
embedded in a DNS name by swapping the separator for ``~``.
"""

from __future__ import annotations

import re
import uuid as _uuid
from dataclasses import dataclass

SEPARATOR = "/"
DNS_SEPARATOR = "~"
MAX_LABEL = 63

_PART_RE = re.compile(r"[A-Za-z0-9._-]+")


class HandleError(ValueError):
    """Base class for handle namespace errors."""


class MalformedHandle(HandleError):
    pass


class LabelTooLong(HandleError):
    pass


class InvalidLabel(HandleError):
    """A DNS-embedded handle would contain an empty label."""


def _check_part(part: str, what: str, text: str) -> None:
    if not part:
        raise MalformedHandle(f"empty {what} in {text!r}")
    if not _PART_RE.fullmatch(part):
        raise MalformedHandle(f"forbidden character in {what} of {text!r}")


@dataclass(frozen=True, order=True)
class HandleName:
    prefix: str
    suffix: str

    def __post_init__(self) -> None:
        text = f"{self.prefix}{SEPARATOR}{self.suffix}"
        _check_part(self.prefix, "prefix", text)
        _check_part(self.suffix, "suffix", text)

    def __str__(self) -> str:
        return f"{self.prefix}{SEPARATOR}{self.suffix}"

    def lower(self) -> HandleName:
        return HandleName(self.prefix.lower(), self.suffix.lower())


def parse_handle(text: str) -> HandleName:
    """Split ``text`` at the first ``/`` into a validated :class:`HandleName`."""
    if not isinstance(text, str):
        raise MalformedHandle(f"handle must be a string, got {type(text).__name__}")
    prefix, sep, suffix = text.partition(SEPARATOR)
    if not sep:
        raise MalformedHandle(f"no '/' separator in {text!r}")
    return HandleName(prefix, suffix)


def format_handle(h: HandleName) -> str:
    return str(h)


def dns_encode(h: HandleName) -> str:
    """Return the DNS-embeddable form of ``h`` (``/`` replaced by ``~``)."""
    encoded = str(h).replace(SEPARATOR, DNS_SEPARATOR)
    for label in encoded.split("."):
        if not label:
            raise InvalidLabel(f"empty DNS label in {encoded!r}")
        if len(label.encode("ascii")) > MAX_LABEL:
            raise LabelTooLong(f"label {label[:16]!r}... exceeds {MAX_LABEL} octets")
    return encoded


def dns_decode(labels: str) -> HandleName:
    """Inverse of :func:`dns_encode`. ``labels`` excludes the proxy domain."""
    if DNS_SEPARATOR not in labels:
        raise MalformedHandle(f"{labels!r} carries no '~' and is not a handle")
    return parse_handle(labels.replace(DNS_SEPARATOR, SEPARATOR, 1))


def _mac_bytes(mac: bytes | str) -> bytes:
    if isinstance(mac, str):
        digits = re.sub(r"[:\-.]", "", mac)
        if not re.fullmatch(r"[0-9A-Fa-f]{12}", digits):
            raise ValueError(f"not a 48-bit MAC address: {mac!r}")
        return bytes.fromhex(digits)
    if len(mac) != 6:
        raise ValueError(f"MAC must be 6 octets, got {len(mac)}")
    return bytes(mac)


def parse_mac(mac: bytes | str) -> bytes:
    return _mac_bytes(mac)


def format_mac(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def derive_device_handle(prefix: str, mac: bytes | str) -> HandleName:
    return HandleName(prefix, "dev-" + _mac_bytes(mac).hex())


def _uuid_bytes(value: bytes | int | str | _uuid.UUID) -> bytes:
    if isinstance(value, _uuid.UUID):
        return value.bytes
    if isinstance(value, int):
        if not 0 <= value < 1 << 128:
            raise ValueError("uuid integer out of 128-bit range")
        return value.to_bytes(16, "big")
    if isinstance(value, str):
        return _uuid.UUID(value).bytes
    if len(value) != 16:
        raise ValueError(f"uuid must be 16 octets, got {len(value)}")
    return bytes(value)


def parse_uuid(value: bytes | int | str | _uuid.UUID) -> bytes:
    return _uuid_bytes(value)


def derive_service_handle(prefix: str, service_uuid: bytes | int | str | _uuid.UUID) -> HandleName:
    return HandleName(prefix, "svc-" + _uuid_bytes(service_uuid).hex())
