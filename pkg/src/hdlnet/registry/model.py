"""Handle records, typed values and registry errors."""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field

from hdlnet.handles import HandleName, parse_handle

INET_HOST = "INET_HOST"
PUBKEY = "PUBKEY"
SERVICE_REF = "SERVICE_REF"
SERVICE_PROVIDER = "SERVICE_PROVIDER"
URL_IFACE = "URL_IFACE"

# Conventional value indices.
INDEX = {INET_HOST: 1, PUBKEY: 100, SERVICE_REF: 200, SERVICE_PROVIDER: 201, URL_IFACE: 300}

REGISTERED_TYPES: set[str] = set(INDEX)
_TYPE_RE = re.compile(r"[A-Z][A-Z0-9_]*")


def register_value_type(tag: str) -> None:
    if not _TYPE_RE.fullmatch(tag):
        raise ValueError(f"value type tag must match {_TYPE_RE.pattern}: {tag!r}")
    REGISTERED_TYPES.add(tag)


class RegistryError(Exception):
    code = "ERROR"


class HandleNotFound(RegistryError):
    code = "HANDLE_NOT_FOUND"


class EmptyResult(RegistryError):
    code = "EMPTY_RESULT"


class AuthFailed(RegistryError):
    code = "AUTH_FAILED"


class ReplayRejected(RegistryError):
    code = "REPLAY_REJECTED"


class StaleChallenge(RegistryError):
    code = "STALE_CHALLENGE"


class AlreadyExists(RegistryError):
    code = "ALREADY_EXISTS"


class InvariantViolation(RegistryError):
    code = "INVARIANT_VIOLATION"


class BadFrame(RegistryError):
    code = "PROTOCOL_ERROR"


ERRORS_BY_CODE = {
    cls.code: cls
    for cls in (
        HandleNotFound,
        EmptyResult,
        AuthFailed,
        ReplayRejected,
        StaleChallenge,
        AlreadyExists,
        InvariantViolation,
        BadFrame,
    )
}


@dataclass(frozen=True)
class HandleValue:
    index: int
    value_type: str
    data: bytes
    ttl_s: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.index, int) or isinstance(self.index, bool) or self.index <= 0:
            raise InvariantViolation(f"value index must be a positive integer, got {self.index!r}")
        if self.value_type not in REGISTERED_TYPES:
            raise InvariantViolation(f"unregistered value type {self.value_type!r}")
        if not isinstance(self.data, bytes):
            raise InvariantViolation("value data must be bytes")
        if not isinstance(self.ttl_s, int) or self.ttl_s < 0:
            raise InvariantViolation(f"ttl must be a nonnegative integer, got {self.ttl_s!r}")

    @property
    def text(self) -> str:
        return self.data.decode("utf-8")

    def to_wire(self) -> dict:
        return {
            "index": self.index,
            "type": self.value_type,
            "data_b64": base64.b64encode(self.data).decode("ascii"),
            "ttl": self.ttl_s,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> HandleValue:
        try:
            data = base64.b64decode(obj["data_b64"], validate=True)
            return cls(obj["index"], obj["type"], data, obj.get("ttl", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadFrame(f"bad value object: {exc}") from None


def inet_host(address: str, ttl_s: int = 0) -> HandleValue:
    return HandleValue(INDEX[INET_HOST], INET_HOST, address.encode("ascii"), ttl_s)


def pubkey(raw: bytes) -> HandleValue:
    return HandleValue(INDEX[PUBKEY], PUBKEY, raw)


@dataclass
class HandleRecord:
    name: HandleName
    values: list[HandleValue] = field(default_factory=list)
    version: int = 0

    def by_type(self, value_type: str) -> list[HandleValue]:
        return [v for v in self.values if v.value_type == value_type]

    def to_canonical(self) -> dict:
        return {
            "name": str(self.name),
            "version": self.version,
            "values": [v.to_wire() for v in sorted(self.values, key=lambda v: v.index)],
        }


def check_record_values(values: list[HandleValue]) -> None:
    """Enforce per-record invariants on a complete value list."""
    indices = [v.index for v in values]
    if len(indices) != len(set(indices)):
        raise InvariantViolation("duplicate value index in record")
    if sum(v.value_type == INET_HOST for v in values) > 1:
        raise InvariantViolation("record may hold at most one INET_HOST value")
    if sum(v.value_type == PUBKEY for v in values) != 1:
        raise InvariantViolation("record must hold exactly one PUBKEY value")


def wire_handle(obj: dict, key: str = "handle") -> HandleName:
    try:
        return parse_handle(obj[key])
    except (KeyError, ValueError) as exc:
        raise BadFrame(f"bad handle field: {exc}") from None
