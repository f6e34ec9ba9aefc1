"""Journaled handle store with challenge/response authorized mutation."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import secrets
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from hdlnet.clock import Clock
from hdlnet.framing import ProtocolError, encode_frame, iter_frames
from hdlnet.handles import HandleName
from hdlnet.registry import signing
from hdlnet.registry.model import (
    PUBKEY,
    AlreadyExists,
    AuthFailed,
    BadFrame,
    EmptyResult,
    HandleNotFound,
    HandleRecord,
    HandleValue,
    InvariantViolation,
    ReplayRejected,
    StaleChallenge,
    check_record_values,
    wire_handle,
)

log = logging.getLogger(__name__)

CHALLENGE_TTL_S = 30.0
NONCE_BYTES = 32


@dataclass(frozen=True)
class Challenge:
    nonce: bytes
    issued_at: float
    target_handle: HandleName


@dataclass(frozen=True)
class SignedRequest:
    op_kind: str
    handle: HandleName
    values: list[HandleValue] = field(default_factory=list)
    nonce: bytes = b""
    signature: bytes = b""

    def signing_string(self) -> bytes:
        return signing.signing_string(self.op_kind, self.handle, self.nonce, self.values)

    def to_wire(self) -> dict:
        return {
            "op": self.op_kind,
            "handle": str(self.handle),
            "values": [v.to_wire() for v in self.values],
            "nonce_b64": base64.b64encode(self.nonce).decode("ascii"),
            "sig_b64": base64.b64encode(self.signature).decode("ascii"),
        }

    @classmethod
    def from_wire(cls, obj: dict) -> SignedRequest:
        op = obj.get("op")
        if op not in signing.OPS:
            raise BadFrame(f"unknown mutation op {op!r}")
        values_raw = obj.get("values", [])
        if not isinstance(values_raw, list):
            raise BadFrame("values must be a list")
        try:
            nonce = base64.b64decode(obj["nonce_b64"], validate=True)
            sig = base64.b64decode(obj["sig_b64"], validate=True)
        except (KeyError, TypeError, ValueError) as exc:
            raise BadFrame(f"bad nonce/signature field: {exc}") from None
        values = []
        for v in values_raw:
            if not isinstance(v, dict):
                raise BadFrame("value entries must be objects")
            try:
                values.append(HandleValue.from_wire(v))
            except InvariantViolation as exc:
                raise BadFrame(str(exc)) from None
        return cls(op, wire_handle(obj), values, nonce, sig)

    @classmethod
    def build(cls, key, op_kind: str, handle: HandleName, values: list[HandleValue], nonce: bytes) -> SignedRequest:
        unsigned = cls(op_kind, handle, list(values), nonce)
        return cls(op_kind, handle, list(values), nonce, signing.sign(key, unsigned.signing_string()))


class RegistryStore:
    """In-memory handle records backed by an append-only journal.

    Mutations on one handle are serialized by a per-handle lock; reads and
    mutations of unrelated handles proceed in parallel.
    """

    def __init__(
        self,
        prefix_admin_keys: dict[str, bytes] | None = None,
        journal_path: str | Path | None = None,
        clock: Clock = time.monotonic,
        challenge_ttl: float = CHALLENGE_TTL_S,
        fsync: bool = True,
    ):
        self.prefix_admin_keys = dict(prefix_admin_keys or {})
        self.records: dict[HandleName, HandleRecord] = {}
        self.clock = clock
        self.challenge_ttl = challenge_ttl
        self.fsync = fsync
        self.journal_path = Path(journal_path) if journal_path else None
        self._last_version: dict[HandleName, int] = {}
        self._outstanding: dict[bytes, Challenge] = {}
        self._consumed: set[bytes] = set()
        self._meta = threading.Lock()
        self._handle_locks: defaultdict[HandleName, threading.Lock] = defaultdict(threading.Lock)
        self._journal_lock = threading.Lock()
        self._journal = None
        if self.journal_path is not None:
            self.replay(self.journal_path)
            self._journal = open(self.journal_path, "ab")

    def close(self) -> None:
        if self._journal is not None:
            self._journal.close()
            self._journal = None

    def _lock_for(self, handle: HandleName) -> threading.Lock:
        with self._meta:
            return self._handle_locks[handle]

    # -- reads ---------------------------------------------------------

    def resolve(self, handle: HandleName, type_filter: str | None = None) -> list[HandleValue]:
        with self._lock_for(handle):
            record = self.records.get(handle)
            if record is None:
                raise HandleNotFound(str(handle))
            values = list(record.values)
            version = record.version
        if type_filter is not None:
            values = [v for v in values if v.value_type == type_filter]
            if not values:
                raise EmptyResult(f"{handle} has no {type_filter} value")
        log.debug("resolve %s filter=%s version=%d", handle, type_filter, version)
        return sorted(values, key=lambda v: v.index)

    def version(self, handle: HandleName) -> int:
        with self._lock_for(handle):
            record = self.records.get(handle)
            if record is None:
                raise HandleNotFound(str(handle))
            return record.version

    def canonical_bytes(self) -> bytes:
        with self._meta:
            snapshot = sorted(self.records.values(), key=lambda r: str(r.name))
            dump = [r.to_canonical() for r in snapshot]
        return json.dumps(dump, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    # -- challenges ----------------------------------------------------

    def issue_challenge(self, handle: HandleName) -> Challenge:
        challenge = Challenge(secrets.token_bytes(NONCE_BYTES), self.clock(), handle)
        with self._meta:
            self._outstanding[challenge.nonce] = challenge
        return challenge

    def _check_challenge(self, req: SignedRequest) -> Challenge:
        with self._meta:
            if req.nonce in self._consumed:
                raise ReplayRejected("nonce already used")
            challenge = self._outstanding.get(req.nonce)
            if challenge is None or challenge.target_handle != req.handle:
                raise AuthFailed("no outstanding challenge for this handle and nonce")
            if self.clock() - challenge.issued_at > self.challenge_ttl:
                del self._outstanding[req.nonce]
                raise StaleChallenge(f"challenge older than {self.challenge_ttl:g}s")
            return challenge

    def _consume(self, nonce: bytes) -> None:
        with self._meta:
            self._outstanding.pop(nonce, None)
            self._consumed.add(nonce)

    def _authorized_keys(self, req: SignedRequest, record: HandleRecord | None) -> list[bytes]:
        keys = []
        if record is not None and req.op_kind != "CREATE":
            keys.extend(v.data for v in record.by_type(PUBKEY))
        admin = self.prefix_admin_keys.get(req.handle.prefix)
        if admin is not None:
            keys.append(admin)
        return keys

    # -- mutation ------------------------------------------------------

    def verify_signed(self, req: SignedRequest) -> None:
        """Authenticate ``req`` against the handle's keys without mutating anything."""
        with self._lock_for(req.handle):
            self._check_challenge(req)
            record = self.records.get(req.handle)
            if record is None:
                raise HandleNotFound(str(req.handle))
            self._verify(req, record)
            self._consume(req.nonce)

    def _verify(self, req: SignedRequest, record: HandleRecord | None) -> None:
        message = req.signing_string()
        if not any(signing.verify(k, message, req.signature) for k in self._authorized_keys(req, record)):
            raise AuthFailed(f"signature does not verify for {req.op_kind} {req.handle}")

    def apply_signed(self, req: SignedRequest) -> int:
        """Authenticate and commit a mutation; returns the new record version (0 after DELETE)."""
        if req.op_kind not in ("CREATE", "UPDATE", "DELETE"):
            raise BadFrame(f"{req.op_kind} is not a mutation")
        with self._lock_for(req.handle):
            self._check_challenge(req)
            record = self.records.get(req.handle)
            self._verify(req, record)
            new = self._mutated(req, record)
            self._append_journal(req)
            self._consume(req.nonce)
            return self._commit(req.handle, new)

    def _mutated(self, req: SignedRequest, record: HandleRecord | None) -> HandleRecord | None:
        if req.op_kind == "CREATE":
            if record is not None:
                raise AlreadyExists(str(req.handle))
            values = [v for v in req.values if v.data]
            check_record_values(values)
            version = self._last_version.get(req.handle, 0) + 1
            return HandleRecord(req.handle, sorted(values, key=lambda v: v.index), version)
        if record is None:
            raise HandleNotFound(str(req.handle))
        if req.op_kind == "DELETE":
            return None
        supplied = {v.index for v in req.values}
        if len(supplied) != len(req.values):
            raise InvariantViolation("duplicate value index in update")
        values = [v for v in record.values if v.index not in supplied]
        # Empty data clears the index.
        values.extend(v for v in req.values if v.data)
        check_record_values(values)
        return HandleRecord(req.handle, sorted(values, key=lambda v: v.index), record.version + 1)

    def _commit(self, handle: HandleName, new: HandleRecord | None) -> int:
        with self._meta:
            if new is None:
                self._last_version[handle] = self.records.pop(handle).version
                return 0
            self.records[handle] = new
            self._last_version[handle] = new.version
            return new.version

    def _append_journal(self, req: SignedRequest) -> None:
        if self._journal is None:
            return
        with self._journal_lock:
            self._journal.write(encode_frame(req.to_wire()))
            self._journal.flush()
            if self.fsync:
                os.fsync(self._journal.fileno())

    def replay(self, path: str | Path) -> int:
        """Rebuild state from a journal; a torn trailing frame (never acknowledged) is dropped."""
        path = Path(path)
        if not path.exists():
            return 0
        data = path.read_bytes()
        applied = 0
        good_len = 0
        try:
            for end, frame in iter_frames(data):
                req = SignedRequest.from_wire(frame)
                with self._lock_for(req.handle):
                    new = self._mutated(req, self.records.get(req.handle))
                    self._commit(req.handle, new)
                self._consumed.add(req.nonce)
                applied += 1
                good_len = end
        except ProtocolError:
            log.warning("dropping torn journal tail at offset %d of %s", good_len, path)
            with open(path, "r+b") as fh:
                fh.truncate(good_len)
        return applied
