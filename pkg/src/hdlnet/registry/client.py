from __future__ import annotations

import base64
import socket

from hdlnet.framing import ProtocolError, request
from hdlnet.handles import HandleName
from hdlnet.registry.model import ERRORS_BY_CODE, HandleValue, RegistryError
from hdlnet.registry.store import Challenge, SignedRequest


class RegistryUnreachable(ConnectionError):
    pass


class RegistryClient:
    """Wire client for the registry. Safe to share between threads (one connection per call)."""

    def __init__(self, endpoint: tuple[str, int], timeout: float = 5.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def _call(self, obj: dict) -> dict:
        try:
            reply = request(self.endpoint, obj, self.timeout)
        except (OSError, socket.timeout, ProtocolError) as exc:
            raise RegistryUnreachable(f"registry {self.endpoint[0]}:{self.endpoint[1]}: {exc}") from exc
        status = reply.get("status")
        if status != "OK":
            raise ERRORS_BY_CODE.get(status, RegistryError)(reply.get("message", status))
        return reply

    def resolve(self, handle: HandleName, type_filter: str | None = None) -> list[HandleValue]:
        obj = {"op": "RESOLVE", "handle": str(handle)}
        if type_filter is not None:
            obj["type"] = type_filter
        return [HandleValue.from_wire(v) for v in self._call(obj)["values"]]

    def resolve_versioned(self, handle: HandleName) -> tuple[list[HandleValue], int]:
        reply = self._call({"op": "RESOLVE", "handle": str(handle)})
        return [HandleValue.from_wire(v) for v in reply["values"]], reply["version"]

    def issue_challenge(self, handle: HandleName) -> Challenge:
        reply = self._call({"op": "CHALLENGE", "handle": str(handle)})
        return Challenge(base64.b64decode(reply["nonce_b64"]), reply["issued_at"], handle)

    def submit(self, req: SignedRequest) -> int:
        reply = self._call(req.to_wire())
        return reply.get("version", 0)

    def signed(self, key, op: str, handle: HandleName, values: list[HandleValue] = ()) -> int:
        """Challenge, sign and submit in one step."""
        challenge = self.issue_challenge(handle)
        return self.submit(SignedRequest.build(key, op, handle, list(values), challenge.nonce))

    def create(self, key, handle: HandleName, values: list[HandleValue]) -> int:
        return self.signed(key, "CREATE", handle, values)

    def update(self, key, handle: HandleName, values: list[HandleValue]) -> int:
        return self.signed(key, "UPDATE", handle, values)

    def delete(self, key, handle: HandleName) -> int:
        return self.signed(key, "DELETE", handle)

    def verify(self, key, handle: HandleName) -> None:
        self.signed(key, "VERIFY", handle)

    def digest(self) -> str:
        return self._call({"op": "DIGEST"})["digest"]
