"""TCP front end for :class:`RegistryStore`.

Each connection carries any number of request frames. Registry errors are
answered with their status code and the connection stays open; a frame that
cannot be decoded is answered with ``PROTOCOL_ERROR`` and the connection is
closed.
"""

from __future__ import annotations

import base64
import logging
import socketserver
import threading

from hdlnet.framing import ProtocolError, read_frame, write_frame
from hdlnet.registry.model import BadFrame, RegistryError, wire_handle
from hdlnet.registry.store import RegistryStore, SignedRequest

log = logging.getLogger(__name__)


class BindFailure(OSError):
    pass


def handle_request(store: RegistryStore, obj: dict) -> dict:
    op = obj.get("op")
    if op == "RESOLVE":
        type_filter = obj.get("type")
        if type_filter is not None and not isinstance(type_filter, str):
            raise BadFrame("type filter must be a string")
        handle = wire_handle(obj)
        values = store.resolve(handle, type_filter)
        return {"status": "OK", "values": [v.to_wire() for v in values], "version": store.version(handle)}
    if op == "CHALLENGE":
        challenge = store.issue_challenge(wire_handle(obj))
        return {
            "status": "OK",
            "nonce_b64": base64.b64encode(challenge.nonce).decode("ascii"),
            "issued_at": challenge.issued_at,
        }
    if op in ("CREATE", "UPDATE", "DELETE"):
        return {"status": "OK", "version": store.apply_signed(SignedRequest.from_wire(obj))}
    if op == "VERIFY":
        store.verify_signed(SignedRequest.from_wire(obj))
        return {"status": "OK"}
    if op == "DIGEST":
        return {"status": "OK", "digest": store.digest()}
    raise BadFrame(f"unknown op {op!r}")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        store: RegistryStore = self.server.store
        sock = self.request
        while True:
            try:
                obj = read_frame(sock)
            except ProtocolError as exc:
                self._reply(sock, {"status": "PROTOCOL_ERROR", "message": str(exc)})
                return
            except OSError:
                return
            if obj is None:
                return
            try:
                reply = handle_request(store, obj)
            except BadFrame as exc:
                self._reply(sock, {"status": exc.code, "message": str(exc)})
                return
            except RegistryError as exc:
                reply = {"status": exc.code, "message": str(exc)}
            except Exception:
                log.exception("registry request failed")
                self._reply(sock, {"status": "PROTOCOL_ERROR", "message": "internal error"})
                return
            if not self._reply(sock, reply):
                return

    @staticmethod
    def _reply(sock, obj) -> bool:
        try:
            write_frame(sock, obj)
        except OSError:
            return False
        return True


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class RegistryServer:
    """Runs the registry request loop on a background thread."""

    def __init__(self, store: RegistryStore, host: str = "127.0.0.1", port: int = 0):
        try:
            self._server = _Server((host, port), _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind registry on {host}:{port}: {exc}") from exc
        self._server.store = store
        self.store = store
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> RegistryServer:
        self._thread = threading.Thread(target=self._server.serve_forever, name="registry", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> RegistryServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(store: RegistryStore, endpoint: tuple[str, int]) -> None:
    """Blocking request loop on ``endpoint``."""
    server = RegistryServer(store, *endpoint)
    log.info("registry listening on %s:%d", *server.address)
    try:
        server.serve_forever()
    finally:
        server._server.server_close()
