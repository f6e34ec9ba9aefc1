"""ODAP control channel: framed DISCOVER / LIST_SERVICES / IMPLEMENT / INVOKE requests."""

from __future__ import annotations

import logging
import socketserver
import threading

from hdlnet.framing import ProtocolError, read_frame, request, write_frame
from hdlnet.handles import HandleError, parse_handle
from hdlnet.odap.gateway import NoProvider, OdapGateway, UnknownService
from hdlnet.odap.provider import ProviderUnreachable, SignatureInvalid
from hdlnet.registry.client import RegistryUnreachable
from hdlnet.registry.model import RegistryError
from hdlnet.vlink import DeviceGone, LinkDown

log = logging.getLogger(__name__)

OK = "OK"
BAD_REQUEST = "BAD_REQUEST"

# Checked in order; first match wins.
_ERROR_CODES = [
    (DeviceGone, "DEVICE_GONE"),
    (LinkDown, "LINK_DOWN"),
    (NoProvider, "NO_PROVIDER"),
    (ProviderUnreachable, "PROVIDER_UNREACHABLE"),
    (SignatureInvalid, "SIGNATURE_INVALID"),
    (RegistryUnreachable, "REGISTRY_UNREACHABLE"),
    (UnknownService, "UNKNOWN_SERVICE"),
    (RegistryError, "REGISTRY_ERROR"),
]


class BadRequest(ValueError):
    pass


class OdapError(Exception):
    def __init__(self, status: str, message: str = ""):
        super().__init__(f"{status}: {message}" if message else status)
        self.status = status


def _handle_arg(obj: dict):
    try:
        return parse_handle(obj["handle"])
    except (KeyError, TypeError, HandleError) as exc:
        raise BadRequest(f"missing or malformed handle: {exc}") from None


def dispatch(gateway: OdapGateway, obj: dict) -> dict:
    op = obj.get("op")
    if op == "DISCOVER":
        handles = gateway.discover_devices()
        with gateway._lock:
            unregistered = sorted(m.hex() for m in gateway.unregistered)
        return {"status": OK, "handles": [str(h) for h in handles], "unregistered": unregistered}
    if op == "LIST_SERVICES":
        handle = _handle_arg(obj)
        if gateway.lease_for(handle) is None:
            raise BadRequest(f"{handle} is not a device known to this gateway")
        return {"status": OK, "handles": [str(h) for h in gateway.list_services(handle)]}
    if op == "IMPLEMENT":
        return {"status": OK, "locator": gateway.implement_service(_handle_arg(obj))}
    if op == "INVOKE":
        locator, req = obj.get("locator"), obj.get("request")
        if not isinstance(locator, str) or not isinstance(req, str):
            raise BadRequest("INVOKE needs string locator and request")
        return {"status": OK, "response": gateway.invoke(locator, req)}
    raise BadRequest(f"unknown op {op!r}")


def handle_control(gateway: OdapGateway, obj: dict) -> dict:
    try:
        return dispatch(gateway, obj)
    except BadRequest as exc:
        return {"status": BAD_REQUEST, "message": str(exc)}
    except Exception as exc:
        for cls, code in _ERROR_CODES:
            if isinstance(exc, cls):
                return {"status": code, "message": str(exc)}
        log.exception("control request failed")
        return {"status": "INTERNAL_ERROR", "message": type(exc).__name__}


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        while True:
            try:
                obj = read_frame(self.request)
            except ProtocolError as exc:
                write_frame(self.request, {"status": BAD_REQUEST, "message": str(exc)})
                return
            except OSError:
                return
            if obj is None:
                return
            try:
                write_frame(self.request, handle_control(self.server.gateway, obj))
            except OSError:
                return


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class ControlServer:
    def __init__(self, gateway: OdapGateway):
        self.gateway = gateway
        self._server = _Server(gateway.config.control, _Handler)
        self._server.gateway = gateway
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> ControlServer:
        self._thread = threading.Thread(target=self._server.serve_forever, name="odap-control", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> ControlServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_control(gateway: OdapGateway) -> None:
    server = ControlServer(gateway)
    log.info("ODAP control on %s:%d", *server.address)
    server.serve_forever()


class OdapClient:
    def __init__(self, endpoint: tuple[str, int], timeout: float = 5.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def call(self, obj: dict) -> dict:
        reply = request(self.endpoint, obj, self.timeout)
        if reply.get("status") != OK:
            raise OdapError(reply.get("status", "?"), reply.get("message", ""))
        return reply

    def discover(self) -> list[str]:
        return self.call({"op": "DISCOVER"})["handles"]

    def list_services(self, handle) -> list[str]:
        return self.call({"op": "LIST_SERVICES", "handle": str(handle)})["handles"]

    def implement(self, handle) -> str:
        return self.call({"op": "IMPLEMENT", "handle": str(handle)})["locator"]

    def invoke(self, locator: str, req: str) -> str:
        return self.call({"op": "INVOKE", "locator": locator, "request": req})["response"]
