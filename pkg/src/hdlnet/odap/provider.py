"""Signed service-code provider and the gateway-side fetch/verify path.

The "code" is a responder descriptor: JSON with the service name, its
interface kind and a canned request -> response table. The provider signs
the SHA-256 digest of the blob with its Ed25519 key, whose public half is
published as PUBKEY on the provider's handle.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import socketserver
import threading
from dataclasses import dataclass

from hdlnet.framing import ProtocolError, read_frame, request, write_frame
from hdlnet.handles import HandleName, parse_handle
from hdlnet.registry import signing
from hdlnet.registry.model import INDEX, SERVICE_PROVIDER, HandleValue

log = logging.getLogger(__name__)


class ProviderUnreachable(ConnectionError):
    pass


class SignatureInvalid(Exception):
    pass


@dataclass(frozen=True)
class ServiceProviderDescriptor:
    """What the registry's SERVICE_PROVIDER value says about where to fetch code."""

    provider_endpoint: tuple[str, int]
    provider_handle: HandleName
    code_digest: str
    interface_kind: str = "http"

    def to_value(self) -> HandleValue:
        data = json.dumps(
            {
                "endpoint": f"{self.provider_endpoint[0]}:{self.provider_endpoint[1]}",
                "provider": str(self.provider_handle),
                "digest": self.code_digest,
                "interface": self.interface_kind,
            },
            sort_keys=True,
        ).encode("utf-8")
        return HandleValue(INDEX[SERVICE_PROVIDER], SERVICE_PROVIDER, data)

    @classmethod
    def from_value(cls, value: HandleValue) -> ServiceProviderDescriptor:
        obj = json.loads(value.data)
        host, _, port = obj["endpoint"].rpartition(":")
        return cls((host, int(port)), parse_handle(obj["provider"]), obj["digest"], obj.get("interface", "http"))


@dataclass(frozen=True)
class CodeBundle:
    blob: bytes
    digest: str
    signature: bytes


def make_blob(service: str, responses: dict[str, str], interface_kind: str = "http") -> bytes:
    return json.dumps(
        {"service": service, "interface": interface_kind, "responses": responses}, sort_keys=True
    ).encode("utf-8")


def sign_blob(key, blob: bytes) -> CodeBundle:
    digest = hashlib.sha256(blob).hexdigest()
    return CodeBundle(blob, digest, signing.sign(key, digest.encode("ascii")))


def verify_bundle(bundle: CodeBundle, provider_pub: bytes, expected_digest: str | None = None) -> dict:
    """Check digest and signature; returns the decoded responder descriptor."""
    actual = hashlib.sha256(bundle.blob).hexdigest()
    if actual != bundle.digest:
        raise SignatureInvalid("code blob does not match its digest")
    if expected_digest is not None and actual != expected_digest:
        raise SignatureInvalid("code blob digest differs from the registered digest")
    if not signing.verify(provider_pub, bundle.digest.encode("ascii"), bundle.signature):
        raise SignatureInvalid("provider signature does not verify")
    try:
        descriptor = json.loads(bundle.blob)
        if not isinstance(descriptor.get("responses"), dict):
            raise ValueError("responses table missing")
    except ValueError as exc:
        raise SignatureInvalid(f"signed blob is not a responder descriptor: {exc}") from None
    return descriptor


def fetch_bundle(endpoint: tuple[str, int], service_handle: HandleName, timeout: float = 5.0) -> CodeBundle:
    try:
        reply = request(endpoint, {"op": "FETCH", "handle": str(service_handle)}, timeout)
    except (OSError, ProtocolError) as exc:
        raise ProviderUnreachable(f"provider {endpoint[0]}:{endpoint[1]}: {exc}") from exc
    if reply.get("status") != "OK":
        raise ProviderUnreachable(f"provider refused: {reply.get('status')}")
    try:
        return CodeBundle(base64.b64decode(reply["blob_b64"]), reply["digest"], base64.b64decode(reply["sig_b64"]))
    except (KeyError, ValueError) as exc:
        raise SignatureInvalid(f"malformed provider reply: {exc}") from None


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        provider: ProviderServer = self.server.provider
        try:
            obj = read_frame(self.request)
        except (ProtocolError, OSError):
            return
        if obj is None:
            return
        provider.fetches += 1
        bundle = provider.bundles.get(obj.get("handle"))
        if obj.get("op") != "FETCH" or bundle is None:
            write_frame(self.request, {"status": "NOT_FOUND"})
            return
        blob = bundle.blob
        if provider.tamper:
            blob = bytes([blob[0] ^ 0x01]) + blob[1:]
        write_frame(
            self.request,
            {
                "status": "OK",
                "blob_b64": base64.b64encode(blob).decode("ascii"),
                "digest": bundle.digest,
                "sig_b64": base64.b64encode(bundle.signature).decode("ascii"),
            },
        )


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class ProviderServer:
    """Serves signed code bundles keyed by service handle.

    ``tamper`` flips one bit of every served blob (fault injection).
    """

    def __init__(self, key, host: str = "127.0.0.1", port: int = 0):
        self.key = key
        self.bundles: dict[str, CodeBundle] = {}
        self.tamper = False
        self.fetches = 0
        self._server = _Server((host, port), _Handler)
        self._server.provider = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def publish(self, service_handle: HandleName, blob: bytes) -> CodeBundle:
        bundle = sign_blob(self.key, blob)
        self.bundles[str(service_handle)] = bundle
        return bundle

    def start(self) -> ProviderServer:
        self._thread = threading.Thread(target=self._server.serve_forever, name="provider", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> ProviderServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
