"""Handle-DNS proxy: zone entries first, then live handle resolution.

There is deliberately no answer cache; every query that reaches the handle
path goes to the registry.
"""

from __future__ import annotations

import ipaddress
import logging
import socket
import socketserver
import threading
from dataclasses import dataclass, field, replace

from hdlnet.handles import HandleError, HandleName, dns_decode
from hdlnet.hdp import dnswire as dw
from hdlnet.hdp.zone import Static, ZoneEntry
from hdlnet.registry.client import RegistryClient, RegistryUnreachable
from hdlnet.registry.model import INET_HOST, EmptyResult, HandleNotFound, RegistryError

log = logging.getLogger(__name__)

NODATA = "NODATA"


@dataclass
class HdpConfig:
    proxy_domain: str = "proxy.domain."
    listen: tuple[str, int] = ("127.0.0.1", 0)
    registry: tuple[str, int] | None = None
    answer_ttl_s: int = 0

    def __post_init__(self) -> None:
        if not self.proxy_domain.endswith("."):
            raise ValueError(f"proxy_domain must be absolute (trailing '.'), got {self.proxy_domain!r}")
        if self.answer_ttl_s < 0:
            raise ValueError("answer_ttl_s must be nonnegative")


@dataclass(frozen=True)
class Answer:
    rcode: int
    addresses: tuple[str, ...] = ()
    source: str = ""  # "zone", "alias" or "handle"
    handle: HandleName | None = None

    @property
    def status(self) -> str:
        if self.rcode == dw.NOERROR and not self.addresses:
            return NODATA
        return dw.RCODE_NAMES.get(self.rcode, str(self.rcode))


def _family_of(qtype: int) -> int:
    return 6 if qtype == dw.TYPE_AAAA else 4


class HandleDnsProxy:
    def __init__(self, config: HdpConfig, zone: dict[str, ZoneEntry], client: RegistryClient | None = None):
        self.config = config
        self.zone = dict(zone)
        self.client = client or RegistryClient(config.registry)
        self._domain = config.proxy_domain.lower()

    def _remainder(self, qname: str) -> str | None:
        name = qname.lower()
        if not name.endswith("."):
            name += "."
        if name == self._domain:
            return ""
        if name.endswith("." + self._domain):
            return name[: -len(self._domain) - 1]
        return None

    def answer_name(self, qname: str, qtype: int) -> Answer:
        remainder = self._remainder(qname)
        if remainder is None:
            return Answer(dw.REFUSED)
        if qtype not in (dw.TYPE_A, dw.TYPE_AAAA):
            return Answer(dw.NOTIMP)
        if remainder == "":
            return Answer(dw.NOERROR, source="zone")
        entry = self.zone.get(remainder)
        if entry is not None and isinstance(entry.target, Static):
            addr = entry.target.address
            if addr.version != _family_of(qtype):
                return Answer(dw.NOERROR, source="zone")
            return Answer(dw.NOERROR, (str(addr),), "zone")
        if entry is not None:
            handle, source = entry.target.handle, "alias"
        else:
            try:
                handle, source = dns_decode(remainder), "handle"
            except HandleError:
                return Answer(dw.NXDOMAIN)
        return self._resolve_handle(handle, qtype, source)

    def _resolve_handle(self, handle: HandleName, qtype: int, source: str) -> Answer:
        try:
            values = self.client.resolve(handle, INET_HOST)
        except HandleNotFound:
            return Answer(dw.NXDOMAIN, handle=handle, source=source)
        except EmptyResult:
            return Answer(dw.NOERROR, handle=handle, source=source)
        except (RegistryUnreachable, RegistryError) as exc:
            log.warning("registry failure resolving %s: %s", handle, exc)
            return Answer(dw.SERVFAIL, handle=handle, source=source)
        try:
            addr = ipaddress.ip_address(values[0].text)
        except ValueError:
            log.warning("unparsable INET_HOST %r on %s", values[0].data, handle)
            return Answer(dw.SERVFAIL, handle=handle, source=source)
        if addr.version != _family_of(qtype):
            return Answer(dw.NOERROR, handle=handle, source=source)
        return Answer(dw.NOERROR, (str(addr),), source, handle)

    def handle_query(self, data: bytes) -> bytes | None:
        """Turn one query datagram into a response datagram (None means drop)."""
        try:
            ident, flags = dw.decode_header(data)
        except dw.FormatError:
            return None
        if flags >> 15 & 1:
            return None  # a response, not a query
        try:
            query = dw.decode(data)
        except dw.FormatError as exc:
            log.debug("malformed query %d: %s", ident, exc)
            return dw.encode(dw.DnsMessage(id=ident, qr=True, opcode=flags >> 11 & 0xF, rcode=dw.FORMERR))

        def reply(rcode, questions=query.questions, answers=(), aa=False):
            return dw.DnsMessage(
                id=query.id, qr=True, opcode=query.opcode, aa=aa, rd=query.rd, rcode=rcode,
                questions=tuple(questions), answers=tuple(answers),
            )

        if query.opcode != 0:
            return dw.encode(reply(dw.NOTIMP))
        if len(query.questions) != 1 or query.answers:
            return dw.encode(reply(dw.FORMERR))
        q = query.questions[0]
        if q.qclass != dw.CLASS_IN or q.qtype not in (dw.TYPE_A, dw.TYPE_AAAA):
            return dw.encode(reply(dw.NOTIMP))
        answer = self.answer_name(q.name, q.qtype)
        records = [
            dw.ResourceRecord(q.name, q.qtype, dw.CLASS_IN, self.config.answer_ttl_s, ipaddress.ip_address(a).packed)
            for a in answer.addresses
        ]
        response = reply(answer.rcode, answers=records, aa=answer.rcode != dw.REFUSED)
        wire = dw.encode(response)
        if len(wire) > dw.MAX_UDP:
            wire = dw.encode(replace(response, tc=True, answers=()))
        return wire


class _UdpHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        data, sock = self.request
        try:
            wire = self.server.proxy.handle_query(data)
        except Exception:
            log.exception("query handling failed")
            return
        if wire is not None:
            sock.sendto(wire, self.client_address)


class _UdpServer(socketserver.ThreadingUDPServer):
    daemon_threads = True
    allow_reuse_address = True


class HdpServer:
    """Runs the proxy's UDP responder on a background thread."""

    def __init__(self, proxy: HandleDnsProxy):
        self.proxy = proxy
        self._server = _UdpServer(proxy.config.listen, _UdpHandler)
        self._server.proxy = proxy
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> HdpServer:
        self._thread = threading.Thread(target=self._server.serve_forever, name="hdp", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> HdpServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_udp(proxy: HandleDnsProxy) -> None:
    server = HdpServer(proxy)
    log.info("HDP answering for %s on %s:%d", proxy.config.proxy_domain, *server.address)
    server.serve_forever()


@dataclass
class DnsResult:
    message: dw.DnsMessage
    addresses: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        if self.message.rcode == dw.NOERROR and not self.addresses:
            return NODATA
        return dw.RCODE_NAMES.get(self.message.rcode, str(self.message.rcode))


def dns_query(server: tuple[str, int], name: str, qtype: int, ident: int = 0, timeout: float = 2.0) -> DnsResult:
    """Send one query over UDP and decode the reply."""
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.settimeout(timeout)
        sock.sendto(dw.make_query(ident, name, qtype), server)
        while True:
            data, _ = sock.recvfrom(65535)
            msg = dw.decode(data)
            if msg.id == ident:
                break
    addresses = [str(ipaddress.ip_address(rr.rdata)) for rr in msg.answers if rr.rtype in (dw.TYPE_A, dw.TYPE_AAAA)]
    return DnsResult(msg, addresses)
