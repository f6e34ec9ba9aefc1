"""RFC 1035 message codec, restricted to what the proxy needs.

Names are absolute text names with a trailing dot (``"hdl~pda.proxy.domain."``).
Compression pointers are followed on decode and never emitted on encode.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

TYPE_A = 1
TYPE_AAAA = 28
CLASS_IN = 1

NOERROR = 0
FORMERR = 1
SERVFAIL = 2
NXDOMAIN = 3
NOTIMP = 4
REFUSED = 5

RCODE_NAMES = {NOERROR: "NOERROR", FORMERR: "FORMERR", SERVFAIL: "SERVFAIL", NXDOMAIN: "NXDOMAIN", NOTIMP: "NOTIMP", REFUSED: "REFUSED"}
QTYPE_NAMES = {TYPE_A: "A", TYPE_AAAA: "AAAA"}
QTYPES = {v: k for k, v in QTYPE_NAMES.items()}

MAX_LABEL = 63
MAX_NAME = 255
MAX_UDP = 512

_HEADER = struct.Struct("!HHHHHH")


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class Question:
    name: str
    qtype: int
    qclass: int = CLASS_IN


@dataclass(frozen=True)
class ResourceRecord:
    name: str
    rtype: int
    rclass: int
    ttl: int
    rdata: bytes


@dataclass(frozen=True)
class DnsMessage:
    id: int
    qr: bool = False
    opcode: int = 0
    aa: bool = False
    tc: bool = False
    rd: bool = False
    ra: bool = False
    rcode: int = NOERROR
    questions: tuple[Question, ...] = ()
    answers: tuple[ResourceRecord, ...] = ()
    authority: tuple[ResourceRecord, ...] = field(default=(), repr=False)
    additional: tuple[ResourceRecord, ...] = field(default=(), repr=False)

    @property
    def flags(self) -> int:
        return (
            (self.qr << 15)
            | ((self.opcode & 0xF) << 11)
            | (self.aa << 10)
            | (self.tc << 9)
            | (self.rd << 8)
            | (self.ra << 7)
            | (self.rcode & 0xF)
        )


def encode_name(name: str) -> bytes:
    if name in (".", ""):
        return b"\x00"
    labels = name.rstrip(".").split(".")
    out = bytearray()
    for label in labels:
        raw = label.encode("ascii")
        if not 1 <= len(raw) <= MAX_LABEL:
            raise FormatError(f"label length {len(raw)} outside 1..{MAX_LABEL}")
        out.append(len(raw))
        out += raw
    out.append(0)
    if len(out) > MAX_NAME:
        raise FormatError(f"name of {len(out)} octets exceeds {MAX_NAME}")
    return bytes(out)


def decode_name(data: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly compressed name; returns (name, offset after the name in the original stream)."""
    labels: list[str] = []
    end = None
    seen = set()
    total = 1
    while True:
        if offset >= len(data):
            raise FormatError("name runs past end of message")
        length = data[offset]
        if length & 0xC0 == 0xC0:
            if offset + 1 >= len(data):
                raise FormatError("truncated compression pointer")
            pointer = ((length & 0x3F) << 8) | data[offset + 1]
            if pointer in seen:
                raise FormatError("compression pointer loop")
            seen.add(pointer)
            if end is None:
                end = offset + 2
            offset = pointer
            continue
        if length & 0xC0:
            raise FormatError("reserved label type")
        offset += 1
        if length == 0:
            break
        raw = data[offset : offset + length]
        if len(raw) != length:
            raise FormatError("label runs past end of message")
        try:
            label = raw.decode("ascii")
        except UnicodeDecodeError:
            raise FormatError("non-ASCII label") from None
        if "." in label:
            raise FormatError("label contains a dot")
        labels.append(label)
        total += length + 1
        if total > MAX_NAME:
            raise FormatError("name exceeds 255 octets")
        offset += length
    return (".".join(labels) + "." if labels else "."), (end if end is not None else offset)


def _encode_rr(rr: ResourceRecord) -> bytes:
    return encode_name(rr.name) + struct.pack("!HHIH", rr.rtype, rr.rclass, rr.ttl, len(rr.rdata)) + rr.rdata


def _decode_rr(data: bytes, offset: int) -> tuple[ResourceRecord, int]:
    name, offset = decode_name(data, offset)
    if offset + 10 > len(data):
        raise FormatError("truncated resource record")
    rtype, rclass, ttl, rdlen = struct.unpack_from("!HHIH", data, offset)
    offset += 10
    rdata = data[offset : offset + rdlen]
    if len(rdata) != rdlen:
        raise FormatError("truncated rdata")
    return ResourceRecord(name, rtype, rclass, ttl, rdata), offset + rdlen


def encode(msg: DnsMessage) -> bytes:
    out = bytearray(
        _HEADER.pack(msg.id, msg.flags, len(msg.questions), len(msg.answers), len(msg.authority), len(msg.additional))
    )
    for q in msg.questions:
        out += encode_name(q.name) + struct.pack("!HH", q.qtype, q.qclass)
    for rr in (*msg.answers, *msg.authority, *msg.additional):
        out += _encode_rr(rr)
    return bytes(out)


def decode_header(data: bytes) -> tuple[int, int]:
    """Return (id, flags) from the first 12 octets."""
    if len(data) < _HEADER.size:
        raise FormatError("message shorter than header")
    ident, flags = struct.unpack_from("!HH", data)
    return ident, flags


def decode(data: bytes) -> DnsMessage:
    if len(data) < _HEADER.size:
        raise FormatError("message shorter than header")
    ident, flags, qd, an, ns, ar = _HEADER.unpack_from(data)
    offset = _HEADER.size
    questions = []
    for _ in range(qd):
        name, offset = decode_name(data, offset)
        if offset + 4 > len(data):
            raise FormatError("truncated question")
        qtype, qclass = struct.unpack_from("!HH", data, offset)
        offset += 4
        questions.append(Question(name, qtype, qclass))
    sections = []
    for count in (an, ns, ar):
        rrs = []
        for _ in range(count):
            rr, offset = _decode_rr(data, offset)
            rrs.append(rr)
        sections.append(tuple(rrs))
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing octets")
    return DnsMessage(
        id=ident,
        qr=bool(flags >> 15 & 1),
        opcode=flags >> 11 & 0xF,
        aa=bool(flags >> 10 & 1),
        tc=bool(flags >> 9 & 1),
        rd=bool(flags >> 8 & 1),
        ra=bool(flags >> 7 & 1),
        rcode=flags & 0xF,
        questions=tuple(questions),
        answers=sections[0],
        authority=sections[1],
        additional=sections[2],
    )


def make_query(ident: int, name: str, qtype: int, rd: bool = True, qclass: int = CLASS_IN) -> bytes:
    if not name.endswith("."):
        name += "."
    return encode(DnsMessage(id=ident, rd=rd, questions=(Question(name, qtype, qclass),)))
