"""Length-prefixed JSON frames shared by the registry, ODAP control and provider channels.

A frame is a 4-byte big-endian body length followed by a UTF-8 JSON object.
"""

from __future__ import annotations

import json
import socket
import struct
from typing import Any

MAX_FRAME = 1 << 20
_LEN = struct.Struct("!I")


class ProtocolError(Exception):
    """Malformed, truncated or oversized frame."""


def encode_frame(obj: dict[str, Any]) -> bytes:
    body = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"frame body of {len(body)} bytes exceeds {MAX_FRAME}")
    return _LEN.pack(len(body)) + body


def decode_body(body: bytes) -> dict[str, Any]:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable frame body: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("frame body is not an object")
    return obj


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ProtocolError(f"connection closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> dict[str, Any] | None:
    """Read one frame. Returns None on a clean close between frames."""
    first = sock.recv(_LEN.size)
    if not first:
        return None
    header = first if len(first) == _LEN.size else first + _read_exact(sock, _LEN.size - len(first))
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME:
        raise ProtocolError(f"declared frame length {length} exceeds {MAX_FRAME}")
    return decode_body(_read_exact(sock, length))


def write_frame(sock: socket.socket, obj: dict[str, Any]) -> None:
    sock.sendall(encode_frame(obj))


def iter_frames(data: bytes):
    """Yield ``(end_offset, frame)`` pairs from a byte string; raises ProtocolError on a torn tail."""
    pos = 0
    while pos < len(data):
        if len(data) - pos < _LEN.size:
            raise ProtocolError(f"torn frame header at offset {pos}")
        (length,) = _LEN.unpack_from(data, pos)
        start = pos + _LEN.size
        if start + length > len(data):
            raise ProtocolError(f"torn frame body at offset {pos}")
        pos = start + length
        yield pos, decode_body(data[start:pos])


def parse_endpoint(text: str) -> tuple[str, int]:
    """Parse ``host:port`` or ``[v6host]:port``."""
    if text.startswith("["):
        host, _, rest = text[1:].partition("]")
        port = rest.lstrip(":")
    else:
        host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


def request(endpoint: tuple[str, int], obj: dict[str, Any], timeout: float = 5.0) -> dict[str, Any]:
    """One-shot request/response over a fresh connection."""
    with socket.create_connection(endpoint, timeout=timeout) as sock:
        write_frame(sock, obj)
        reply = read_frame(sock)
    if reply is None:
        raise ProtocolError("peer closed without replying")
    return reply
