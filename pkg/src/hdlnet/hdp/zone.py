"""Proxy zone table.

One entry per line::

    # owner   kind    target
    www       STATIC  192.0.2.10
    userweb   ALIAS   100.1000/jweb

Owners are relative to the proxy domain and compared case-insensitively.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from hdlnet.handles import HandleError, HandleName, parse_handle


class ZoneParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Static:
    address: ipaddress.IPv4Address | ipaddress.IPv6Address


@dataclass(frozen=True)
class Alias:
    handle: HandleName


@dataclass(frozen=True)
class ZoneEntry:
    owner: str
    target: Static | Alias


def _valid_owner(owner: str) -> bool:
    labels = owner.split(".")
    return all(0 < len(label) <= 63 and label.isascii() and label.isprintable() for label in labels)


def parse_zone(lines: Iterable[str]) -> dict[str, ZoneEntry]:
    zone: dict[str, ZoneEntry] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ZoneParseError(lineno, f"expected 'owner KIND target', got {len(fields)} fields")
        owner, kind, target = fields
        owner = owner.lower().rstrip(".")
        if not _valid_owner(owner):
            raise ZoneParseError(lineno, f"invalid owner name {fields[0]!r}")
        if owner in zone:
            raise ZoneParseError(lineno, f"duplicate owner {owner!r}")
        kind = kind.upper()
        if kind == "STATIC":
            try:
                entry = ZoneEntry(owner, Static(ipaddress.ip_address(target)))
            except ValueError:
                raise ZoneParseError(lineno, f"invalid address {target!r}") from None
        elif kind == "ALIAS":
            try:
                entry = ZoneEntry(owner, Alias(parse_handle(target)))
            except HandleError as exc:
                raise ZoneParseError(lineno, str(exc)) from None
        else:
            raise ZoneParseError(lineno, f"unknown entry kind {fields[1]!r}")
        zone[owner] = entry
    return zone


def load_zone(path: str | Path) -> dict[str, ZoneEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_zone(fh)
