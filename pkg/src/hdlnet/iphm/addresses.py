"""Address scope classification and binding selection."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Iterable

GLOBAL = "global"
PRIVATE = "private"
LINK_LOCAL = "link_local"
LOOPBACK = "loopback"

_V6_TABLE = [
    (ipaddress.IPv6Network("::1/128"), LOOPBACK),
    (ipaddress.IPv6Network("fe80::/10"), LINK_LOCAL),
    (ipaddress.IPv6Network("fc00::/7"), PRIVATE),
    (ipaddress.IPv6Network("2000::/3"), GLOBAL),
]
_V4_TABLE = [
    (ipaddress.IPv4Network("10.0.0.0/8"), PRIVATE),
    (ipaddress.IPv4Network("172.16.0.0/12"), PRIVATE),
    (ipaddress.IPv4Network("192.168.0.0/16"), PRIVATE),
    (ipaddress.IPv4Network("127.0.0.0/8"), LOOPBACK),
    (ipaddress.IPv4Network("169.254.0.0/16"), LINK_LOCAL),
]

# (family, scope) in selection priority order; anything else is never bound.
PRIORITY = [("v6", GLOBAL), ("v4", GLOBAL), ("v4", PRIVATE)]


class UnparsableAddress(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AddressBinding:
    family: str
    scope: str
    text: str

    @property
    def needs_nat(self) -> bool:
        """Private v4 bindings are published but are not reachable without NAT traversal."""
        return self.family == "v4" and self.scope == PRIVATE

    @property
    def address(self) -> ipaddress.IPv4Address | ipaddress.IPv6Address:
        return ipaddress.ip_address(self.text)


def classify_address(text: str) -> AddressBinding:
    try:
        addr = ipaddress.ip_address(text.split("%", 1)[0].strip())
    except ValueError:
        raise UnparsableAddress(f"not an IPv4/IPv6 address: {text!r}") from None
    if addr.version == 6:
        # Anything outside the table (::, multicast, v4-mapped) is non-routable here.
        scope = next((s for net, s in _V6_TABLE if addr in net), PRIVATE)
        return AddressBinding("v6", scope, str(addr))
    scope = next((s for net, s in _V4_TABLE if addr in net), GLOBAL)
    return AddressBinding("v4", scope, str(addr))


def select_binding(candidates: Iterable[AddressBinding]) -> AddressBinding | None:
    """Pick global v6 over global v4 over private v4; ties go to the lexicographically smallest text."""
    candidates = list(candidates)
    for family, scope in PRIORITY:
        matches = [c for c in candidates if c.family == family and c.scope == scope]
        if matches:
            return min(matches, key=lambda c: c.text)
    return None
