from __future__ import annotations

import ipaddress

from hdlnet.handles import parse_mac


def interface_id(mac: bytes | str) -> bytes:
    """Modified EUI-64: flip the universal/local bit and splice ff:fe into the middle."""
    mac = parse_mac(mac)
    return bytes([mac[0] ^ 0x02]) + mac[1:3] + b"\xff\xfe" + mac[3:6]


def eui64_address(prefix: ipaddress.IPv6Network | str, mac: bytes | str) -> ipaddress.IPv6Address:
    net = ipaddress.IPv6Network(prefix)
    if net.prefixlen != 64:
        raise ValueError(f"EUI-64 addressing needs a /64 prefix, got /{net.prefixlen}")
    return ipaddress.IPv6Address(net.network_address.packed[:8] + interface_id(mac))
