"""Handle-DNS proxy (HDP)."""

from hdlnet.hdp.proxy import NODATA, Answer, DnsResult, HandleDnsProxy, HdpConfig, HdpServer, dns_query, serve_udp
from hdlnet.hdp.zone import Alias, Static, ZoneEntry, ZoneParseError, load_zone, parse_zone

__all__ = [
    "NODATA",
    "Alias",
    "Answer",
    "DnsResult",
    "HandleDnsProxy",
    "HdpConfig",
    "HdpServer",
    "Static",
    "ZoneEntry",
    "ZoneParseError",
    "dns_query",
    "load_zone",
    "parse_zone",
    "serve_udp",
]
