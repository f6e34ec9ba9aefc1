import ipaddress

import pytest
from hypothesis import given, strategies as st

from hdlnet.handles import HandleName
from hdlnet.hdp import dnswire as dw
from hdlnet.hdp.proxy import NODATA, HandleDnsProxy, HdpConfig, HdpServer, dns_query
from hdlnet.hdp.zone import Alias, Static, ZoneParseError, parse_zone
from hdlnet.registry.client import RegistryUnreachable
from hdlnet.registry.model import EmptyResult, HandleNotFound, inet_host


class FakeRegistry:
    """INET_HOST lookups from a dict: address string, None (no INET_HOST) or an exception instance."""

    def __init__(self, table):
        self.table = table
        self.calls = 0

    def resolve(self, handle, type_filter=None):
        self.calls += 1
        if handle not in self.table:
            raise HandleNotFound(str(handle))
        entry = self.table[handle]
        if isinstance(entry, Exception):
            raise entry
        if entry is None:
            raise EmptyResult(str(handle))
        return [inet_host(entry)]


PDA = HandleName("hdl", "pda")
BLUEBOX = HandleName("hdl", "bluebox")
ZONE_LINES = ["www STATIC 192.0.2.10", "www6 STATIC 2001:db8::80", "userweb ALIAS 100.1000/jweb"]
ZONE = parse_zone(ZONE_LINES)
# Same zone plus an entry that shadows the live hdl/pda handle.
SHADOW_ZONE = parse_zone(ZONE_LINES + ["hdl~pda STATIC 203.0.113.1"])


def fake_registry():
    return FakeRegistry(
        {
            PDA: "2001:db8:1::10",
            BLUEBOX: "2001:db8:b0::1",
            HandleName("100.1000", "jweb"): "198.51.100.80",
            HandleName("hdl", "bare"): None,
            HandleName("hdl", "down"): RegistryUnreachable("down"),
        }
    )


@pytest.fixture
def proxy():
    return HandleDnsProxy(HdpConfig(), ZONE, client=fake_registry())


def h(text):
    return bytes.fromhex(text.replace(" ", ""))


NAME_PDA = b"\x07hdl~pda\x05proxy\x06domain\x00"
NAME_WWW = b"\x03www\x05proxy\x06domain\x00"
NAME_NOSUCH = b"\x07no~such\x05proxy\x06domain\x00"

# Hand-encoded: header (id, flags, qd, an, ns, ar), question, answers.
GOLDEN = [
    (
        "AAAA handle hit",
        h("1234 0100 0001 0000 0000 0000") + NAME_PDA + h("001c 0001"),
        h("1234 8500 0001 0001 0000 0000") + NAME_PDA + h("001c 0001")
        + NAME_PDA + h("001c 0001 00000000 0010") + h("20010db8 00010000 00000000 00000010"),
    ),
    (
        "A static zone hit",
        h("beef 0000 0001 0000 0000 0000") + NAME_WWW + h("0001 0001"),
        h("beef 8400 0001 0001 0000 0000") + NAME_WWW + h("0001 0001")
        + NAME_WWW + h("0001 0001 00000000 0004 c000020a"),
    ),
    (
        "NXDOMAIN",
        h("0001 0100 0001 0000 0000 0000") + NAME_NOSUCH + h("001c 0001"),
        h("0001 8503 0001 0000 0000 0000") + NAME_NOSUCH + h("001c 0001"),
    ),
]


@pytest.mark.parametrize("label,query,response", GOLDEN, ids=[g[0] for g in GOLDEN])
def test_golden_vectors(proxy, label, query, response):
    assert proxy.handle_query(query) == response


@pytest.mark.parametrize("label,query,response", GOLDEN, ids=[g[0] for g in GOLDEN])
def test_golden_queries_match_codec(label, query, response):
    assert dw.encode(dw.decode(query)) == query
    assert dw.encode(dw.decode(response)) == response


# -- answer semantics --------------------------------------------------------


def test_handle_hit(proxy):
    a = proxy.answer_name("hdl~bluebox.proxy.domain.", dw.TYPE_AAAA)
    assert a.addresses == ("2001:db8:b0::1",) and a.source == "handle"


def test_static_zone_hit(proxy):
    assert proxy.answer_name("www.proxy.domain.", dw.TYPE_A).addresses == ("192.0.2.10",)


def test_static_family_mismatch_is_nodata(proxy):
    assert proxy.answer_name("www.proxy.domain.", dw.TYPE_AAAA).status == NODATA
    assert proxy.answer_name("www6.proxy.domain.", dw.TYPE_AAAA).addresses == ("2001:db8::80",)


def test_alias_resolves_through_handle(proxy):
    a = proxy.answer_name("userweb.proxy.domain.", dw.TYPE_A)
    assert a.addresses == ("198.51.100.80",) and a.source == "alias"


def test_zone_shadows_handle():
    proxy = HandleDnsProxy(HdpConfig(), SHADOW_ZONE, client=fake_registry())
    assert proxy.answer_name("hdl~pda.proxy.domain.", dw.TYPE_AAAA).status == NODATA
    a = proxy.answer_name("hdl~pda.proxy.domain.", dw.TYPE_A)
    assert a.addresses == ("203.0.113.1",) and a.source == "zone"
    assert proxy.client.calls == 0


def test_unknown_handle_nxdomain(proxy):
    assert proxy.answer_name("no~such.proxy.domain.", dw.TYPE_AAAA).status == "NXDOMAIN"


def test_non_handle_name_nxdomain(proxy):
    assert proxy.answer_name("nothere.proxy.domain.", dw.TYPE_A).status == "NXDOMAIN"


def test_handle_without_address_is_nodata(proxy):
    assert proxy.answer_name("hdl~bare.proxy.domain.", dw.TYPE_A).status == NODATA


def test_handle_family_mismatch_is_nodata(proxy):
    assert proxy.answer_name("hdl~pda.proxy.domain.", dw.TYPE_A).status == NODATA
    assert proxy.answer_name("hdl~bluebox.proxy.domain.", dw.TYPE_A).status == NODATA


def test_registry_failure_is_servfail(proxy):
    assert proxy.answer_name("hdl~down.proxy.domain.", dw.TYPE_A).status == "SERVFAIL"


def test_outside_zone_refused(proxy):
    assert proxy.answer_name("hdl~pda.example.org.", dw.TYPE_AAAA).status == "REFUSED"


def test_case_insensitive_match(proxy):
    assert proxy.answer_name("WWW.Proxy.Domain.", dw.TYPE_A).addresses == ("192.0.2.10",)


def test_no_cache(proxy):
    for _ in range(3):
        proxy.answer_name("hdl~bluebox.proxy.domain.", dw.TYPE_AAAA)
    assert proxy.client.calls == 3


# -- datagram handling -------------------------------------------------------


def rcode_of(wire):
    return dw.decode(wire).rcode


def test_qclass_not_in_is_notimp(proxy):
    assert rcode_of(proxy.handle_query(dw.make_query(7, "www.proxy.domain.", dw.TYPE_A, qclass=3))) == dw.NOTIMP


def test_unsupported_qtype_is_notimp(proxy):
    assert rcode_of(proxy.handle_query(dw.make_query(7, "www.proxy.domain.", 15))) == dw.NOTIMP


def test_malformed_query_formerr(proxy):
    wire = h("4242 0100 0001 0000 0000 0000") + b"\x05ab"
    reply = dw.decode(proxy.handle_query(wire))
    assert reply.id == 0x4242 and reply.rcode == dw.FORMERR


def test_responses_and_runts_dropped(proxy):
    assert proxy.handle_query(b"\x00" * 5) is None
    response = dw.encode(dw.DnsMessage(id=1, qr=True))
    assert proxy.handle_query(response) is None


def test_refused_is_not_authoritative(proxy):
    reply = dw.decode(proxy.handle_query(dw.make_query(9, "elsewhere.org.", dw.TYPE_A)))
    assert reply.rcode == dw.REFUSED and not reply.aa


def test_answer_ttl_configurable():
    proxy = HandleDnsProxy(HdpConfig(answer_ttl_s=30), ZONE, client=FakeRegistry({}))
    reply = dw.decode(proxy.handle_query(dw.make_query(1, "www.proxy.domain.", dw.TYPE_A)))
    assert reply.answers[0].ttl == 30


@given(st.integers(0, 0xFFFF))
def test_id_echoed(ident):
    proxy = HandleDnsProxy(HdpConfig(), ZONE, client=FakeRegistry({}))
    reply = dw.decode(proxy.handle_query(dw.make_query(ident, "www.proxy.domain.", dw.TYPE_A)))
    assert reply.id == ident and reply.qr


# -- zone file ---------------------------------------------------------------


def test_zone_entries():
    zone = parse_zone(["www STATIC 192.0.2.10", "userweb ALIAS 100.1000/jweb  # comment", ""])
    assert zone["www"].target == Static(ipaddress.ip_address("192.0.2.10"))
    assert zone["userweb"].target == Alias(HandleName("100.1000", "jweb"))


@pytest.mark.parametrize(
    "lines",
    [["www STATIC 192.0.2.10", "WWW STATIC 192.0.2.11"], ["www STATIC nope"], ["www CNAME x"], ["www ALIAS nohandle"], ["www"]],
)
def test_zone_errors(lines):
    with pytest.raises(ZoneParseError):
        parse_zone(lines)


def test_zone_error_reports_line():
    with pytest.raises(ZoneParseError) as info:
        parse_zone(["# header", "www STATIC 192.0.2.10", "www STATIC 192.0.2.10"])
    assert info.value.lineno == 3


# -- live path -----------------------------------------------------------------


def test_udp_end_to_end_tracks_updates(registry, pda, host_key):
    server, client = registry
    with HdpServer(HandleDnsProxy(HdpConfig(registry=server.address), SHADOW_ZONE)) as hdp:
        assert dns_query(hdp.address, "hdl~pda.proxy.domain.", dw.TYPE_A).addresses == ["203.0.113.1"]
        assert dns_query(hdp.address, "hdl~nobody.proxy.domain.", dw.TYPE_A).status == "NXDOMAIN"
        client.update(host_key, pda, [inet_host("2001:db8::99")])
        with HdpServer(HandleDnsProxy(HdpConfig(registry=server.address), {})) as bare:
            assert dns_query(bare.address, "hdl~pda.proxy.domain.", dw.TYPE_AAAA, ident=77).addresses == ["2001:db8::99"]
            client.update(host_key, pda, [inet_host("2001:db8::100")])
            assert dns_query(bare.address, "hdl~pda.proxy.domain.", dw.TYPE_AAAA).addresses == ["2001:db8::100"]


def test_oversized_response_sets_tc():
    prefix = ".".join(["p" * 60] * 3 + ["q" * 50])
    handle = HandleName(prefix, "ss")
    proxy = HandleDnsProxy(HdpConfig(), {}, client=FakeRegistry({handle: "2001:db8::1"}))
    qname = f"{prefix}~ss.proxy.domain."
    query = dw.make_query(3, qname, dw.TYPE_AAAA)
    full = 12 + 2 * (len(dw.encode_name(qname)) + 4) + 6 + 16
    assert full > dw.MAX_UDP
    reply = dw.decode(proxy.handle_query(query))
    assert reply.tc and not reply.answers and reply.rcode == dw.NOERROR
