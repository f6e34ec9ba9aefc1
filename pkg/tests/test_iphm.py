import ipaddress
import itertools
import os
import stat

import pytest
from hypothesis import given, strategies as st

from conftest import seeded_key
from hdlnet.handles import HandleName
from hdlnet.iphm.addresses import (
    GLOBAL,
    LINK_LOCAL,
    LOOPBACK,
    PRIVATE,
    AddressBinding,
    UnparsableAddress,
    classify_address,
    select_binding,
)
from hdlnet.iphm.agent import AgentConfig, IPHMAgent, StaticInterfaces, UpdateRejected, authenticate
from hdlnet.iphm.cache import CacheCorrupt, Credentials, read_cache, seal, unseal, write_cache
from hdlnet.registry import signing
from hdlnet.registry.client import RegistryClient, RegistryUnreachable
from hdlnet.registry.model import INET_HOST, AuthFailed, EmptyResult, inet_host, pubkey

# -- classification --------------------------------------------------------


@pytest.mark.parametrize(
    "text,family,scope",
    [
        ("fe80::1", "v6", LINK_LOCAL),
        ("10.0.0.7", "v4", PRIVATE),
        ("2600::1", "v6", GLOBAL),
        ("192.168.1.20", "v4", PRIVATE),
        ("172.31.255.255", "v4", PRIVATE),
        ("172.32.0.1", "v4", GLOBAL),
        ("198.51.100.7", "v4", GLOBAL),
        ("127.0.0.1", "v4", LOOPBACK),
        ("::1", "v6", LOOPBACK),
        ("169.254.3.3", "v4", LINK_LOCAL),
        ("fd00::5", "v6", PRIVATE),
        ("fe80::1%eth0", "v6", LINK_LOCAL),
    ],
)
def test_classify(text, family, scope):
    b = classify_address(text)
    assert (b.family, b.scope) == (family, scope)


def test_classify_rejects_garbage():
    with pytest.raises(UnparsableAddress):
        classify_address("not-an-ip")


@given(st.integers(0, 2**128 - 1))
def test_v6_global_iff_top_three_bits_001(n):
    # Oracle: bit test on the raw integer, independent of the ipaddress network table.
    addr = str(ipaddress.IPv6Address(n))
    assert (classify_address(addr).scope == GLOBAL) == (n >> 125 == 0b001)


@given(st.integers(0, 2**32 - 1))
def test_v4_private_ranges_by_masking(n):
    b = classify_address(str(ipaddress.IPv4Address(n)))
    private = n >> 24 == 10 or n >> 20 == (172 << 4) | 1 or n >> 16 == (192 << 8) | 168
    assert (b.scope == PRIVATE) == private


# -- selection -------------------------------------------------------------

GV6, GV4, PV4, LL6 = "2001:db8:1::10", "198.51.100.7", "192.168.1.20", "fe80::1"
RANK = {GV6: 0, GV4: 1, PV4: 2}


@pytest.mark.parametrize(
    "subset",
    [c for r in range(1, 5) for c in itertools.combinations([GV6, GV4, PV4, LL6], r)],
)
def test_selection_priority_over_all_subsets(subset):
    chosen = select_binding(classify_address(a) for a in subset)
    ranked = sorted((a for a in subset if a in RANK), key=RANK.get)
    if ranked:
        assert chosen.text == ranked[0]
    else:
        assert chosen is None


def test_private_v4_carries_nat_caveat():
    b = select_binding([classify_address(PV4)])
    assert b.text == PV4 and b.needs_nat
    assert not classify_address(GV4).needs_nat


addresses = st.one_of(
    st.integers(0, 2**32 - 1).map(lambda n: str(ipaddress.IPv4Address(n))),
    st.integers(0, 2**128 - 1).map(lambda n: str(ipaddress.IPv6Address(n))),
)


@given(st.lists(addresses, max_size=8))
def test_selection_properties(addrs):
    bindings = [classify_address(a) for a in addrs]
    chosen = select_binding(bindings)
    assert chosen is None or chosen.scope not in (LINK_LOCAL, LOOPBACK)
    assert select_binding(reversed(bindings)) == chosen
    if any(b.family == "v6" and b.scope == GLOBAL for b in bindings):
        assert chosen.family == "v6" and chosen.scope == GLOBAL


# -- credential cache ------------------------------------------------------

CREDS = Credentials(HandleName("hdl", "pda"), bytes(range(32)))


def test_cache_roundtrip(tmp_path):
    path = tmp_path / "c"
    write_cache(path, CREDS, "pw")
    assert read_cache(path, "pw") == CREDS
    assert stat.S_IMODE(os.stat(path).st_mode) == 0o600
    assert path.read_bytes()[0] == 1


def test_cache_wrong_passphrase():
    with pytest.raises(CacheCorrupt):
        unseal(seal(CREDS, "pw"), "other")


def test_cache_tamper_detected():
    blob = bytearray(seal(CREDS, "pw"))
    blob[-5] ^= 1
    with pytest.raises(CacheCorrupt):
        unseal(bytes(blob), "pw")


def test_cache_unknown_version():
    blob = bytearray(seal(CREDS, "pw"))
    blob[0] = 2
    with pytest.raises(CacheCorrupt):
        unseal(bytes(blob), "pw")


# -- authentication ----------------------------------------------------------


def make_config(registry, tmp_path, handle=HandleName("hdl", "pda")):
    server, _ = registry
    return AgentConfig(handle, server.address, 1.0, tmp_path / "cache")


def test_first_run_writes_cache_then_reuses_it(registry, pda, host_key, tmp_path):
    cfg = make_config(registry, tmp_path)
    prompts = []

    def prompt():
        prompts.append(1)
        return pda, signing.private_bytes(host_key)

    first = authenticate(cfg, "pw", prompt)
    assert not first.from_cache and cfg.cache_path.exists()
    second = authenticate(cfg, "pw", prompt)
    assert second.from_cache and len(prompts) == 1


def test_wrong_passphrase_falls_back_to_prompt(registry, pda, host_key, tmp_path):
    cfg = make_config(registry, tmp_path)
    authenticate(cfg, "pw", lambda: (pda, signing.private_bytes(host_key)))
    session = authenticate(cfg, "wrong", lambda: (pda, signing.private_bytes(host_key)))
    assert isinstance(session.cache_error, CacheCorrupt) and not session.from_cache


def test_wrong_passphrase_without_prompt_surfaces_corruption(registry, pda, host_key, tmp_path):
    cfg = make_config(registry, tmp_path)
    authenticate(cfg, "pw", lambda: (pda, signing.private_bytes(host_key)))
    with pytest.raises(CacheCorrupt):
        authenticate(cfg, "wrong")


def test_wrong_key_fails_authentication(registry, pda, tmp_path):
    cfg = make_config(registry, tmp_path)
    with pytest.raises(AuthFailed):
        authenticate(cfg, "pw", lambda: (pda, signing.private_bytes(seeded_key(50))))
    assert not cfg.cache_path.exists()


def test_registry_down_retries_with_backoff(tmp_path):
    cfg = AgentConfig(HandleName("hdl", "pda"), ("127.0.0.1", 1), 1.0, tmp_path / "cache")
    delays = []
    with pytest.raises(RegistryUnreachable):
        authenticate(cfg, "pw", lambda: (cfg.handle, bytes(32)), retries=3, backoff=0.5, sleep=delays.append)
    assert delays == [0.5, 1.0, 2.0]


def test_poll_interval_floor():
    with pytest.raises(ValueError):
        AgentConfig(HandleName("hdl", "pda"), ("127.0.0.1", 1), 0.5)


# -- monitor cycle -----------------------------------------------------------


@pytest.fixture
def agent(registry, pda, host_key, tmp_path, clock):
    cfg = make_config(registry, tmp_path)
    session = authenticate(cfg, "pw", lambda: (pda, signing.private_bytes(host_key)))
    _, client = registry
    return IPHMAgent(cfg, session, StaticInterfaces(), client, clock)


def current(client, handle):
    try:
        return client.resolve(handle, INET_HOST)[0].text
    except EmptyResult:
        return None


def test_change_commits_exactly_one_update(agent, registry, pda):
    _, client = registry
    agent.interfaces.set(["192.168.1.20"])
    agent.monitor_cycle()
    before = client.resolve_versioned(pda)[1]
    agent.interfaces.set(["192.168.1.20", "2001:db8::5"])
    update = agent.monitor_cycle()
    assert update is not None and update.binding.text == "2001:db8::5"
    assert client.resolve_versioned(pda)[1] == before + 1
    assert current(client, pda) == "2001:db8::5"


def test_no_change_means_no_mutation(agent, registry):
    _, client = registry
    agent.interfaces.set(["2001:db8::5"])
    agent.monitor_cycle()
    digest = client.digest()
    for _ in range(10):
        assert agent.monitor_cycle() is None
    assert client.digest() == digest


def test_flap_commits_at_most_two_updates(agent, registry, pda):
    _, client = registry
    agent.interfaces.set(["198.51.100.1"])
    agent.monitor_cycle()
    start = len(agent.updates)
    for addrs in (["198.51.100.2"], ["198.51.100.1"], ["198.51.100.1"]):
        agent.interfaces.set(addrs)
        agent.monitor_cycle()
    assert len(agent.updates) - start <= 2
    assert current(client, pda) == "198.51.100.1"


def test_losing_every_routable_address_clears_binding(agent, registry, pda):
    _, client = registry
    agent.interfaces.set(["2001:db8::5"])
    agent.monitor_cycle()
    agent.interfaces.set(["fe80::1"])
    update = agent.monitor_cycle()
    assert update.binding is None
    assert current(client, pda) is None


def test_nat_caveat_tracks_private_binding(agent):
    agent.interfaces.set(["10.1.2.3"])
    agent.monitor_cycle()
    assert agent.nat_caveat
    agent.interfaces.set(["198.51.100.9"])
    agent.monitor_cycle()
    assert not agent.nat_caveat


def test_first_cycle_syncs_with_registry(registry, pda, host_key, tmp_path, clock):
    _, client = registry
    client.update(host_key, pda, [inet_host("2001:db8::9")])
    cfg = make_config(registry, tmp_path)
    session = authenticate(cfg, "pw", lambda: (pda, signing.private_bytes(host_key)))
    agent = IPHMAgent(cfg, session, StaticInterfaces(["2001:db8::9"]), client, clock)
    digest = client.digest()
    assert agent.monitor_cycle() is None
    assert client.digest() == digest


def test_unreachable_registry_keeps_last_binding(agent, registry, clock):
    agent.interfaces.set(["2001:db8::5"])
    agent.monitor_cycle()
    agent.client = RegistryClient(("127.0.0.1", 1), timeout=0.5)
    agent.interfaces.set(["2001:db8::6"])
    assert agent.monitor_cycle() is None
    assert agent.unreachable == [clock()]
    assert agent.last_committed.text == "2001:db8::5"


def test_rejected_update_reauthenticates_once(agent, registry, pda, admin_key, host_key):
    _, client = registry
    new_key = seeded_key(77)
    client.update(admin_key, pda, [pubkey(signing.public_bytes(new_key))])
    calls = []

    def reauth():
        calls.append(1)
        return type(agent.session)(Credentials(pda, signing.private_bytes(new_key)), new_key, False)

    agent.reauthenticate = reauth
    agent.interfaces.set(["2001:db8::8"])
    assert agent.monitor_cycle().binding.text == "2001:db8::8"
    assert calls == [1]


def test_rejected_update_without_reauth_raises(agent, registry, pda, admin_key):
    _, client = registry
    client.update(admin_key, pda, [pubkey(signing.public_bytes(seeded_key(78)))])
    agent.interfaces.set(["2001:db8::8"])
    with pytest.raises(UpdateRejected):
        agent.monitor_cycle()


def test_binding_is_orderable():
    assert AddressBinding("v4", GLOBAL, "1.1.1.1") < AddressBinding("v6", GLOBAL, "::")
