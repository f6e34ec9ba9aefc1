import base64
import json
import socket
import struct
import threading

import pytest
from hypothesis import given, settings, strategies as st

from conftest import seeded_key
from hdlnet.framing import encode_frame, read_frame
from hdlnet.handles import HandleName
from hdlnet.registry import signing
from hdlnet.registry.model import (
    INET_HOST,
    PUBKEY,
    AlreadyExists,
    AuthFailed,
    EmptyResult,
    HandleNotFound,
    HandleValue,
    InvariantViolation,
    ReplayRejected,
    StaleChallenge,
    inet_host,
    pubkey,
)
from hdlnet.registry.store import RegistryStore, SignedRequest

PDA = HandleName("hdl", "pda")


def signed(store, key, op, handle, values=()):
    nonce = store.issue_challenge(handle).nonce
    return SignedRequest.build(key, op, handle, list(values), nonce)


@pytest.fixture
def local_pda(store, admin_key, host_key):
    store.apply_signed(signed(store, admin_key, "CREATE", PDA, [pubkey(signing.public_bytes(host_key))]))
    return PDA


# -- signing string ------------------------------------------------------


def test_signing_string_layout():
    nonce = bytes(range(32))
    value = inet_host("192.0.2.1")
    got = signing.signing_string("UPDATE", PDA, nonce, [value])
    b64 = base64.b64encode(b"192.0.2.1")
    assert got == b"UPDATE\0hdl/pda\0" + nonce + b"\0" + b"1\x1fINET_HOST\x1f" + b64


def test_signature_binds_every_field(host_key):
    nonce = b"n" * 32
    req = SignedRequest.build(host_key, "UPDATE", PDA, [inet_host("192.0.2.1")], nonce)
    pub = signing.public_bytes(host_key)
    assert signing.verify(pub, req.signing_string(), req.signature)
    for other in (
        SignedRequest("DELETE", PDA, req.values, nonce),
        SignedRequest("UPDATE", HandleName("hdl", "other"), req.values, nonce),
        SignedRequest("UPDATE", PDA, [inet_host("192.0.2.2")], nonce),
        SignedRequest("UPDATE", PDA, req.values, b"m" * 32),
    ):
        assert not signing.verify(pub, other.signing_string(), req.signature)


# -- reads ---------------------------------------------------------------


def test_resolve_missing_handle(store):
    with pytest.raises(HandleNotFound):
        store.resolve(PDA)


def test_type_filter_without_match_is_empty_result(store, local_pda):
    assert [v.value_type for v in store.resolve(local_pda)] == [PUBKEY]
    with pytest.raises(EmptyResult):
        store.resolve(local_pda, INET_HOST)


# -- challenge lifecycle -------------------------------------------------


def test_valid_update_visible_in_next_resolve(store, local_pda, host_key):
    version = store.apply_signed(signed(store, host_key, "UPDATE", local_pda, [inet_host("2001:db8::1")]))
    assert version == 2
    assert store.resolve(local_pda, INET_HOST)[0].text == "2001:db8::1"


def test_replay_rejected(store, local_pda, host_key):
    req = signed(store, host_key, "UPDATE", local_pda, [inet_host("2001:db8::1")])
    store.apply_signed(req)
    before = store.digest()
    with pytest.raises(ReplayRejected):
        store.apply_signed(req)
    assert store.digest() == before


def test_unissued_nonce_rejected(store, local_pda, host_key):
    req = SignedRequest.build(host_key, "UPDATE", local_pda, [inet_host("2001:db8::1")], b"x" * 32)
    with pytest.raises(AuthFailed):
        store.apply_signed(req)


def test_challenge_bound_to_handle(store, local_pda, host_key):
    other = HandleName("hdl", "other")
    nonce = store.issue_challenge(other).nonce
    req = SignedRequest.build(host_key, "UPDATE", local_pda, [inet_host("2001:db8::1")], nonce)
    with pytest.raises(AuthFailed):
        store.apply_signed(req)


def test_stale_challenge(store, clock, local_pda, host_key):
    req = signed(store, host_key, "UPDATE", local_pda, [inet_host("2001:db8::1")])
    clock.advance(30.5)
    with pytest.raises(StaleChallenge):
        store.apply_signed(req)


def test_challenge_within_ttl_accepted(store, clock, local_pda, host_key):
    req = signed(store, host_key, "UPDATE", local_pda, [inet_host("2001:db8::1")])
    clock.advance(29.9)
    assert store.apply_signed(req) == 2


def test_bad_signature_leaves_nonce_usable(store, local_pda, host_key):
    nonce = store.issue_challenge(local_pda).nonce
    forged = SignedRequest.build(seeded_key(99), "UPDATE", local_pda, [inet_host("2001:db8::1")], nonce)
    with pytest.raises(AuthFailed):
        store.apply_signed(forged)
    good = SignedRequest.build(host_key, "UPDATE", local_pda, [inet_host("2001:db8::1")], nonce)
    assert store.apply_signed(good) == 2


# -- authorization -------------------------------------------------------


def test_create_requires_prefix_admin(store, host_key):
    req = signed(store, host_key, "CREATE", PDA, [pubkey(signing.public_bytes(host_key))])
    with pytest.raises(AuthFailed):
        store.apply_signed(req)


def test_unknown_prefix_cannot_be_created(store, admin_key):
    h = HandleName("other", "x")
    with pytest.raises(AuthFailed):
        store.apply_signed(signed(store, admin_key, "CREATE", h, [pubkey(signing.public_bytes(admin_key))]))


def test_foreign_host_key_cannot_update(store, local_pda):
    with pytest.raises(AuthFailed):
        store.apply_signed(signed(store, seeded_key(7), "UPDATE", local_pda, [inet_host("192.0.2.1")]))


def test_admin_may_update_any_handle_under_prefix(store, local_pda, admin_key):
    assert store.apply_signed(signed(store, admin_key, "UPDATE", local_pda, [inet_host("192.0.2.1")])) == 2


def test_duplicate_create(store, local_pda, admin_key):
    with pytest.raises(AlreadyExists):
        store.apply_signed(signed(store, admin_key, "CREATE", local_pda, [pubkey(b"k" * 32)]))


def test_verify_does_not_mutate(store, local_pda, host_key):
    before = store.digest()
    req = signed(store, host_key, "VERIFY", local_pda)
    store.verify_signed(req)
    assert store.digest() == before
    with pytest.raises(ReplayRejected):
        store.verify_signed(req)


# -- record invariants ---------------------------------------------------


def test_empty_data_clears_index(store, local_pda, host_key):
    store.apply_signed(signed(store, host_key, "UPDATE", local_pda, [inet_host("192.0.2.1")]))
    store.apply_signed(signed(store, host_key, "UPDATE", local_pda, [HandleValue(1, INET_HOST, b"")]))
    with pytest.raises(EmptyResult):
        store.resolve(local_pda, INET_HOST)
    assert store.version(local_pda) == 3


def test_second_inet_host_rejected(store, local_pda, host_key):
    values = [inet_host("192.0.2.1"), HandleValue(2, INET_HOST, b"192.0.2.2")]
    with pytest.raises(InvariantViolation):
        store.apply_signed(signed(store, host_key, "UPDATE", local_pda, values))


def test_pubkey_cannot_be_removed(store, local_pda, host_key):
    with pytest.raises(InvariantViolation):
        store.apply_signed(signed(store, host_key, "UPDATE", local_pda, [HandleValue(100, PUBKEY, b"")]))


def test_unregistered_type_rejected():
    with pytest.raises(InvariantViolation):
        HandleValue(5, "NOT_A_TYPE", b"x")


def test_version_continues_after_recreate(store, local_pda, admin_key, host_key):
    store.apply_signed(signed(store, host_key, "UPDATE", local_pda, [inet_host("192.0.2.1")]))
    assert store.apply_signed(signed(store, admin_key, "DELETE", local_pda)) == 0
    with pytest.raises(HandleNotFound):
        store.resolve(local_pda)
    version = store.apply_signed(signed(store, admin_key, "CREATE", local_pda, [pubkey(b"k" * 32)]))
    assert version == 3


# -- journal -------------------------------------------------------------


def _mutate_many(store, admin_key, n):
    handles = [HandleName("hdl", f"h{i}") for i in range(5)]
    for h in handles:
        store.apply_signed(signed(store, admin_key, "CREATE", h, [pubkey(signing.public_bytes(admin_key))]))
    for i in range(n - len(handles)):
        h = handles[i % len(handles)]
        store.apply_signed(signed(store, admin_key, "UPDATE", h, [inet_host(f"2001:db8::{i:x}")]))


def test_journal_replay_reproduces_state(store, admin_key, clock, tmp_path):
    _mutate_many(store, admin_key, 30)
    store.close()
    replayed = RegistryStore(store.prefix_admin_keys, tmp_path / "journal", clock)
    assert replayed.canonical_bytes() == store.canonical_bytes()
    replayed.close()


def test_torn_tail_dropped_on_replay(store, admin_key, clock, tmp_path):
    _mutate_many(store, admin_key, 10)
    store.close()
    path = tmp_path / "journal"
    intact = path.read_bytes()
    with open(path, "ab") as fh:
        fh.write(encode_frame({"op": "UPDATE"})[:7])
    replayed = RegistryStore(store.prefix_admin_keys, path, clock)
    assert replayed.canonical_bytes() == store.canonical_bytes()
    assert path.read_bytes() == intact
    replayed.close()


def test_replayed_nonces_stay_consumed(store, admin_key, clock, tmp_path, local_pda, host_key):
    req = signed(store, host_key, "UPDATE", local_pda, [inet_host("192.0.2.1")])
    store.apply_signed(req)
    store.close()
    replayed = RegistryStore(store.prefix_admin_keys, tmp_path / "journal", clock)
    with pytest.raises(ReplayRejected):
        replayed.apply_signed(req)
    replayed.close()


# -- concurrency ---------------------------------------------------------


def test_concurrent_updates_serialize_per_handle(admin_key):
    store = RegistryStore({"hdl": signing.public_bytes(admin_key)})
    handles = [HandleName("hdl", f"c{i}") for i in range(4)]
    for h in handles:
        store.apply_signed(signed(store, admin_key, "CREATE", h, [pubkey(signing.public_bytes(admin_key))]))
    per_thread = 25

    def worker(h, tag):
        for i in range(per_thread):
            store.apply_signed(signed(store, admin_key, "UPDATE", h, [inet_host(f"10.{tag}.0.{i}")]))

    threads = [threading.Thread(target=worker, args=(h, t)) for t in range(2) for h in handles]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for h in handles:
        assert store.version(h) == 1 + 2 * per_thread


# -- wire server ---------------------------------------------------------


def raw_exchange(address, payload: bytes):
    with socket.create_connection(address, timeout=5) as sock:
        sock.sendall(payload)
        sock.shutdown(socket.SHUT_WR)
        return read_frame(sock)


def test_wire_roundtrip(registry, pda, host_key):
    _, client = registry
    assert client.update(host_key, pda, [inet_host("2001:db8::7")]) == 2
    values, version = client.resolve_versioned(pda)
    assert version == 2
    assert {v.value_type: v.text for v in values if v.value_type == INET_HOST} == {INET_HOST: "2001:db8::7"}


def test_wire_errors_map_to_exceptions(registry, pda):
    _, client = registry
    with pytest.raises(HandleNotFound):
        client.resolve(HandleName("hdl", "nobody"))
    with pytest.raises(EmptyResult):
        client.resolve(pda, INET_HOST)


def test_torn_frame_answered_with_protocol_error(registry):
    server, _ = registry
    reply = raw_exchange(server.address, struct.pack("!I", 100) + b'{"op":')
    assert reply["status"] == "PROTOCOL_ERROR"


def test_oversized_frame_rejected(registry):
    server, _ = registry
    reply = raw_exchange(server.address, struct.pack("!I", 1 << 30))
    assert reply["status"] == "PROTOCOL_ERROR"


def test_error_reply_keeps_connection_open(registry, pda):
    server, _ = registry
    with socket.create_connection(server.address, timeout=5) as sock:
        sock.sendall(encode_frame({"op": "RESOLVE", "handle": "hdl/nobody"}))
        assert read_frame(sock)["status"] == "HANDLE_NOT_FOUND"
        sock.sendall(encode_frame({"op": "RESOLVE", "handle": str(pda)}))
        assert read_frame(sock)["status"] == "OK"


frame_fields = st.fixed_dictionaries(
    {
        "op": st.sampled_from(["CREATE", "UPDATE", "DELETE", "VERIFY", "BOGUS", ""]),
        "handle": st.sampled_from(["hdl/pda", "hdl/new", "bad", "", "hdl/"]),
        "nonce_b64": st.one_of(st.binary(max_size=40).map(lambda b: base64.b64encode(b).decode()), st.text(max_size=8)),
        "sig_b64": st.one_of(st.binary(max_size=70).map(lambda b: base64.b64encode(b).decode()), st.text(max_size=8)),
        "values": st.one_of(
            st.lists(
                st.fixed_dictionaries(
                    {
                        "index": st.integers(-2, 400),
                        "type": st.sampled_from(["INET_HOST", "PUBKEY", "X"]),
                        "data_b64": st.binary(max_size=16).map(lambda b: base64.b64encode(b).decode()),
                    }
                ),
                max_size=3,
            ),
            st.text(max_size=4),
        ),
    }
)


@settings(max_examples=60)
@given(frame_fields)
def test_unsigned_mutations_never_change_state(registry, pda, fields):
    server, client = registry
    before = client.digest()
    try:
        raw_exchange(server.address, encode_frame(fields))
    except OSError:
        pass
    assert client.digest() == before


@settings(max_examples=40)
@given(st.binary(min_size=1, max_size=200))
def test_garbage_bytes_never_change_state(registry, pda, blob):
    server, client = registry
    before = client.digest()
    try:
        raw_exchange(server.address, struct.pack("!I", len(blob)) + blob)
    except OSError:
        pass
    assert client.digest() == before


def test_values_survive_json_wire():
    v = HandleValue(300, "URL_IFACE", "http://x/".encode(), 5)
    assert HandleValue.from_wire(json.loads(json.dumps(v.to_wire()))) == v
