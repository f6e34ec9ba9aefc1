import os

import pytest
from hypothesis import HealthCheck, settings

from hdlnet.clock import SimClock
from hdlnet.handles import HandleName
from hdlnet.registry import signing
from hdlnet.registry.client import RegistryClient
from hdlnet.registry.model import pubkey
from hdlnet.registry.server import RegistryServer
from hdlnet.registry.store import RegistryStore

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def seeded_key(n: int):
    return signing.key_from_seed(n.to_bytes(32, "big"))


@pytest.fixture
def admin_key():
    return seeded_key(1)


@pytest.fixture
def host_key():
    return seeded_key(2)


@pytest.fixture
def clock():
    return SimClock()


@pytest.fixture
def store(admin_key, clock, tmp_path):
    s = RegistryStore({"hdl": signing.public_bytes(admin_key)}, tmp_path / "journal", clock)
    yield s
    s.close()


@pytest.fixture
def registry(store):
    """A live registry on loopback; yields (server, client)."""
    with RegistryServer(store) as server:
        yield server, RegistryClient(server.address)


@pytest.fixture
def pda(registry, admin_key, host_key):
    """hdl/pda created by the prefix admin with the host's own PUBKEY."""
    _, client = registry
    handle = HandleName("hdl", "pda")
    client.create(admin_key, handle, [pubkey(signing.public_bytes(host_key))])
    return handle


# One (criterion, passed, detail) entry per acceptance criterion, printed after the run.
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
