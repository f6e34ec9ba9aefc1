"""The IP handle monitor: authenticate once, then keep the handle's INET_HOST fresh."""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from hdlnet.clock import Clock
from hdlnet.handles import HandleName
from hdlnet.iphm.addresses import AddressBinding, UnparsableAddress, classify_address, select_binding
from hdlnet.iphm.cache import CacheCorrupt, Credentials, read_cache, write_cache
from hdlnet.registry import signing
from hdlnet.registry.client import RegistryClient, RegistryUnreachable
from hdlnet.registry.model import INDEX, INET_HOST, AuthFailed, EmptyResult, HandleValue, RegistryError, inet_host

log = logging.getLogger(__name__)


class UpdateRejected(RegistryError):
    code = "UPDATE_REJECTED"


class HostInterfaces(Protocol):
    def addresses(self) -> list[str]: ...


class StaticInterfaces:
    """Scriptable interface table for tests and simulation."""

    def __init__(self, addresses: list[str] = ()):
        self._addresses = list(addresses)
        self._lock = threading.Lock()

    def set(self, addresses: list[str]) -> None:
        with self._lock:
            self._addresses = list(addresses)

    def addresses(self) -> list[str]:
        with self._lock:
            return list(self._addresses)


class SystemInterfaces:
    """Reads the host's live interface addresses."""

    def addresses(self) -> list[str]:
        import psutil

        out = []
        for addrs in psutil.net_if_addrs().values():
            for a in addrs:
                if a.family in (socket.AF_INET, socket.AF_INET6):
                    out.append(a.address.split("%", 1)[0])
        return out


@dataclass
class AgentConfig:
    handle: HandleName | None
    registry: tuple[str, int]
    poll_interval_s: float = 2.0
    cache_path: Path | str = "iphm.cache"

    def __post_init__(self) -> None:
        if self.poll_interval_s < 1:
            raise ValueError("poll_interval_s must be at least 1 second")


@dataclass
class Session:
    credentials: Credentials
    key: Ed25519PrivateKey
    from_cache: bool
    cache_error: CacheCorrupt | None = None

    @property
    def handle(self) -> HandleName:
        return self.credentials.handle


@dataclass(frozen=True)
class CommittedUpdate:
    binding: AddressBinding | None
    version: int
    at: float


def _verify_with_backoff(client, key, handle, retries, backoff, sleep) -> None:
    for attempt in range(retries + 1):
        try:
            client.verify(key, handle)
            return
        except RegistryUnreachable:
            if attempt == retries:
                raise
            delay = backoff * 2**attempt
            log.warning("registry unreachable, retrying authentication in %.2fs", delay)
            sleep(delay)


def authenticate(
    config: AgentConfig,
    passphrase: str,
    prompt: Callable[[], tuple[HandleName, bytes]] | None = None,
    client: RegistryClient | None = None,
    retries: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> Session:
    """Authenticate against the registry, preferring the sealed cache.

    ``prompt`` supplies ``(handle, raw private key)`` on first run or when the
    cache cannot be opened; it is never called when the cache unseals.
    """
    client = client or RegistryClient(config.registry)
    cache_path = Path(config.cache_path)
    creds, cache_error = None, None
    if cache_path.exists():
        try:
            creds = read_cache(cache_path, passphrase)
        except CacheCorrupt as exc:
            log.warning("credential cache unusable (%s); falling back to interactive authentication", exc)
            cache_error = exc
    from_cache = creds is not None
    if creds is None:
        if prompt is None:
            raise cache_error or CacheCorrupt(f"no credential cache at {cache_path}")
        handle, raw_key = prompt()
        creds = Credentials(handle, raw_key)
    if config.handle is not None and creds.handle != config.handle:
        raise AuthFailed(f"credentials are for {creds.handle}, agent configured for {config.handle}")
    try:
        key = signing.key_from_seed(creds.private_key)
    except ValueError:
        raise AuthFailed("private key is not a 32-byte Ed25519 seed") from None
    _verify_with_backoff(client, key, creds.handle, retries, backoff, sleep)
    if not from_cache:
        write_cache(cache_path, creds, passphrase)
    return Session(creds, key, from_cache, cache_error)


class IPHMAgent:
    """Polls the host's addresses and rewrites INET_HOST whenever the selected binding changes.

    ``reauthenticate`` is called once when the registry rejects an update;
    it should return a fresh :class:`Session`.
    """

    def __init__(
        self,
        config: AgentConfig,
        session: Session,
        interfaces: HostInterfaces,
        client: RegistryClient | None = None,
        clock: Clock = time.monotonic,
        reauthenticate: Callable[[], Session] | None = None,
    ):
        self.config = config
        self.session = session
        self.interfaces = interfaces
        self.client = client or RegistryClient(config.registry)
        self.clock = clock
        self.reauthenticate = reauthenticate
        self.last_committed: AddressBinding | None = None
        self._synced = False
        self.nat_caveat = False
        self.updates: list[CommittedUpdate] = []
        self.unreachable: list[float] = []

    @property
    def handle(self) -> HandleName:
        return self.session.handle

    def sense(self) -> list[str]:
        return self.interfaces.addresses()

    def _sync(self) -> None:
        try:
            values = self.client.resolve(self.handle, INET_HOST)
            self.last_committed = classify_address(values[0].text)
        except EmptyResult:
            self.last_committed = None
        except UnparsableAddress:
            # Garbage in the registry: force a rewrite on this cycle.
            self.last_committed = AddressBinding("v4", "invalid", "")
        self._synced = True

    def _bindings(self, addresses: list[str]) -> list[AddressBinding]:
        out = []
        for text in addresses:
            try:
                out.append(classify_address(text))
            except UnparsableAddress:
                log.debug("ignoring unparsable interface address %r", text)
        return out

    def _write(self, binding: AddressBinding | None) -> int:
        value = inet_host(binding.text) if binding else HandleValue(INDEX[INET_HOST], INET_HOST, b"")
        return self.client.update(self.session.key, self.handle, [value])

    def monitor_cycle(self, addresses: list[str] | None = None) -> CommittedUpdate | None:
        """One poll: select a binding and commit it if it differs from the last committed one.

        ``addresses`` overrides interface enumeration (the simulator senses
        one round trip before committing).
        """
        if addresses is None:
            addresses = self.sense()
        selected = select_binding(self._bindings(addresses))
        try:
            if not self._synced:
                self._sync()
            if selected == self.last_committed:
                return None
            try:
                version = self._write(selected)
            except RegistryError as exc:
                if self.reauthenticate is None:
                    raise UpdateRejected(str(exc)) from exc
                log.warning("update rejected (%s); re-authenticating", exc)
                self.session = self.reauthenticate()
                try:
                    version = self._write(selected)
                except RegistryError as exc2:
                    raise UpdateRejected(str(exc2)) from exc2
        except RegistryUnreachable as exc:
            log.warning("registry unreachable, keeping last committed binding: %s", exc)
            self.unreachable.append(self.clock())
            return None
        self.last_committed = selected
        self.nat_caveat = bool(selected and selected.needs_nat)
        update = CommittedUpdate(selected, version, self.clock())
        self.updates.append(update)
        log.info("%s -> %s (version %d)", self.handle, selected.text if selected else "<cleared>", version)
        return update

    def run(self, stop: threading.Event) -> None:
        """Wall-clock loop for standalone use."""
        while not stop.is_set():
            started = time.monotonic()
            try:
                self.monitor_cycle()
            except UpdateRejected:
                log.exception("update rejected after re-authentication")
                raise
            stop.wait(max(0.0, self.config.poll_interval_s - (time.monotonic() - started)))
