"""Edge gateway running the device lifecycle: discovery, service listing,
delegated service implementation and keep-alive driven handover preparation."""

from __future__ import annotations

import ipaddress
import logging
import threading
import time
from dataclasses import dataclass

from hdlnet.clock import Clock
from hdlnet.handles import HandleName, derive_device_handle, derive_service_handle, dns_encode, format_mac
from hdlnet.odap.eui64 import eui64_address
from hdlnet.odap.provider import (
    CodeBundle,
    ServiceProviderDescriptor,
    fetch_bundle,
    verify_bundle,
)
from hdlnet.registry import signing
from hdlnet.registry.client import RegistryClient, RegistryUnreachable
from hdlnet.registry.model import (
    INDEX,
    INET_HOST,
    PUBKEY,
    SERVICE_PROVIDER,
    SERVICE_REF,
    URL_IFACE,
    AlreadyExists,
    EmptyResult,
    HandleNotFound,
    HandleValue,
    inet_host,
    pubkey,
)
from hdlnet.vlink import DeviceGone, LinkDown, VirtualLink

log = logging.getLogger(__name__)


class NoProvider(LookupError):
    pass


class UnknownService(LookupError):
    pass


@dataclass
class GatewayConfig:
    gateway_handle: HandleName
    device_prefix: str
    v6_prefix: ipaddress.IPv6Network | str
    keepalive_interval_s: float = 5.0
    miss_threshold: int = 3
    registry: tuple[str, int] | None = None
    control: tuple[str, int] = ("127.0.0.1", 0)
    proxy_domain: str = "proxy.domain."

    def __post_init__(self) -> None:
        self.v6_prefix = ipaddress.IPv6Network(self.v6_prefix)
        if self.v6_prefix.prefixlen != 64:
            raise ValueError(f"v6_prefix must be a /64, got /{self.v6_prefix.prefixlen}")
        if self.miss_threshold < 1:
            raise ValueError("miss_threshold must be at least 1")
        if self.keepalive_interval_s <= 0:
            raise ValueError("keepalive_interval_s must be positive")


@dataclass
class LeaseEntry:
    mac: bytes
    device_handle: HandleName
    assigned_v6: ipaddress.IPv6Address
    last_seen: float
    miss_count: int = 0


@dataclass
class LocalService:
    handle: HandleName
    locator: str
    responses: dict[str, str]
    device_mac: bytes | None = None
    interface_kind: str = "http"


def service_ref(device_handle: HandleName, service_uuid: bytes) -> HandleValue:
    return HandleValue(INDEX[SERVICE_REF], SERVICE_REF, f"{device_handle} {service_uuid.hex()}".encode("ascii"))


def url_iface(locator: str) -> HandleValue:
    return HandleValue(INDEX[URL_IFACE], URL_IFACE, locator.encode("ascii"))


class OdapGateway:
    """All lease-table mutations happen under one lock; registry and provider
    calls for different devices may interleave with control requests."""

    def __init__(
        self,
        config: GatewayConfig,
        link: VirtualLink,
        key,
        client: RegistryClient | None = None,
        clock: Clock = time.monotonic,
        fetch=fetch_bundle,
    ):
        self.config = config
        self.link = link
        self.key = key
        self.client = client or RegistryClient(config.registry)
        self.clock = clock
        self.fetch = fetch
        self.leases: dict[bytes, LeaseEntry] = {}
        self.free_pool: set[ipaddress.IPv6Address] = set()
        self.unregistered: set[bytes] = set()
        self.installed: dict[HandleName, LocalService] = {}
        self._service_devices: dict[HandleName, bytes] = {}
        self._pending_clear: dict[HandleName, str] = {}
        self._lock = threading.RLock()

    # -- discovery -----------------------------------------------------

    def discover_devices(self) -> list[HandleName]:
        if not self.link.up:
            raise LinkDown("virtual link is detached")
        handles = []
        for mac in self.link.inquiry():
            try:
                handles.append(self.authenticate_device(mac).device_handle)
            except RegistryUnreachable as exc:
                log.warning("could not register %s: %s", format_mac(mac), exc)
                with self._lock:
                    self.unregistered.add(mac)
        return handles

    def address_for(self, mac: bytes) -> ipaddress.IPv6Address:
        return eui64_address(self.config.v6_prefix, mac)

    def authenticate_device(self, mac: bytes) -> LeaseEntry:
        handle = derive_device_handle(self.config.device_prefix, mac)
        address = self.address_for(mac)
        self._bind(handle, str(address))
        now = self.clock()
        with self._lock:
            lease = self.leases.get(mac)
            if lease is None:
                lease = LeaseEntry(mac, handle, address, now)
                self.leases[mac] = lease
            lease.last_seen, lease.miss_count = now, 0
            self.free_pool.discard(address)
            self.unregistered.discard(mac)
            self._pending_clear.pop(handle, None)
        log.info("lease %s -> %s (%s)", format_mac(mac), address, handle)
        return lease

    def _bind(self, handle: HandleName, address: str) -> None:
        """Update INET_HOST if the handle exists, otherwise create it."""
        try:
            current = self.client.resolve(handle, INET_HOST)[0].text
        except EmptyResult:
            current = None
        except HandleNotFound:
            try:
                self.client.create(self.key, handle, [inet_host(address), pubkey(signing.public_bytes(self.key))])
                return
            except AlreadyExists:
                current = None
        if current != address:
            self.client.update(self.key, handle, [inet_host(address)])

    def lease_for(self, device_handle: HandleName) -> LeaseEntry | None:
        with self._lock:
            return next((l for l in self.leases.values() if l.device_handle == device_handle), None)

    # -- service listing -----------------------------------------------

    def list_services(self, device_handle: HandleName) -> list[HandleName]:
        lease = self.lease_for(device_handle)
        if lease is None:
            raise DeviceGone(f"no active lease for {device_handle}")
        handles = []
        for service_uuid, _name in self.link.poll_services(lease.mac):
            handle = derive_service_handle(self.config.device_prefix, service_uuid)
            ref = service_ref(device_handle, service_uuid)
            try:
                existing = self.client.resolve(handle, SERVICE_REF)
                if existing[0].data != ref.data:
                    self.client.update(self.key, handle, [ref])
            except EmptyResult:
                self.client.update(self.key, handle, [ref])
            except HandleNotFound:
                self.client.create(self.key, handle, [ref, pubkey(signing.public_bytes(self.key))])
            with self._lock:
                self._service_devices[handle] = lease.mac
            handles.append(handle)
        return handles

    # -- delegated implementation --------------------------------------

    def locator_for(self, service_handle: HandleName) -> str:
        return f"http://{dns_encode(service_handle)}.{self.config.proxy_domain.rstrip('.')}/"

    def implement_service(self, service_handle: HandleName) -> str:
        with self._lock:
            local = self.installed.get(service_handle)
        if local is not None:
            return local.locator
        try:
            descriptor = ServiceProviderDescriptor.from_value(self.client.resolve(service_handle, SERVICE_PROVIDER)[0])
        except (HandleNotFound, EmptyResult):
            raise NoProvider(f"{service_handle} names no service provider") from None
        except (ValueError, KeyError) as exc:
            raise NoProvider(f"unreadable SERVICE_PROVIDER on {service_handle}: {exc}") from None
        try:
            provider_pub = self.client.resolve(descriptor.provider_handle, PUBKEY)[0].data
        except (HandleNotFound, EmptyResult):
            raise NoProvider(f"provider {descriptor.provider_handle} has no published key") from None
        bundle: CodeBundle = self.fetch(descriptor.provider_endpoint, service_handle)
        table = verify_bundle(bundle, provider_pub, descriptor.code_digest)
        locator = self.locator_for(service_handle)
        self.client.update(self.key, service_handle, [url_iface(locator)])
        with self._lock:
            local = LocalService(
                service_handle,
                locator,
                dict(table["responses"]),
                self._service_devices.get(service_handle),
                table.get("interface", descriptor.interface_kind),
            )
            self.installed[service_handle] = local
        log.info("installed %s at %s", service_handle, locator)
        return locator

    def invoke(self, locator: str, request: str) -> str:
        with self._lock:
            local = next((s for s in self.installed.values() if s.locator == locator), None)
        if local is None:
            raise UnknownService(f"no service installed at {locator}")
        if local.device_mac is not None and not self.link.ping(local.device_mac):
            raise DeviceGone(f"device behind {local.handle} is out of range")
        try:
            return local.responses[request]
        except KeyError:
            raise UnknownService(f"{local.handle} has no response for {request!r}") from None

    # -- handover preparation ------------------------------------------

    def keepalive_tick(self, now: float | None = None) -> list[LeaseEntry]:
        now = self.clock() if now is None else now
        self._retry_clears()
        released = []
        with self._lock:
            leases = [self.leases[m] for m in sorted(self.leases)]
        for lease in leases:
            if self.link.ping(lease.mac):
                lease.miss_count, lease.last_seen = 0, now
                continue
            lease.miss_count += 1
            if lease.miss_count >= self.config.miss_threshold:
                self._release(lease)
                released.append(lease)
        return released

    def _release(self, lease: LeaseEntry) -> None:
        with self._lock:
            self.leases.pop(lease.mac, None)
            self.free_pool.add(lease.assigned_v6)
            self._pending_clear[lease.device_handle] = str(lease.assigned_v6)
        log.info("released %s (%s)", lease.device_handle, lease.assigned_v6)
        self._retry_clears()

    def _retry_clears(self) -> None:
        with self._lock:
            pending = dict(self._pending_clear)
        for handle, address in pending.items():
            try:
                # Another gateway may already have rebound the device; leave its address alone.
                try:
                    current = self.client.resolve(handle, INET_HOST)[0].text
                except (EmptyResult, HandleNotFound):
                    current = None
                if current == address:
                    self.client.update(self.key, handle, [HandleValue(INDEX[INET_HOST], INET_HOST, b"")])
            except RegistryUnreachable as exc:
                log.warning("cannot clear %s yet: %s", handle, exc)
                continue
            with self._lock:
                if self._pending_clear.get(handle) == address:
                    del self._pending_clear[handle]

    @property
    def active_addresses(self) -> list[ipaddress.IPv6Address]:
        with self._lock:
            return [l.assigned_v6 for l in self.leases.values()]
