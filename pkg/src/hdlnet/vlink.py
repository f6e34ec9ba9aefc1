"""Simulated non-IP device vicinity (a stand-in for a Bluetooth radio).

All presence decisions read the injected clock, so scripted vicinity
changes take effect at exact simulated times.
"""

from __future__ import annotations

import uuid as _uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from hdlnet.clock import Clock
from hdlnet.handles import format_mac, parse_mac, parse_uuid


class LinkError(Exception):
    pass


class DeviceGone(LinkError):
    pass


class UnknownDevice(LinkError):
    pass


class LinkDown(LinkError):
    pass


class RosterParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class ServiceRecord:
    uuid: bytes
    name: str
    responder: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        if len(self.uuid) != 16 or not any(self.uuid):
            raise ValueError("service uuid must be 16 nonzero octets")

    @property
    def uuid_text(self) -> str:
        return str(_uuid.UUID(bytes=self.uuid))


@dataclass
class DeviceDescriptor:
    mac: bytes
    name: str
    services: list[ServiceRecord] = field(default_factory=list)
    in_vicinity: bool = False

    def __post_init__(self) -> None:
        self.mac = parse_mac(self.mac)
        uuids = [s.uuid for s in self.services]
        if len(uuids) != len(set(uuids)):
            raise ValueError(f"device {self.name} advertises duplicate service uuids")


class VirtualLink:
    def __init__(self, clock: Clock, devices: Iterable[DeviceDescriptor] = ()):
        self.clock = clock
        self.up = True
        self._devices: dict[bytes, DeviceDescriptor] = {}
        self._schedule: dict[bytes, list[tuple[float, int, bool]]] = {}
        self._seq = 0
        self.trace: list[tuple[float, str, str, str]] = []
        for d in devices:
            self.add_device(d)

    def add_device(self, device: DeviceDescriptor) -> None:
        if device.mac in self._devices:
            raise ValueError(f"duplicate mac {format_mac(device.mac)} on link")
        self._devices[device.mac] = device
        self._schedule[device.mac] = []

    def device(self, mac: bytes | str) -> DeviceDescriptor:
        mac = parse_mac(mac)
        try:
            return self._devices[mac]
        except KeyError:
            raise UnknownDevice(format_mac(mac)) from None

    @property
    def devices(self) -> list[DeviceDescriptor]:
        return [self._devices[m] for m in sorted(self._devices)]

    def set_vicinity(self, mac: bytes | str, flag: bool, at: float | None = None) -> None:
        """Schedule a presence change; for equal times the most recent call wins."""
        device = self.device(mac)
        at = self.clock() if at is None else at
        self._seq += 1
        self._schedule[device.mac].append((at, self._seq, bool(flag)))

    def present(self, mac: bytes) -> bool:
        now = self.clock()
        device = self._devices[mac]
        applicable = [entry for entry in self._schedule[mac] if entry[0] <= now]
        if not applicable:
            return device.in_vicinity
        return max(applicable)[2]

    def _record(self, op: str, arg: str, result: str) -> None:
        self.trace.append((self.clock(), op, arg, result))

    def inquiry(self) -> list[bytes]:
        macs = [m for m in sorted(self._devices) if self.present(m)]
        self._record("inquiry", "", ",".join(format_mac(m) for m in macs))
        return macs

    def poll_services(self, mac: bytes | str) -> list[tuple[bytes, str]]:
        device = self.device(mac)
        if not self.present(device.mac):
            self._record("poll", format_mac(device.mac), "gone")
            raise DeviceGone(format_mac(device.mac))
        out = [(s.uuid, s.name) for s in device.services]
        self._record("poll", format_mac(device.mac), ",".join(u.hex() for u, _ in out))
        return out

    def ping(self, mac: bytes | str) -> bool:
        mac = parse_mac(mac)
        alive = mac in self._devices and self.present(mac)
        self._record("ping", format_mac(mac), str(alive))
        return alive


def parse_roster_line(line: str, lineno: int = 0) -> DeviceDescriptor:
    fields = line.split()
    if len(fields) < 2:
        raise RosterParseError(lineno, "expected 'mac name [uuid:name ...]'")
    try:
        mac = parse_mac(fields[0])
    except ValueError as exc:
        raise RosterParseError(lineno, str(exc)) from None
    services = []
    for pair in fields[2:]:
        uuid_text, sep, name = pair.partition(":")
        if not sep or not name:
            raise RosterParseError(lineno, f"service must be uuid:name, got {pair!r}")
        try:
            services.append(ServiceRecord(parse_uuid(uuid_text), name))
        except ValueError as exc:
            raise RosterParseError(lineno, f"bad service uuid {uuid_text!r}: {exc}") from None
    try:
        return DeviceDescriptor(mac, fields[1], services)
    except ValueError as exc:
        raise RosterParseError(lineno, str(exc)) from None


def parse_roster(lines: Iterable[str]) -> list[DeviceDescriptor]:
    devices = []
    seen = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        device = parse_roster_line(line, lineno)
        if device.mac in seen:
            raise RosterParseError(lineno, f"duplicate mac {format_mac(device.mac)}")
        seen.add(device.mac)
        devices.append(device)
    return devices


def load_roster(path: str | Path) -> list[DeviceDescriptor]:
    with open(path, encoding="utf-8") as fh:
        return parse_roster(fh)
