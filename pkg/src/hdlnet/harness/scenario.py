"""Scenario file parser.

Declarations (no timestamp) introduce entities and tune the run::

    config poll_interval=1 rtt=0.05
    host pda hdl/pda
    zone www STATIC 192.0.2.10
    gateway bluebox hdl/bluebox 2001:db8:b0:1::/64
    device 00:1a:7d:da:71:03 robot 6e400001-b5a3-f393-e0a9-e50e24dcca9e:robot-control
    provide 6e400001-b5a3-f393-e0a9-e50e24dcca9e GET/=panel

Events are ``t=<seconds> <action> <args...>`` in nondecreasing time order.
"""

from __future__ import annotations

import ipaddress
import shlex
from dataclasses import dataclass, field, fields
from pathlib import Path

from hdlnet.handles import HandleError, HandleName, derive_device_handle, derive_service_handle, format_mac, parse_handle, parse_uuid
from hdlnet.hdp.zone import ZoneParseError, parse_zone
from hdlnet.registry.model import REGISTERED_TYPES
from hdlnet.vlink import DeviceDescriptor, RosterParseError, parse_roster_line


class ScenarioParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class RunConfig:
    poll_interval: float = 2.0
    rtt: float = 0.05
    sample_interval: float = 0.05
    keepalive_interval: float = 5.0
    miss_threshold: int = 3
    answer_ttl: int = 0
    proxy_domain: str = "proxy.domain."
    device_prefix: str = "hdl"
    challenge_ttl: float = 30.0

    def validate(self) -> None:
        if self.poll_interval < 1:
            raise ValueError("poll_interval must be >= 1")
        for name in ("rtt", "sample_interval", "keepalive_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rtt >= self.poll_interval:
            raise ValueError("rtt must be shorter than poll_interval")
        if self.miss_threshold < 1:
            raise ValueError("miss_threshold must be >= 1")
        if not self.proxy_domain.endswith("."):
            raise ValueError("proxy_domain must end with '.'")

    @property
    def freshness_bound(self) -> float:
        return self.poll_interval + self.rtt


@dataclass
class HostDecl:
    name: str
    handle: HandleName


@dataclass
class GatewayDecl:
    name: str
    handle: HandleName
    v6_prefix: ipaddress.IPv6Network


@dataclass
class ProvideDecl:
    uuid: bytes
    responses: dict[str, str]


@dataclass(frozen=True)
class ScenarioEvent:
    at: float
    action: str
    args: tuple[str, ...]
    lineno: int = 0

    def describe(self) -> str:
        return " ".join((self.action, *self.args))


@dataclass
class Scenario:
    name: str = "scenario"
    config: RunConfig = field(default_factory=RunConfig)
    hosts: dict[str, HostDecl] = field(default_factory=dict)
    gateways: dict[str, GatewayDecl] = field(default_factory=dict)
    devices: dict[str, DeviceDescriptor] = field(default_factory=dict)
    provides: dict[bytes, ProvideDecl] = field(default_factory=dict)
    zone_lines: list[str] = field(default_factory=list)
    events: list[ScenarioEvent] = field(default_factory=list)

    def device(self, ref: str) -> DeviceDescriptor:
        """Look up a device by name or MAC."""
        if ref in self.devices:
            return self.devices[ref]
        for d in self.devices.values():
            if format_mac(d.mac) == ref.lower():
                return d
        raise KeyError(ref)

    def resolve_ref(self, ref: str) -> HandleName:
        """``dev:<name>``, ``svc:<uuid>``, ``host:<name>`` or a literal handle."""
        kind, sep, rest = ref.partition(":")
        if sep and kind == "dev":
            return derive_device_handle(self.config.device_prefix, self.device(rest).mac)
        if sep and kind == "svc":
            return derive_service_handle(self.config.device_prefix, parse_uuid(rest))
        if sep and kind == "host":
            return self.hosts[rest].handle
        return parse_handle(ref)


EXPECT_STATUSES = {"NXDOMAIN", "NODATA", "SERVFAIL", "REFUSED", "NOTIMP"}
ODAP_OPS = {"DISCOVER", "LIST_SERVICES", "IMPLEMENT", "INVOKE"}
ACTIONS = {
    "set_host_addresses",
    "set_vicinity",
    "resolve_expect",
    "connect_expect",
    "odap",
    "checkpoint",
    "kill_registry",
    "restart_registry",
    "bench",
}


def _coerce(cfg: RunConfig, key: str, value: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if key not in types:
        raise ValueError(f"unknown config key {key!r}")
    current = getattr(cfg, key)
    if isinstance(current, bool):
        return value.lower() in ("1", "true", "yes")
    return type(current)(value)


def _parse_config(cfg: RunConfig, args: list[str]) -> None:
    for item in args:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"config entries are key=value, got {item!r}")
        setattr(cfg, key, _coerce(cfg, key, value))


class _Parser:
    def __init__(self, name: str):
        self.sc = Scenario(name)
        self.last_t = 0.0

    def fail(self, lineno: int, message: str):
        raise ScenarioParseError(lineno, message)

    def line(self, lineno: int, raw: str) -> None:
        text = raw.split("#", 1)[0].strip()
        if not text:
            return
        try:
            tokens = shlex.split(text)
        except ValueError as exc:
            self.fail(lineno, str(exc))
        head = tokens[0]
        if head.startswith("t="):
            self.event(lineno, tokens)
        else:
            self.declaration(lineno, head, tokens[1:], text)

    def declaration(self, lineno: int, head: str, args: list[str], text: str) -> None:
        sc = self.sc
        if sc.events:
            self.fail(lineno, "declarations must precede events")
        try:
            if head == "config":
                _parse_config(sc.config, args)
            elif head == "host":
                if len(args) != 2:
                    self.fail(lineno, "host <name> <handle>")
                if args[0] in sc.hosts:
                    self.fail(lineno, f"duplicate host {args[0]!r}")
                sc.hosts[args[0]] = HostDecl(args[0], parse_handle(args[1]))
            elif head == "gateway":
                if len(args) != 3:
                    self.fail(lineno, "gateway <name> <handle> <v6-prefix/64>")
                if args[0] in sc.gateways:
                    self.fail(lineno, f"duplicate gateway {args[0]!r}")
                net = ipaddress.IPv6Network(args[2])
                if net.prefixlen != 64:
                    self.fail(lineno, "gateway prefix must be a /64")
                sc.gateways[args[0]] = GatewayDecl(args[0], parse_handle(args[1]), net)
            elif head == "device":
                device = parse_roster_line(" ".join(args), lineno)
                if device.name in sc.devices or any(d.mac == device.mac for d in sc.devices.values()):
                    self.fail(lineno, f"duplicate device {device.name!r}")
                sc.devices[device.name] = device
            elif head == "provide":
                if len(args) < 2:
                    self.fail(lineno, "provide <uuid> <request>=<response> ...")
                uuid = parse_uuid(args[0])
                responses = {}
                for pair in args[1:]:
                    req, sep, resp = pair.partition("=")
                    if not sep:
                        self.fail(lineno, f"responses are request=response, got {pair!r}")
                    responses[req] = resp
                sc.provides[uuid] = ProvideDecl(uuid, responses)
            elif head == "zone":
                sc.zone_lines.append(" ".join(args))
                parse_zone(sc.zone_lines)
            else:
                self.fail(lineno, f"unknown declaration {head!r}")
        except ScenarioParseError:
            raise
        except ZoneParseError as exc:
            self.fail(lineno, str(exc).split(": ", 1)[-1])
        except RosterParseError as exc:
            self.fail(lineno, str(exc).split(": ", 1)[-1])
        except (ValueError, HandleError) as exc:
            self.fail(lineno, str(exc))

    def event(self, lineno: int, tokens: list[str]) -> None:
        try:
            at = float(tokens[0][2:])
        except ValueError:
            self.fail(lineno, f"bad timestamp {tokens[0]!r}")
        if at < 0:
            self.fail(lineno, "negative timestamp")
        if at < self.last_t:
            self.fail(lineno, f"timestamp {at:g} is earlier than the previous event ({self.last_t:g})")
        if len(tokens) < 2 or tokens[1] not in ACTIONS:
            self.fail(lineno, f"unknown action {tokens[1] if len(tokens) > 1 else ''!r}")
        self.last_t = at
        action, args = tokens[1], tokens[2:]
        try:
            getattr(self, f"_check_{action}")(lineno, args)
        except ScenarioParseError:
            raise
        except (KeyError, ValueError, HandleError) as exc:
            self.fail(lineno, f"{action}: {exc}")
        self.sc.events.append(ScenarioEvent(at, action, tuple(args), lineno))

    # per-action validation ------------------------------------------------

    def _host(self, lineno: int, name: str) -> None:
        if name not in self.sc.hosts:
            self.fail(lineno, f"undeclared host {name!r}")

    def _gateway(self, lineno: int, name: str) -> None:
        if name not in self.sc.gateways:
            self.fail(lineno, f"undeclared gateway {name!r}")

    def _ref(self, lineno: int, ref: str) -> None:
        try:
            self.sc.resolve_ref(ref)
        except KeyError:
            self.fail(lineno, f"reference to undeclared entity {ref!r}")

    def _name(self, lineno: int, name: str) -> None:
        if ":" in name:
            self._ref(lineno, name)

    def _check_set_host_addresses(self, lineno, args):
        if not args:
            self.fail(lineno, "set_host_addresses <host> [address ...]")
        self._host(lineno, args[0])
        for a in args[1:]:
            ipaddress.ip_address(a)

    def _check_set_vicinity(self, lineno, args):
        if len(args) not in (2, 3) or args[1] not in ("on", "off"):
            self.fail(lineno, "set_vicinity <device> <on|off> [gateway]")
        try:
            self.sc.device(args[0])
        except KeyError:
            self.fail(lineno, f"undeclared device {args[0]!r}")
        if len(args) == 3:
            self._gateway(lineno, args[2])

    def _check_resolve_expect(self, lineno, args):
        if len(args) != 3 or args[1] not in ("A", "AAAA"):
            self.fail(lineno, "resolve_expect <name> <A|AAAA> <address|status|@host>")
        self._name(lineno, args[0])
        self._expected_address(lineno, args[2])

    def _expected_address(self, lineno, expected):
        if expected.startswith("@"):
            self._host(lineno, expected[1:])
        elif expected not in EXPECT_STATUSES:
            ipaddress.ip_address(expected)

    def _check_connect_expect(self, lineno, args):
        if len(args) != 2:
            self.fail(lineno, "connect_expect <name> <host>")
        self._name(lineno, args[0])
        self._host(lineno, args[1])

    def _check_odap(self, lineno, args):
        if len(args) != 4 or args[1] not in ODAP_OPS:
            self.fail(lineno, "odap <gateway> <DISCOVER|LIST_SERVICES|IMPLEMENT|INVOKE> <arg|-> <expectation>")
        self._gateway(lineno, args[0])
        if args[1] in ("LIST_SERVICES", "IMPLEMENT"):
            self._ref(lineno, args[2])
        expect = args[3]
        key, sep, value = expect.partition("=")
        if expect in ("ok", "locator"):
            return
        if key == "count" and sep:
            int(value)
        elif key == "contains" and sep:
            self._ref(lineno, value)
        elif key in ("status", "response") and sep:
            pass
        else:
            self.fail(lineno, f"bad odap expectation {expect!r}")

    def _check_checkpoint(self, lineno, args):
        if len(args) not in (1, 4):
            self.fail(lineno, "checkpoint <label> [<handle> <TYPE> <value|EMPTY|NOTFOUND|@host>]")
        if len(args) == 4:
            self._ref(lineno, args[1])
            if args[2] not in REGISTERED_TYPES:
                self.fail(lineno, f"unknown value type {args[2]!r}")
            if args[3].startswith("@"):
                self._host(lineno, args[3][1:])

    def _check_kill_registry(self, lineno, args):
        if args:
            self.fail(lineno, "kill_registry takes no arguments")

    _check_restart_registry = _check_kill_registry

    def _check_bench(self, lineno, args):
        if len(args) != 3 or args[1] not in ("A", "AAAA") or int(args[2]) < 1:
            self.fail(lineno, "bench <name> <A|AAAA> <count>")
        self._name(lineno, args[0])

    def finish(self) -> Scenario:
        try:
            self.sc.config.validate()
        except ValueError as exc:
            raise ScenarioParseError(0, f"config: {exc}") from None
        return self.sc


def parse_scenario_text(text: str, name: str = "scenario") -> Scenario:
    parser = _Parser(name)
    for lineno, raw in enumerate(text.splitlines(), 1):
        parser.line(lineno, raw)
    return parser.finish()


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario_text(path.read_text(encoding="utf-8"), path.stem)


def bundled(name: str) -> Path:
    return Path(__file__).resolve().parent.parent / "scenarios" / f"{name}.scn"
