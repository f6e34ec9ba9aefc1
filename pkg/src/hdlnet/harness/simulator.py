"""Boots every component on loopback sockets and replays a scenario under simulated time.

The harness only talks to components through their wire interfaces:
DNS over UDP to the proxy, registry frames (authority setup and
checkpoints) and ODAP control frames. Agents and gateway timers are driven
by the simulated clock, which is the only notion of time any component sees.
"""

from __future__ import annotations

import ipaddress
import logging
import random
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from hdlnet.clock import SimClock
from hdlnet.handles import HandleName, derive_service_handle, dns_encode
from hdlnet.harness.scenario import Scenario, ScenarioEvent
from hdlnet.hdp import dnswire as dw
from hdlnet.hdp.proxy import NODATA, HandleDnsProxy, HdpConfig, HdpServer, dns_query
from hdlnet.hdp.zone import parse_zone
from hdlnet.iphm.addresses import classify_address, select_binding
from hdlnet.iphm.agent import AgentConfig, IPHMAgent, StaticInterfaces, authenticate
from hdlnet.odap.control import ControlServer, OdapClient, OdapError
from hdlnet.odap.gateway import GatewayConfig, OdapGateway
from hdlnet.odap.provider import ProviderServer, ServiceProviderDescriptor, make_blob
from hdlnet.registry import signing
from hdlnet.registry.client import RegistryClient, RegistryUnreachable
from hdlnet.registry.model import EmptyResult, HandleNotFound, pubkey
from hdlnet.registry.server import RegistryServer
from hdlnet.registry.store import RegistryStore
from hdlnet.vlink import DeviceDescriptor, VirtualLink

log = logging.getLogger(__name__)

# Same-instant ordering: scripted events, agent sensing, agent commit, keep-alive, sampling.
P_EVENT, P_SENSE, P_COMMIT, P_KEEPALIVE, P_SAMPLE = range(5)


class ComponentBootFailure(RuntimeError):
    pass


@dataclass
class EventOutcome:
    at: float
    action: str
    passed: bool
    detail: str
    lineno: int = 0


@dataclass
class Move:
    host: str
    at: float
    expected: str
    first_fresh_at: float | None = None
    first_after_bound: str | None = None
    superseded: bool = False

    @property
    def delta(self) -> float | None:
        return None if self.first_fresh_at is None else round(self.first_fresh_at - self.at, 6)


@dataclass
class RunReport:
    scenario: str
    seed: int
    freshness_bound: float
    outcomes: list[EventOutcome] = field(default_factory=list)
    moves: list[Move] = field(default_factory=list)
    stale_count: int = 0
    samples: int = 0
    unreachable: list[tuple[float, str, str]] = field(default_factory=list)
    sim_duration: float = 0.0
    wall: dict = field(default_factory=dict)

    @property
    def propagation(self) -> list[float]:
        return [m.delta for m in self.moves if m.delta is not None]

    @property
    def unpropagated(self) -> list[Move]:
        return [m for m in self.moves if m.first_fresh_at is None and not m.superseded]

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes) and self.stale_count == 0 and not self.unpropagated

    def deterministic_view(self) -> dict:
        """Everything except wall-clock measurements."""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "bound": self.freshness_bound,
            "outcomes": [(o.at, o.action, o.passed, o.detail) for o in self.outcomes],
            "moves": [(m.host, m.at, m.expected, m.first_fresh_at, m.first_after_bound, m.superseded) for m in self.moves],
            "stale": self.stale_count,
            "samples": self.samples,
            "unreachable": list(self.unreachable),
            "sim_duration": self.sim_duration,
        }


class SimNetwork:
    """Maps simulated addresses to echo responders (a stand-in for each host's web server)."""

    def __init__(self):
        self._owners: dict[str, str] = {}

    def bind(self, host: str, addresses: list[str]) -> None:
        self._owners = {a: h for a, h in self._owners.items() if h != host}
        for a in addresses:
            self._owners[str(classify_address(a).address)] = host

    def connect(self, address: str, payload: str = "GET /") -> str:
        owner = self._owners.get(address)
        if owner is None:
            raise ConnectionRefusedError(address)
        return f"{owner}:{payload}"


def _normalize(text: str) -> str:
    try:
        return str(ipaddress.ip_address(text))
    except ValueError:
        return text


def _tick(t: float) -> float:
    return round(t, 6)


class Simulation:
    def __init__(self, scenario: Scenario, seed: int = 0, workdir: str | Path | None = None):
        self.sc = scenario
        self.cfg = scenario.config
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = SimClock()
        self._tmp = None
        if workdir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="hdlnet-")
            workdir = self._tmp.name
        self.workdir = Path(workdir)
        self.report = RunReport(scenario.name, seed, self.cfg.freshness_bound)
        self.net = SimNetwork()
        self.host_addresses: dict[str, list[str]] = {h: [] for h in scenario.hosts}
        self.current: dict[str, str] = {h: NODATA for h in scenario.hosts}
        self.last_change: dict[str, float] = {}
        self.registry_up = True
        self.last_restart = 0.0
        self.locators: dict[str, str] = {}
        self._servers = []

    # -- boot --------------------------------------------------------------

    def _key(self):
        return signing.key_from_seed(self.rng.getrandbits(256).to_bytes(32, "big"))

    def boot(self) -> None:
        try:
            self._boot()
        except Exception as exc:
            self.shutdown()
            raise ComponentBootFailure(f"{type(exc).__name__}: {exc}") from exc

    def _boot(self) -> None:
        sc, cfg = self.sc, self.cfg
        self.admin_key = self._key()
        prefixes = {h.handle.prefix for h in sc.hosts.values()} | {g.handle.prefix for g in sc.gateways.values()}
        prefixes.add(cfg.device_prefix)
        self.admin_keys = {p: signing.public_bytes(self.admin_key) for p in sorted(prefixes)}
        self.journal = self.workdir / "registry.journal"
        self._start_registry(port=0)
        authority = RegistryClient(self.registry_endpoint)
        self.registry_client = authority

        self.host_keys = {}
        for name in sorted(sc.hosts):
            key = self._key()
            self.host_keys[name] = key
            authority.create(self.admin_key, sc.hosts[name].handle, [pubkey(signing.public_bytes(key))])

        self.provider = ProviderServer(self._key()).start()
        self._servers.append(self.provider)
        provider_handle = HandleName(cfg.device_prefix, "provider")
        authority.create(self.admin_key, provider_handle, [pubkey(signing.public_bytes(self.provider.key))])
        for uuid, decl in sorted(self.sc.provides.items()):
            service = derive_service_handle(cfg.device_prefix, uuid)
            bundle = self.provider.publish(service, make_blob(str(service), decl.responses))
            descriptor = ServiceProviderDescriptor(self.provider.address, provider_handle, bundle.digest)
            authority.create(
                self.admin_key, service, [descriptor.to_value(), pubkey(signing.public_bytes(self.admin_key))]
            )

        hdp_cfg = HdpConfig(cfg.proxy_domain, ("127.0.0.1", 0), self.registry_endpoint, cfg.answer_ttl)
        self.hdp = HdpServer(HandleDnsProxy(hdp_cfg, parse_zone(sc.zone_lines))).start()
        self._servers.append(self.hdp)

        self.agents: dict[str, IPHMAgent] = {}
        self.interfaces: dict[str, StaticInterfaces] = {}
        for name in sorted(sc.hosts):
            decl = sc.hosts[name]
            acfg = AgentConfig(decl.handle, self.registry_endpoint, cfg.poll_interval, self.workdir / f"{name}.cache")
            raw = signing.private_bytes(self.host_keys[name])
            passphrase = f"{name}-{self.seed}"
            session = authenticate(acfg, passphrase, prompt=lambda d=decl, r=raw: (d.handle, r))
            self.interfaces[name] = StaticInterfaces()

            def reauth(acfg=acfg, passphrase=passphrase):
                return authenticate(acfg, passphrase, sleep=lambda s: None)

            self.agents[name] = IPHMAgent(
                acfg, session, self.interfaces[name], RegistryClient(self.registry_endpoint), self.clock, reauth
            )

        self.gateways: dict[str, OdapGateway] = {}
        self.controls: dict[str, OdapClient] = {}
        self.links: dict[str, VirtualLink] = {}
        for name in sorted(sc.gateways):
            decl = sc.gateways[name]
            devices = [DeviceDescriptor(d.mac, d.name, list(d.services)) for d in sc.devices.values()]
            link = VirtualLink(self.clock, devices)
            gcfg = GatewayConfig(
                decl.handle, cfg.device_prefix, decl.v6_prefix, cfg.keepalive_interval, cfg.miss_threshold,
                self.registry_endpoint, ("127.0.0.1", 0), cfg.proxy_domain,
            )
            gateway = OdapGateway(gcfg, link, self.admin_key, RegistryClient(self.registry_endpoint), self.clock)
            control = ControlServer(gateway).start()
            self._servers.append(control)
            self.links[name], self.gateways[name] = link, gateway
            self.controls[name] = OdapClient(control.address)

    def _start_registry(self, port: int) -> None:
        self.store = RegistryStore(self.admin_keys, self.journal, self.clock, self.cfg.challenge_ttl)
        self.registry = RegistryServer(self.store, "127.0.0.1", port).start()
        self.registry_endpoint = self.registry.address

    def shutdown(self) -> None:
        for server in reversed(self._servers):
            try:
                server.stop()
            except Exception:
                log.debug("error stopping %r", server, exc_info=True)
        self._servers.clear()
        if getattr(self, "registry", None) is not None and self.registry_up:
            self.registry.stop()
            self.store.close()
            self.registry_up = False
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None

    # -- scheduling --------------------------------------------------------

    def end_time(self) -> float:
        last = self.sc.events[-1].at if self.sc.events else 0.0
        return _tick(last + self.cfg.freshness_bound + 2 * self.cfg.sample_interval)

    def schedule(self) -> float:
        cfg, end = self.cfg, self.end_time()
        for ev in self.sc.events:
            self.clock.schedule(ev.at, lambda ev=ev: self._run_event(ev), P_EVENT)
        steps = int(round(cfg.poll_interval / cfg.sample_interval))
        for name in sorted(self.agents):
            # Seeded phase on the sampling grid, so commits coincide with samples.
            phase = self.rng.randrange(max(steps, 1)) * cfg.sample_interval
            k = 0
            while (t := _tick(phase + k * cfg.poll_interval)) <= end:
                self.clock.schedule(t, lambda n=name: self._sense(n), P_SENSE)
                k += 1
        for name in sorted(self.gateways):
            k = 1
            while (t := _tick(k * cfg.keepalive_interval)) <= end:
                self.clock.schedule(t, lambda n=name: self.gateways[n].keepalive_tick(), P_KEEPALIVE)
                k += 1
        n = 0
        while (t := _tick(n * cfg.sample_interval)) <= end:
            self.clock.schedule(t, self._sample, P_SAMPLE)
            n += 1
        return end

    def _sense(self, name: str) -> None:
        sensed = self.agents[name].sense()
        at = _tick(self.clock() + self.cfg.rtt)
        self.clock.schedule(at, lambda: self._commit(name, sensed), P_COMMIT)

    def _commit(self, name: str, sensed: list[str]) -> None:
        agent = self.agents[name]
        before = len(agent.unreachable)
        agent.monitor_cycle(sensed)
        if len(agent.unreachable) > before:
            self.report.unreachable.append((self.clock(), f"iphm:{name}", "RegistryUnreachable"))

    # -- sampling ----------------------------------------------------------

    def _qname(self, name: str) -> str:
        if ":" in name:
            name = dns_encode(self.sc.resolve_ref(name))
        return name if name.endswith(".") else f"{name}.{self.cfg.proxy_domain}"

    def _query(self, name: str, qtype: int):
        return dns_query(self.hdp.address, self._qname(name), qtype, self.rng.getrandbits(16))

    def _lookup(self, name: str) -> str:
        """Browser-style lookup: AAAA first, then A."""
        result = self._query(name, dw.TYPE_AAAA)
        if result.status == NODATA:
            result = self._query(name, dw.TYPE_A)
        return result.addresses[0] if result.addresses else result.status

    def _sample(self) -> None:
        now = self.clock()
        for name in sorted(self.sc.hosts):
            observed = self._lookup(dns_encode(self.sc.hosts[name].handle))
            if observed == "SERVFAIL":
                self.report.unreachable.append((now, f"hdp:{name}", "SERVFAIL"))
                continue
            self.report.samples += 1
            expected = self.current[name]
            changed = self.last_change.get(name)
            for move in self.report.moves:
                if move.host == name and move.first_fresh_at is None and move.expected == observed and move.expected == expected:
                    move.first_fresh_at = now
            if changed is None:
                continue
            effective = max(changed, self.last_restart)
            if now > effective + self.cfg.freshness_bound + 1e-9:
                move = next(m for m in reversed(self.report.moves) if m.host == name)
                if move.first_after_bound is None:
                    move.first_after_bound = observed
                if observed != expected:
                    self.report.stale_count += 1
                    log.warning("stale answer for %s at t=%g: %s (expected %s)", name, now, observed, expected)

    # -- scripted events ---------------------------------------------------

    def _outcome(self, ev: ScenarioEvent, passed: bool, detail: str) -> None:
        self.report.outcomes.append(EventOutcome(ev.at, ev.describe(), passed, detail, ev.lineno))

    def _run_event(self, ev: ScenarioEvent) -> None:
        try:
            getattr(self, f"_do_{ev.action}")(ev, *ev.args)
        except Exception as exc:
            log.debug("event failed", exc_info=True)
            self._outcome(ev, False, f"{type(exc).__name__}: {exc}")

    def _do_set_host_addresses(self, ev, host, *addresses):
        self.interfaces[host].set(list(addresses))
        self.net.bind(host, list(addresses))
        selected = select_binding(classify_address(a) for a in addresses)
        expected = selected.text if selected else NODATA
        if expected != self.current[host]:
            self.current[host] = expected
            self.last_change[host] = ev.at
            for move in self.report.moves:
                if move.host == host and move.first_fresh_at is None:
                    move.superseded = True
            self.report.moves.append(Move(host, ev.at, expected))

    def _do_set_vicinity(self, ev, device, flag, gateway=None):
        targets = [gateway] if gateway else sorted(self.links)
        for g in targets:
            self.links[g].set_vicinity(self.sc.device(device).mac, flag == "on", ev.at)

    def _expected(self, expected: str) -> str:
        if expected.startswith("@"):
            return self.current[expected[1:]]
        return expected

    def _do_resolve_expect(self, ev, name, qtype, expected):
        result = self._query(name, dw.QTYPES[qtype])
        got = result.addresses[0] if result.addresses else result.status
        want = self._expected(expected)
        if want not in ("NXDOMAIN", "NODATA", "SERVFAIL", "REFUSED", "NOTIMP"):
            want = str(classify_address(want).address)
        self._outcome(ev, got == want, f"got {got}, expected {want}")

    def _do_connect_expect(self, ev, name, host):
        address = self._lookup(name)
        try:
            reply = self.net.connect(address)
        except ConnectionRefusedError:
            self._outcome(ev, False, f"connection to {address} refused")
            return
        self._outcome(ev, reply.startswith(f"{host}:"), f"{address} answered {reply!r}")

    def _do_odap(self, ev, gateway, op, arg, expect):
        client = self.controls[gateway]
        try:
            if op == "DISCOVER":
                result = client.discover()
            elif op == "LIST_SERVICES":
                result = client.list_services(self.sc.resolve_ref(arg))
            elif op == "IMPLEMENT":
                result = client.implement(self.sc.resolve_ref(arg))
                self.locators[gateway] = result
            else:
                result = client.invoke(self.locators.get(gateway, ""), arg)
            status = "OK"
        except OdapError as exc:
            result, status = None, exc.status
        key, _, value = expect.partition("=")
        if key == "status":
            passed = status == value
        elif status != "OK":
            passed = False
        elif key == "count":
            passed = len(result) == int(value)
        elif key == "contains":
            passed = str(self.sc.resolve_ref(value)) in result
        elif key == "response":
            passed = result == value
        elif key == "locator":
            passed = isinstance(result, str) and result.startswith("http://")
        else:
            passed = True
        self._outcome(ev, passed, f"status {status}, result {result!r}")

    def _do_checkpoint(self, ev, label, ref=None, vtype=None, expected=None):
        if ref is None:
            self._outcome(ev, True, label)
            return
        handle = self.sc.resolve_ref(ref)
        try:
            got = self.registry_client.resolve(handle, vtype)[0].text
        except EmptyResult:
            got = "EMPTY"
        except HandleNotFound:
            got = "NOTFOUND"
        except RegistryUnreachable:
            got = "UNREACHABLE"
        want = self._expected(expected)
        if want == NODATA:
            want = "EMPTY"
        got, want = _normalize(got), _normalize(want)
        self._outcome(ev, got == want, f"{label}: {handle} {vtype} = {got}, expected {want}")

    def _do_kill_registry(self, ev):
        self._port = self.registry_endpoint[1]
        self.registry.stop()
        self.store.close()
        self.registry_up = False
        self.report.unreachable.append((ev.at, "registry", "killed"))
        self._outcome(ev, True, "registry stopped")

    def _do_restart_registry(self, ev):
        self._start_registry(self._port)
        self.registry_up = True
        self.last_restart = ev.at
        self._outcome(ev, True, f"registry restarted, journal replayed ({self.store.digest()[:12]})")

    def _do_bench(self, ev, name, qtype, count):
        latencies, failures = [], 0
        for _ in range(int(count)):
            started = time.perf_counter()
            result = self._query(name, dw.QTYPES[qtype])
            latencies.append(time.perf_counter() - started)
            failures += not result.addresses
        median = statistics.median(latencies)
        self.report.wall.setdefault("bench", []).append(
            {"name": name, "count": int(count), "median_s": median, "max_s": max(latencies)}
        )
        self._outcome(ev, failures == 0, f"{count} resolutions, {failures} without an answer")

    # -- driver ------------------------------------------------------------

    def run(self) -> RunReport:
        started = time.perf_counter()
        self.boot()
        try:
            end = self.schedule()
            self.clock.advance_to(end)
            self.report.sim_duration = end
        finally:
            self.shutdown()
        self.report.wall["duration_s"] = time.perf_counter() - started
        return self.report


def run(scenario: Scenario, seed: int = 0) -> RunReport:
    return Simulation(scenario, seed).run()
