"""Command line entry point: scenario runs plus standalone component daemons."""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import signal
import sys
import threading
import time
from pathlib import Path

from hdlnet.framing import parse_endpoint
from hdlnet.handles import HandleError, parse_handle

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
EXIT_AUTH, EXIT_UNREACHABLE = 3, 4
PASSPHRASE_ENV = "HDLNET_PASSPHRASE"


def _load_scenario(args):
    from hdlnet.harness.scenario import bundled, parse_scenario

    path = Path(args.scenario) if getattr(args, "scenario", None) else bundled(args.command)
    scenario = parse_scenario(path)
    cfg = scenario.config
    for name in ("poll_interval", "rtt", "sample_interval", "keepalive_interval", "miss_threshold"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return scenario


def cmd_validate(args) -> int:
    scenario = _load_scenario(args)
    print(f"{scenario.name}: {len(scenario.events)} events, {len(scenario.hosts)} hosts, "
          f"{len(scenario.gateways)} gateways, {len(scenario.devices)} devices")
    return EXIT_OK


def cmd_run(args) -> int:
    from hdlnet.harness.report import exit_code, render
    from hdlnet.harness.simulator import run

    scenario = _load_scenario(args)
    report = run(scenario, seed=args.seed)
    print(render(report, args.format))
    return exit_code(report)


def cmd_keygen(args) -> int:
    from hdlnet.registry import signing

    seed = secrets.token_bytes(32)
    if args.out:
        out = Path(args.out)
        out.write_text(seed.hex() + "\n")
        out.chmod(0o600)
    else:
        print(f"seed {seed.hex()}")
    print(f"public {signing.public_bytes(signing.key_from_seed(seed)).hex()}")
    return EXIT_OK


def _read_seed(path: str) -> bytes:
    seed = bytes.fromhex(Path(path).read_text().strip())
    if len(seed) != 32:
        raise ValueError(f"{path}: expected a 32-byte hex seed")
    return seed


def _admin_keys(items: list[str]) -> dict[str, bytes]:
    keys = {}
    for item in items:
        prefix, sep, hexkey = item.partition("=")
        if not sep:
            raise ValueError(f"admin keys are prefix=hexpubkey, got {item!r}")
        keys[prefix] = bytes.fromhex(hexkey)
    return keys


def _wait_for_signal() -> None:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait()


def cmd_registry(args) -> int:
    from hdlnet.registry.server import RegistryServer
    from hdlnet.registry.store import RegistryStore

    store = RegistryStore(_admin_keys(args.admin_key), args.journal)
    with RegistryServer(store, *parse_endpoint(args.listen)) as server:
        print(f"registry listening on {server.address[0]}:{server.address[1]}", flush=True)
        _wait_for_signal()
    store.close()
    return EXIT_OK


def cmd_hdp(args) -> int:
    from hdlnet.hdp.proxy import HandleDnsProxy, HdpConfig, HdpServer
    from hdlnet.hdp.zone import load_zone

    zone = load_zone(args.zone) if args.zone else {}
    cfg = HdpConfig(args.domain, parse_endpoint(args.listen), parse_endpoint(args.registry), args.ttl)
    with HdpServer(HandleDnsProxy(cfg, zone)) as server:
        print(f"HDP answering for {cfg.proxy_domain} on {server.address[0]}:{server.address[1]}", flush=True)
        _wait_for_signal()
    return EXIT_OK


def cmd_iphm(args) -> int:
    from hdlnet.iphm.agent import AgentConfig, IPHMAgent, SystemInterfaces, authenticate
    from hdlnet.iphm.cache import CacheCorrupt
    from hdlnet.registry.client import RegistryUnreachable
    from hdlnet.registry.model import AuthFailed

    passphrase = os.environ.get(PASSPHRASE_ENV)
    if not passphrase:
        print(f"set {PASSPHRASE_ENV} to the credential cache passphrase", file=sys.stderr)
        return EXIT_CONFIG
    handle = parse_handle(args.handle)
    cfg = AgentConfig(handle, parse_endpoint(args.registry), args.poll_interval, Path(args.cache))
    prompt = (lambda: (handle, _read_seed(args.key_file))) if args.key_file else None
    try:
        session = authenticate(cfg, passphrase, prompt=prompt)
    except (AuthFailed, CacheCorrupt) as exc:
        print(f"authentication failed: {exc}", file=sys.stderr)
        return EXIT_AUTH
    except RegistryUnreachable as exc:
        print(f"registry unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE

    def reauth():
        return authenticate(cfg, passphrase, prompt=prompt)

    agent = IPHMAgent(cfg, session, SystemInterfaces(), reauthenticate=reauth)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    agent.run(stop)
    return EXIT_OK


def cmd_gateway(args) -> int:
    from hdlnet.odap.control import ControlServer
    from hdlnet.odap.gateway import GatewayConfig, OdapGateway
    from hdlnet.registry import signing
    from hdlnet.vlink import VirtualLink, load_roster

    devices = load_roster(args.roster)
    for d in devices:
        d.in_vicinity = True
    cfg = GatewayConfig(
        parse_handle(args.handle), args.device_prefix, args.prefix, args.keepalive_interval, args.miss_threshold,
        parse_endpoint(args.registry), parse_endpoint(args.listen), args.domain,
    )
    gateway = OdapGateway(cfg, VirtualLink(time.monotonic, devices), signing.key_from_seed(_read_seed(args.key_file)))
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    with ControlServer(gateway) as server:
        print(f"ODAP control on {server.address[0]}:{server.address[1]}", flush=True)
        while not stop.wait(cfg.keepalive_interval_s):
            gateway.keepalive_tick()
    return EXIT_OK


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--poll-interval", dest="poll_interval", type=float)
    p.add_argument("--rtt", type=float)
    p.add_argument("--sample-interval", dest="sample_interval", type=float)
    p.add_argument("--keepalive-interval", dest="keepalive_interval", type=float)
    p.add_argument("--miss-threshold", dest="miss_threshold", type=int)
    p.add_argument("--format", choices=("text", "table"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdlnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replay a scenario file")
    p.add_argument("scenario")
    _scenario_flags(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("validate", help="parse a scenario file without running it")
    p.add_argument("scenario")
    _scenario_flags(p)
    p.set_defaults(func=cmd_validate)
    for name, text in (("demo1", "roaming host demonstration"), ("demo2", "edge gateway demonstration")):
        p = sub.add_parser(name, help=text)
        _scenario_flags(p)
        p.set_defaults(func=cmd_run)

    p = sub.add_parser("keygen", help="generate an Ed25519 seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("registry", help="run the handle registry")
    p.add_argument("--listen", default="127.0.0.1:2641")
    p.add_argument("--journal", required=True)
    p.add_argument("--admin-key", action="append", default=[], metavar="PREFIX=HEXPUB")
    p.set_defaults(func=cmd_registry)

    p = sub.add_parser("hdp", help="run the handle-DNS proxy")
    p.add_argument("--listen", default="127.0.0.1:5353")
    p.add_argument("--registry", default="127.0.0.1:2641")
    p.add_argument("--zone")
    p.add_argument("--domain", default="proxy.domain.")
    p.add_argument("--ttl", type=int, default=0)
    p.set_defaults(func=cmd_hdp)

    p = sub.add_parser("iphm", help="keep this host's handle bound to its current address")
    p.add_argument("--handle", required=True)
    p.add_argument("--registry", default="127.0.0.1:2641")
    p.add_argument("--poll-interval", type=float, default=2.0)
    p.add_argument("--cache", default=str(Path.home() / ".hdlnet" / "credentials"))
    p.add_argument("--key-file", help="seed used on first run or when the cache is unusable")
    p.set_defaults(func=cmd_iphm)

    p = sub.add_parser("gateway", help="run an edge gateway over a device roster")
    p.add_argument("--handle", required=True)
    p.add_argument("--prefix", required=True, help="IPv6 /64 for device addresses")
    p.add_argument("--roster", required=True)
    p.add_argument("--key-file", required=True, help="seed of the device prefix admin key")
    p.add_argument("--device-prefix", default="hdl")
    p.add_argument("--registry", default="127.0.0.1:2641")
    p.add_argument("--listen", default="127.0.0.1:2642")
    p.add_argument("--domain", default="proxy.domain.")
    p.add_argument("--keepalive-interval", type=float, default=5.0)
    p.add_argument("--miss-threshold", type=int, default=3)
    p.set_defaults(func=cmd_gateway)
    return parser


def main(argv: list[str] | None = None) -> int:
    from hdlnet.harness.scenario import ScenarioParseError
    from hdlnet.harness.simulator import ComponentBootFailure

    args = build_parser().parse_args(argv)
    level = (logging.ERROR, logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 3)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioParseError, ComponentBootFailure, HandleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
