"""Measure HDP resolution latency over real sockets: UDP client -> HDP -> TCP registry.

    python3 scripts/hdp_throughput.py [--count 1000] [--qtype AAAA]
"""

import argparse
import statistics
import sys
import time

from hdlnet.handles import HandleName, dns_encode
from hdlnet.hdp import dnswire as dw
from hdlnet.hdp.proxy import HandleDnsProxy, HdpConfig, HdpServer, dns_query
from hdlnet.registry import signing
from hdlnet.registry.client import RegistryClient
from hdlnet.registry.model import inet_host, pubkey
from hdlnet.registry.server import RegistryServer
from hdlnet.registry.store import RegistryStore


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--qtype", choices=("A", "AAAA"), default="AAAA")
    args = ap.parse_args()

    admin = signing.key_from_seed(bytes(32))
    handle = HandleName("hdl", "pda")
    address = "2001:db8:1::10" if args.qtype == "AAAA" else "198.51.100.7"
    qtype = dw.TYPE_AAAA if args.qtype == "AAAA" else dw.TYPE_A
    qname = f"{dns_encode(handle)}.proxy.domain."

    store = RegistryStore({"hdl": signing.public_bytes(admin)}, fsync=False)
    with RegistryServer(store) as registry:
        RegistryClient(registry.address).create(admin, handle, [pubkey(signing.public_bytes(admin)), inet_host(address)])
        with HdpServer(HandleDnsProxy(HdpConfig(registry=registry.address), {})) as hdp:
            latencies = []
            for i in range(args.count):
                t0 = time.perf_counter()
                result = dns_query(hdp.address, qname, qtype, ident=i & 0xFFFF)
                latencies.append(time.perf_counter() - t0)
                if result.addresses != [address]:
                    print(f"query {i}: unexpected answer {result}", file=sys.stderr)
                    return 1
    q = statistics.quantiles(latencies, n=100)
    print(f"{args.count} {args.qtype} resolutions of {qname}")
    print(f"median {statistics.median(latencies) * 1e3:.3f} ms  p95 {q[94] * 1e3:.3f} ms  max {max(latencies) * 1e3:.3f} ms")
    print(f"throughput {args.count / sum(latencies):.0f} queries/s (sequential)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
