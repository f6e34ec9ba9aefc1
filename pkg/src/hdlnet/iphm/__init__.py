"""IP handle monitor (IPHM) agent."""

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
from hdlnet.iphm.agent import (
    AgentConfig,
    CommittedUpdate,
    IPHMAgent,
    Session,
    StaticInterfaces,
    SystemInterfaces,
    UpdateRejected,
    authenticate,
)
from hdlnet.iphm.cache import CacheCorrupt, Credentials, read_cache, seal, unseal, write_cache

__all__ = [
    "GLOBAL",
    "LINK_LOCAL",
    "LOOPBACK",
    "PRIVATE",
    "AddressBinding",
    "AgentConfig",
    "CacheCorrupt",
    "CommittedUpdate",
    "Credentials",
    "IPHMAgent",
    "Session",
    "StaticInterfaces",
    "SystemInterfaces",
    "UnparsableAddress",
    "UpdateRejected",
    "authenticate",
    "classify_address",
    "read_cache",
    "seal",
    "select_binding",
    "unseal",
    "write_cache",
]
