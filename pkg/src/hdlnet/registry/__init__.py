"""Persistent identifier registry: records, signed mutation, journal and wire service."""

from hdlnet.registry.client import RegistryClient, RegistryUnreachable
from hdlnet.registry.model import (
    INDEX,
    INET_HOST,
    PUBKEY,
    SERVICE_PROVIDER,
    SERVICE_REF,
    URL_IFACE,
    AlreadyExists,
    AuthFailed,
    EmptyResult,
    HandleNotFound,
    HandleRecord,
    HandleValue,
    InvariantViolation,
    RegistryError,
    ReplayRejected,
    StaleChallenge,
    inet_host,
    pubkey,
)
from hdlnet.registry.server import BindFailure, RegistryServer, serve
from hdlnet.registry.store import Challenge, RegistryStore, SignedRequest

__all__ = [
    "INDEX",
    "INET_HOST",
    "PUBKEY",
    "SERVICE_PROVIDER",
    "SERVICE_REF",
    "URL_IFACE",
    "AlreadyExists",
    "AuthFailed",
    "BindFailure",
    "Challenge",
    "EmptyResult",
    "HandleNotFound",
    "HandleRecord",
    "HandleValue",
    "InvariantViolation",
    "RegistryClient",
    "RegistryError",
    "RegistryServer",
    "RegistryStore",
    "RegistryUnreachable",
    "ReplayRejected",
    "SignedRequest",
    "StaleChallenge",
    "inet_host",
    "pubkey",
    "serve",
]
