"""Edge gateway (ODAP) bridging simulated non-IP devices onto IPv6 handles."""

from hdlnet.odap.control import BAD_REQUEST, ControlServer, OdapClient, OdapError, handle_control, serve_control
from hdlnet.odap.eui64 import eui64_address, interface_id
from hdlnet.odap.gateway import GatewayConfig, LeaseEntry, LocalService, NoProvider, OdapGateway, UnknownService
from hdlnet.odap.provider import (
    CodeBundle,
    ProviderServer,
    ProviderUnreachable,
    ServiceProviderDescriptor,
    SignatureInvalid,
    fetch_bundle,
    make_blob,
    sign_blob,
    verify_bundle,
)

__all__ = [
    "BAD_REQUEST",
    "CodeBundle",
    "ControlServer",
    "GatewayConfig",
    "LeaseEntry",
    "LocalService",
    "NoProvider",
    "OdapClient",
    "OdapError",
    "OdapGateway",
    "ProviderServer",
    "ProviderUnreachable",
    "ServiceProviderDescriptor",
    "SignatureInvalid",
    "UnknownService",
    "eui64_address",
    "fetch_bundle",
    "handle_control",
    "interface_id",
    "make_blob",
    "serve_control",
    "sign_blob",
    "verify_bundle",
]
