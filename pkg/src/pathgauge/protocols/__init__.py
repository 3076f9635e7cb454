"""Built-in protocol models and the registry that names them."""

from __future__ import annotations

from typing import Callable

from ..terms import pub
from . import models
from .audit import ShapeMismatch, audit_structural_symmetry
from .base import ROLES, ProtocolSpec

MODELS: dict[str, Callable[[], ProtocolSpec]] = {
    "example_pk": models.example_pk,
    "mctls": models.mctls,
    "mbtls": models.mbtls,
    "matls": models.matls,
    "lightning_setup": models.lightning_setup,
    "lightning_unlock": models.lightning_unlock,
    "lightning_sig": models.lightning_sig,
    "chaum": models.chaum,
    "tor_establish": models.tor_establish,
    "tor_data": models.tor_data,
    "hornet": models.hornet,
}

_CACHE: dict[str, ProtocolSpec] = {}


def instantiate_model(name: str) -> ProtocolSpec:
    try:
        ctor = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown protocol {name!r}; known: {', '.join(sorted(MODELS))}") from None
    spec = _CACHE.get(name)
    if spec is None:
        spec = _CACHE[name] = ctor()
    return spec


def _scenario(names, corrupt):
    from ..explorer import Scenario  # the explorer imports this package

    return Scenario(tuple(pub(n) for n in names), frozenset(pub(n) for n in corrupt))


def wormhole_scenario(corrupt=("M1", "M3"), protocol: str = "lightning_unlock"):
    """Payment from A to D over three hops, two of them colluding."""
    return instantiate_model(protocol), _scenario(("A", "M1", "M2", "M3", "D"), corrupt)


def firewall_scenario(corrupt=("M1", "M3"), protocol: str = "mbtls"):
    """Client, load balancer, firewall, load balancer, server."""
    return instantiate_model(protocol), _scenario(("A", "M1", "M2", "M3", "E"), corrupt)


__all__ = [
    "MODELS", "ROLES", "ProtocolSpec", "ShapeMismatch", "audit_structural_symmetry",
    "firewall_scenario", "instantiate_model", "wormhole_scenario",
]
