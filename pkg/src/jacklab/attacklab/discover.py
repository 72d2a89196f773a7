"""Host discovery against the testbed inventory, standing in for a LAN ping sweep."""

from __future__ import annotations

from dataclasses import dataclass

from jacklab.attacklab.errors import InventoryUnreachable
from jacklab.attacklab.targets import Target
from jacklab.simdevices.inventory import RemoteInventory


@dataclass(frozen=True)
class DiscoveredDevice:
    ip: str
    mac: str
    kind: str
    phone_number: str | None = None
    port: int = 0

    def target(self) -> Target:
        return Target(self.ip, self.port, self.mac, self.phone_number)


def discover(source) -> list[DiscoveredDevice]:
    """Devices currently up. ``source`` is an inventory object or a ``(host, port)`` of its server."""
    if isinstance(source, tuple):
        source = RemoteInventory(*source)
    try:
        entries = source.list()
    except OSError as exc:
        raise InventoryUnreachable(f"inventory not reachable: {exc}") from exc
    return [DiscoveredDevice(e.ip, e.mac, e.kind, e.phone_number, e.port) for e in entries]
