"""Testbed device inventory, in-process or served over TCP.

Wire protocol (one command per connection, UTF-8 lines):

    LIST                              -> one "kind ip port mac [number]" line per device, then a blank line
    ADD kind ip port mac [number]     -> "OK"
    DEL ip port                       -> "OK"
"""

from __future__ import annotations

import ipaddress
import logging
import socket
import threading
from dataclasses import dataclass

from jacklab.simdevices.errors import PortInUse
from jacklab.simdevices.netutil import bind_socket

log = logging.getLogger(__name__)

KINDS = ("printer", "phone", "registrar")


@dataclass(frozen=True)
class DeviceEntry:
    kind: str
    ip: str
    port: int
    mac: str
    phone_number: str | None = None

    def line(self) -> str:
        parts = [self.kind, self.ip, str(self.port), self.mac]
        if self.phone_number:
            parts.append(self.phone_number)
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> DeviceEntry:
        parts = line.split()
        if len(parts) not in (4, 5) or parts[0] not in KINDS:
            raise ValueError(f"bad inventory line {line!r}")
        return cls(parts[0], parts[1], int(parts[2]), parts[3], parts[4] if len(parts) == 5 else None)


@dataclass(frozen=True)
class TestbedInventory:
    devices: tuple[DeviceEntry, ...]
    network: str

    __test__ = False  # not a pytest class despite the name


class Inventory:
    """Thread-safe registry of live devices keyed by (ip, port)."""

    def __init__(self, network: str = "127.0.0.0/8") -> None:
        self.network = str(ipaddress.ip_network(network))
        self._devices: dict[tuple[str, int], DeviceEntry] = {}
        self._lock = threading.Lock()

    def add(self, entry: DeviceEntry) -> None:
        if entry.kind == "phone" and not entry.phone_number:
            raise ValueError("phones need a phone number")
        with self._lock:
            key = (entry.ip, entry.port)
            if key in self._devices and self._devices[key] != entry:
                raise ValueError(f"{entry.ip}:{entry.port} already registered")
            self._devices[key] = entry

    def remove(self, ip: str, port: int) -> None:
        with self._lock:
            self._devices.pop((ip, port), None)

    def list(self) -> list[DeviceEntry]:
        with self._lock:
            return sorted(self._devices.values(), key=lambda e: (ipaddress.ip_address(e.ip), e.port))

    def snapshot(self) -> TestbedInventory:
        return TestbedInventory(tuple(self.list()), self.network)

    def mac_for(self, ip: str) -> str | None:
        with self._lock:
            for entry in self._devices.values():
                if entry.ip == ip:
                    return entry.mac
        return None


class RemoteInventory:
    """Client for :class:`InventoryServer` with the same add/remove/list surface."""

    def __init__(self, host: str, port: int, timeout: float = 2.0) -> None:
        self.address = (host, port)
        self.timeout = timeout

    def _call(self, command: str) -> list[str]:
        with socket.create_connection(self.address, timeout=self.timeout) as sock:
            sock.sendall(command.encode() + b"\n")
            sock.shutdown(socket.SHUT_WR)
            chunks = []
            while data := sock.recv(4096):
                chunks.append(data)
        return b"".join(chunks).decode().splitlines()

    def add(self, entry: DeviceEntry) -> None:
        reply = self._call("ADD " + entry.line())
        if reply[:1] != ["OK"]:
            raise ValueError(f"inventory refused {entry.line()!r}: {reply}")

    def remove(self, ip: str, port: int) -> None:
        self._call(f"DEL {ip} {port}")

    def list(self) -> list[DeviceEntry]:
        return [DeviceEntry.from_line(line) for line in self._call("LIST") if line.strip()]

    def mac_for(self, ip: str) -> str | None:
        return next((e.mac for e in self.list() if e.ip == ip), None)


class InventoryServer:
    def __init__(self, inventory: Inventory, host: str = "127.0.0.1", port: int = 0) -> None:
        self.inventory = inventory
        self._sock = bind_socket(socket.SOCK_STREAM, host, port)
        self._sock.listen(16)
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, name="inventory", daemon=True)

    def start(self) -> InventoryServer:
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)  # wakes a blocked accept
        except OSError:
            pass
        self._sock.close()
        self._thread.join(timeout=2)

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            with conn:
                conn.settimeout(2)
                try:
                    request = b""
                    while b"\n" not in request and (data := conn.recv(4096)):
                        request += data
                    conn.sendall(self._handle(request.decode("utf-8", "replace").strip()).encode())
                except OSError as exc:
                    log.debug("inventory connection failed: %s", exc)

    def _handle(self, command: str) -> str:
        verb, _, rest = command.partition(" ")
        try:
            if verb == "LIST":
                return "".join(e.line() + "\n" for e in self.inventory.list()) + "\n"
            if verb == "ADD":
                self.inventory.add(DeviceEntry.from_line(rest))
                return "OK\n"
            if verb == "DEL":
                ip, port = rest.split()
                self.inventory.remove(ip, int(port))
                return "OK\n"
        except ValueError as exc:
            return f"ERR {exc}\n"
        return "ERR unknown command\n"


__all__ = ["DeviceEntry", "Inventory", "InventoryServer", "PortInUse", "RemoteInventory", "TestbedInventory"]
