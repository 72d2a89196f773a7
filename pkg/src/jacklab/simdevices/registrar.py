"""Registrar/proxy that binds numbers to addresses and relays call signaling."""

from __future__ import annotations

import logging
import re
import socket
import threading
from dataclasses import dataclass

from jacklab.simdevices.config import RegistrarConfig
from jacklab.simdevices.errors import UnknownNumber
from jacklab.simdevices.inventory import DeviceEntry
from jacklab.simdevices.netutil import bind_socket, mac_for_ip
from jacklab.simdevices.network import Network, send_udp
from jacklab.wirecodec import MalformedMessage, SipMessage, parse_sip, serialize_sip

log = logging.getLogger(__name__)

_CONTACT = re.compile(r"sip:([^@;>\s]+)@([0-9.]+):([0-9]+)")
_PASSWORD = re.compile(r"password=(\S+)")

Address = tuple[str, int]


@dataclass(frozen=True)
class Binding:
    number: str
    address: Address
    device_id: str = ""


def _trying(msg: SipMessage) -> SipMessage:
    keep = ("via", "from", "to", "call-id", "cseq")
    return SipMessage.response(100, [(n, v) for n, v in msg.headers if n.lower() in keep])


class Registrar:
    """Routing logic without sockets: ``route`` maps one inbound message to outbound ones.

    Apart from the 100 Trying for an INVITE (and the 200 confirming a
    REGISTER), everything returned is a relay of the input itself.
    """

    def __init__(self, password: str = "testbed") -> None:
        self.password = password
        self.bindings: dict[str, Binding] = {}
        self.calls: dict[str, tuple[str, str]] = {}
        self.failures: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    def lookup(self, number: str | None) -> Address:
        with self._lock:
            binding = self.bindings.get(number or "")
        if binding is None:
            raise UnknownNumber(number)
        return binding.address

    def _fail(self, reason: str, msg: SipMessage) -> list:
        with self._lock:
            self.failures.append((reason, msg.call_id))
        log.info("registrar: %s (Call-ID %s)", reason, msg.call_id)
        return []

    def route(self, msg: SipMessage, src: Address | None = None) -> list[tuple[Address, SipMessage]]:
        if msg.is_request and msg.method == "REGISTER":
            return self._register(msg, src)
        if msg.is_request and msg.method == "INVITE":
            try:
                caller = self.lookup(msg.from_number)
            except UnknownNumber:
                return self._fail(f"UnknownNumber: unregistered caller {msg.from_number}", msg)
            try:
                callee = self.lookup(msg.to_number)
            except UnknownNumber:
                return self._fail(f"UnknownNumber: {msg.to_number}", msg)
            with self._lock:
                self.calls[msg.call_id] = (msg.from_number or "", msg.to_number or "")
            return [(caller, _trying(msg)), (callee, msg)]

        with self._lock:
            parties = self.calls.get(msg.call_id)
        if parties is None:
            return self._fail("no such call", msg)
        if msg.is_request:
            # in-dialog request: deliver to whoever did not send it
            target = msg.to_number if msg.to_number in parties else None
        else:
            if msg.status_code == 100:
                return []  # hop-by-hop; the caller already had ours
            target = msg.from_number if msg.from_number in parties else None
            if msg.status_code == 200 and msg.cseq_method == "BYE":
                with self._lock:
                    self.calls.pop(msg.call_id, None)
        try:
            return [(self.lookup(target), msg)]
        except UnknownNumber:
            return self._fail(f"UnknownNumber: {target}", msg)

    def _register(self, msg: SipMessage, src: Address | None) -> list[tuple[Address, SipMessage]]:
        match = _PASSWORD.search(msg.header("Authorization") or "")
        if match is None or match.group(1) != self.password:
            return self._fail(f"bad credentials for {msg.to_number}", msg)
        contact = _CONTACT.search(msg.header("Contact") or "")
        if contact is None:
            return self._fail("REGISTER without a usable Contact", msg)
        number = contact.group(1)
        address = (contact.group(2), int(contact.group(3)))
        with self._lock:
            self.bindings[number] = Binding(number, address)
        keep = ("via", "from", "to", "call-id", "cseq", "contact")
        ok = SipMessage.response(200, [(n, v) for n, v in msg.headers if n.lower() in keep])
        return [(src or address, ok)]


def registrar_route(registrar: Registrar, msg: SipMessage) -> list[tuple[Address, SipMessage]]:
    return registrar.route(msg)


class RegistrarService:
    def __init__(self, config: RegistrarConfig, network: Network | None = None, inventory=None) -> None:
        self.config = config
        self.network = network
        self.inventory = inventory
        self.registrar = Registrar(config.password)
        self.mac = mac_for_ip(config.host)
        self.malformed = 0
        self._sock: socket.socket | None = None
        self._port = config.port
        self._running = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> Address:
        return (self.config.host, self._port)

    def start(self) -> RegistrarService:
        cfg = self.config
        self._sock = bind_socket(socket.SOCK_DGRAM, cfg.host, cfg.port, cfg.unsafe_bind)
        self._port = self._sock.getsockname()[1]
        self._sock.settimeout(0.1)
        self._running.set()
        self._thread = threading.Thread(target=self._loop, name="registrar", daemon=True)
        self._thread.start()
        if self.network is not None:
            self.network.register_mac(cfg.host, self.mac)
        if self.inventory is not None:
            self.inventory.add(DeviceEntry("registrar", cfg.host, self.address[1], self.mac))
        return self

    def stop(self) -> None:
        if not self._running.is_set():
            return
        self._running.clear()
        if self.inventory is not None:
            try:
                self.inventory.remove(self.config.host, self.address[1])
            except OSError as exc:
                log.warning("could not deregister registrar: %s", exc)
        self._thread.join(timeout=2)
        self._sock.close()

    def __enter__(self) -> RegistrarService:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _loop(self) -> None:
        while self._running.is_set():
            try:
                raw, src = self._sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                msg = parse_sip(raw)
            except MalformedMessage:
                self.malformed += 1
                continue
            for dst, out in self.registrar.route(msg, src):
                try:
                    send_udp(self.network, self._sock, serialize_sip(out), dst)
                except OSError as exc:
                    log.debug("registrar send to %s failed: %s", dst, exc)
