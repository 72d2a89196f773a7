"""The simulated link between testbed devices.

Datagrams still travel through real loopback sockets; devices hand them to a
:class:`Network` first so that taps can record them and shields can divert
them, the in-process stand-in for a switch port mirror plus netfilter queues.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, replace
from typing import Callable, Protocol

from jacklab.simdevices.netutil import mac_for_ip
from jacklab.wirecodec import CaptureRecord, mac_bytes, write_capture

CORE = "core"


@dataclass(frozen=True)
class Verdict:
    """What a shield decided for one diverted packet.

    ``action`` is ``deliver`` (send on, possibly rewritten), ``drop``, or
    ``peer`` (send on through the named peer shield).
    """

    action: str
    record: CaptureRecord | None = None
    queue: int | None = None
    peer: str | None = None


class Shield(Protocol):
    name: str

    def guards(self, ip: str) -> bool: ...

    def process(self, rec: CaptureRecord) -> Verdict: ...


class Tap:
    """Records every packet seen on one segment, timestamped from tap creation."""

    def __init__(self, segment: str, clock: Callable[[], float]) -> None:
        self.segment = segment
        self._clock = clock
        self._start = clock()
        self._records: list[CaptureRecord] = []
        self._lock = threading.Lock()

    def observe(self, rec: CaptureRecord) -> None:
        with self._lock:
            ts = int((self._clock() - self._start) * 1_000_000)
            if self._records and ts < self._records[-1].ts_micros:
                ts = self._records[-1].ts_micros
            self._records.append(replace(rec, ts_micros=ts))

    def records(self) -> list[CaptureRecord]:
        with self._lock:
            return list(self._records)

    def clear(self) -> None:
        with self._lock:
            self._records.clear()

    def save(self, path) -> None:
        write_capture(path, self.records())

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


class Network:
    def __init__(self, clock: Callable[[], float] = time.monotonic) -> None:
        self.clock = clock
        self._taps: dict[str, list[Tap]] = {}
        self._shields: dict[str, Shield] = {}
        self._macs: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self.last_activity = clock()
        self.packets = 0

    def tap(self, segment: str = CORE) -> Tap:
        tap = Tap(segment, self.clock)
        with self._lock:
            self._taps.setdefault(segment, []).append(tap)
        return tap

    def remove_tap(self, tap: Tap) -> None:
        with self._lock:
            taps = self._taps.get(tap.segment, [])
            if tap in taps:
                taps.remove(tap)

    def register_mac(self, ip: str, mac: str) -> None:
        with self._lock:
            self._macs[ip] = mac_bytes(mac)

    def mac(self, ip: str) -> bytes:
        with self._lock:
            found = self._macs.get(ip)
        return found if found is not None else mac_bytes(mac_for_ip(ip))

    def attach_shield(self, shield: Shield) -> None:
        with self._lock:
            self._shields[shield.name] = shield

    def detach_shield(self, name: str) -> None:
        with self._lock:
            self._shields.pop(name, None)

    def shield(self, name: str) -> Shield | None:
        with self._lock:
            return self._shields.get(name)

    def _guard_of(self, ip: str) -> Shield | None:
        with self._lock:
            shields = list(self._shields.values())
        return next((s for s in shields if s.guards(ip)), None)

    def segment_of(self, ip: str) -> str:
        guard = self._guard_of(ip)
        return guard.name if guard else CORE

    def _emit(self, segment: str, rec: CaptureRecord) -> None:
        with self._lock:
            taps = list(self._taps.get(segment, ()))
            self.last_activity = self.clock()
            self.packets += 1
        for tap in taps:
            tap.observe(rec)

    def record(self, src: tuple[str, int], dst: tuple[str, int], transport: str, payload: bytes) -> CaptureRecord:
        return CaptureRecord(0, src, dst, self.mac(src[0]), self.mac(dst[0]), transport, payload)

    def send_udp(self, sock: socket.socket, payload: bytes, dst: tuple[str, int]) -> bool:
        """Carry one datagram across the testbed; False if a shield dropped it."""
        src = sock.getsockname()
        rec = self.record((src[0], src[1]), (dst[0], dst[1]), "udp", payload)
        outbound = self._guard_of(src[0])
        inbound = self._guard_of(dst[0])
        if outbound is not None and outbound is inbound:
            # both ends behind the same shield: it never sees the packet
            self._emit(outbound.name, rec)
            sock.sendto(rec.payload, rec.dst)
            return True

        if outbound is not None:
            self._emit(outbound.name, rec)
            verdict = outbound.process(rec)
            if verdict.action == "drop" or verdict.record is None:
                return False
            rec = verdict.record
            if verdict.action == "peer" and verdict.peer:
                inbound = self.shield(verdict.peer)
        self._emit(CORE, rec)
        if inbound is not None:
            verdict = inbound.process(rec)
            if verdict.action == "drop" or verdict.record is None:
                return False
            rec = verdict.record
            self._emit(inbound.name, rec)
        sock.sendto(rec.payload, rec.dst)
        return True

    def send_tcp(self, sock: socket.socket, payload: bytes) -> None:
        """Record a stream write on every segment it crosses, then send it."""
        src = sock.getsockname()
        dst = sock.getpeername()
        rec = self.record((src[0], src[1]), (dst[0], dst[1]), "tcp", payload)
        segments = [self.segment_of(src[0]), CORE, self.segment_of(dst[0])]
        for segment in dict.fromkeys(segments):
            self._emit(segment, rec)
        sock.sendall(payload)

    def idle_for(self) -> float:
        with self._lock:
            return self.clock() - self.last_activity


def send_udp(network: Network | None, sock: socket.socket, payload: bytes, dst: tuple[str, int]) -> bool:
    if network is None:
        sock.sendto(payload, dst)
        return True
    return network.send_udp(sock, payload, dst)


def send_tcp(network: Network | None, sock: socket.socket, payload: bytes) -> None:
    if network is None:
        sock.sendall(payload)
    else:
        network.send_tcp(sock, payload)
