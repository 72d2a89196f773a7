"""The per-phone shield: SIP replay filtering plus the encrypted RTP tunnel.

Standalone shields speak a small datagram protocol on their queue socket,
one request per datagram:

    b"F" + frame   -> b"A" + frame (deliver), b"P" + frame (to the peer shield), or b"D" (drop)
    b"C"           -> counters as ``name value`` lines

Frames are Ethernet/IPv4/UDP images with valid checksums, like packets
handed to a userspace queue by the kernel.
"""

from __future__ import annotations

import logging
import secrets
import socket
import threading
from dataclasses import dataclass, replace

from jacklab.defenseproxy.errors import AuthenticationFailure, PayloadTooLarge
from jacklab.defenseproxy.replay import ACCEPT, DEFAULT_CAPACITY, ReplayFilterState, replay_filter
from jacklab.defenseproxy.rules import (
    INBOUND_RTP_QUEUE,
    OUTBOUND_RTP_QUEUE,
    SIP_QUEUE,
    classify,
    default_rules,
    validate_rules,
)
from jacklab.defenseproxy.tunnel import TunnelConfig, tunnel_decrypt, tunnel_encrypt
from jacklab.simdevices.config import build_config, parse_pairs
from jacklab.simdevices.netutil import bind_socket
from jacklab.simdevices.network import Verdict
from jacklab.wirecodec import CaptureRecord, CodecError, frame_record, parse_frame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShieldConfig:
    name: str = "shield"
    phone_ip: str = "127.0.20.1"
    phone_sip_port: int = 5060
    rtp_range: tuple[int, int] = (16384, 16483)
    peer_shield: str = ""
    key_hex: str = ""
    filter_capacity: int = DEFAULT_CAPACITY
    persistence_path: str | None = None
    listen: tuple[str, int] = ("127.0.40.1", 0)
    unsafe_bind: bool = False

    @property
    def key(self) -> bytes:
        if not self.key_hex:
            raise ValueError(f"shield {self.name} has no key_hex")
        return bytes.fromhex(self.key_hex)


def new_key_hex() -> str:
    return secrets.token_hex(32)


def load_shield_config(path) -> ShieldConfig:
    with open(path, encoding="utf-8") as fh:
        return build_config(ShieldConfig, parse_pairs(fh.read()))


@dataclass
class QueueCounters:
    received: int = 0
    delivered: int = 0
    dropped: int = 0
    auth_failed: int = 0


class Shield:
    """Decides the fate of every packet to or from one phone."""

    def __init__(self, config: ShieldConfig, rules=None) -> None:
        self.config = config
        self.name = config.name
        self.rules = validate_rules(rules) if rules is not None else default_rules(
            config.phone_ip, config.phone_sip_port, config.rtp_range
        )
        self.tunnel = TunnelConfig(
            config.key, config.peer_shield, (config.phone_ip, config.phone_sip_port), config.rtp_range
        )
        self.replay = ReplayFilterState(config.filter_capacity, config.persistence_path)
        self.queues = {q: QueueCounters() for q in (SIP_QUEUE, OUTBOUND_RTP_QUEUE, INBOUND_RTP_QUEUE)}
        self.passthrough = 0
        self._lock = threading.Lock()

    def guards(self, ip: str) -> bool:
        return ip == self.config.phone_ip

    def process(self, rec: CaptureRecord) -> Verdict:
        queue = classify(rec, self.rules)
        if queue is None:
            with self._lock:
                self.passthrough += 1
            return Verdict("deliver", rec)
        counters = self.queues[queue]
        with self._lock:
            counters.received += 1
        if queue == SIP_QUEUE:
            verdict, _ = replay_filter(rec.payload, self.replay)
            return self._settle(counters, Verdict("deliver", rec, queue) if verdict == ACCEPT else Verdict("drop", None, queue))
        if queue == OUTBOUND_RTP_QUEUE:
            try:
                sealed = tunnel_encrypt(rec.payload, self.tunnel)
            except PayloadTooLarge as exc:
                log.warning("%s: %s", self.name, exc)
                return self._settle(counters, Verdict("drop", None, queue))
            # same addresses as the original datagram, only the payload is sealed
            return self._settle(counters, Verdict("peer", replace(rec, payload=sealed), queue, self.config.peer_shield or None))
        try:
            plain = tunnel_decrypt(rec.payload, self.tunnel)
        except AuthenticationFailure:
            with self._lock:
                counters.auth_failed += 1
            return Verdict("drop", None, queue)
        return self._settle(counters, Verdict("deliver", replace(rec, payload=plain), queue))

    def _settle(self, counters: QueueCounters, verdict: Verdict) -> Verdict:
        with self._lock:
            if verdict.action == "drop":
                counters.dropped += 1
            else:
                counters.delivered += 1
        return verdict

    def counters(self) -> dict[str, int]:
        with self._lock:
            out = {}
            for q, c in self.queues.items():
                for field_name, value in vars(c).items():
                    out[f"queue{q}_{field_name}"] = value
            out["passthrough"] = self.passthrough
        out["replay_accepted"] = self.replay.accepted
        out["replay_dropped"] = self.replay.dropped
        return out

    def counters_text(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in self.counters().items())

    def close(self) -> None:
        self.replay.close()


def parse_counters(text: str) -> dict[str, int]:
    out = {}
    for line in text.splitlines():
        name, _, value = line.partition(" ")
        if name:
            out[name] = int(value)
    return out


class ShieldService:
    """A shield behind its queue socket, for running as its own process."""

    def __init__(self, shield: Shield) -> None:
        self.shield = shield
        host, port = shield.config.listen
        self._sock = bind_socket(socket.SOCK_DGRAM, host, port, shield.config.unsafe_bind)
        self._sock.settimeout(0.1)
        self.address = self._sock.getsockname()
        self.errors = 0
        self._running = threading.Event()
        self._thread = threading.Thread(target=self._loop, name=f"shield-{shield.name}", daemon=True)

    def start(self) -> ShieldService:
        self._running.set()
        self._thread.start()
        return self

    def stop(self) -> None:
        self._running.clear()
        if self._thread.is_alive():
            self._thread.join(timeout=2)
        self._sock.close()
        self.shield.close()

    def __enter__(self) -> ShieldService:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def serve_forever(self) -> None:
        self._running.set()
        self._loop()

    def handle(self, request: bytes) -> bytes:
        kind, body = request[:1], request[1:]
        if kind == b"C":
            return self.shield.counters_text().encode()
        if kind != b"F":
            self.errors += 1
            return b"E"
        try:
            rec = parse_frame(body)
        except CodecError:
            self.errors += 1
            return b"E"
        verdict = self.shield.process(rec)
        if verdict.action == "drop" or verdict.record is None:
            return b"D"
        tag = b"P" if verdict.action == "peer" else b"A"
        return tag + frame_record(verdict.record)

    def _loop(self) -> None:
        while self._running.is_set():
            try:
                request, src = self._sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                self._sock.sendto(self.handle(request), src)
            except OSError as exc:
                log.debug("shield reply to %s failed: %s", src, exc)


def shield_serve(config: ShieldConfig, rules=None) -> ShieldService:
    return ShieldService(Shield(config, rules)).start()


class RemoteShield:
    """Network-side stub that hands packets to a :class:`ShieldService` and waits for the verdict."""

    def __init__(self, name: str, phone_ip: str, address: tuple[str, int], peer: str | None = None, timeout: float = 1.0) -> None:
        self.name = name
        self.phone_ip = phone_ip
        self.address = address
        self.peer = peer
        self.timeout = timeout
        self._lock = threading.Lock()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.settimeout(timeout)

    def guards(self, ip: str) -> bool:
        return ip == self.phone_ip

    def _ask(self, request: bytes) -> bytes:
        with self._lock:
            self._sock.sendto(request, self.address)
            reply, _ = self._sock.recvfrom(65535)
        return reply

    def process(self, rec: CaptureRecord) -> Verdict:
        try:
            reply = self._ask(b"F" + frame_record(rec))
        except OSError as exc:
            log.warning("shield %s unreachable, dropping packet: %s", self.name, exc)
            return Verdict("drop")
        kind = reply[:1]
        if kind in (b"A", b"P"):
            out = parse_frame(reply[1:], rec.ts_micros)
            return Verdict("peer" if kind == b"P" else "deliver", out, peer=self.peer if kind == b"P" else None)
        return Verdict("drop")

    def counters(self) -> dict[str, int]:
        return parse_counters(self._ask(b"C").decode())

    def close(self) -> None:
        self._sock.close()
