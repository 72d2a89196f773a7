"""VoIP desk phone: a pure SIP state machine plus the socket service around it.

The machine only looks at the To number of a request before acting on it, so
a replayed INVITE rings the phone as well as the original did. Enough rings
inside the crash window knock the phone over; it comes back after a reboot.
"""

from __future__ import annotations

import logging
import random
import socket
import threading
import time
import zlib
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from jacklab.simdevices.audio import ToneSpec, phone_call_audio
from jacklab.simdevices.config import PhoneConfig
from jacklab.simdevices.inventory import DeviceEntry
from jacklab.simdevices.netutil import bind_socket, mac_for_ip
from jacklab.simdevices.network import Network, send_udp
from jacklab.wirecodec import MalformedMessage, SipMessage, parse_sip, serialize_sip
from jacklab.wirecodec.sip import make_sdp, read_sdp

log = logging.getLogger(__name__)

IDLE = "IDLE"
CALLING = "CALLING"
RINGING = "RINGING"
IN_CALL = "IN_CALL"
CRASHED = "CRASHED"
REBOOTING = "REBOOTING"
STATES = (IDLE, CALLING, RINGING, IN_CALL, CRASHED, REBOOTING)

_DIALOG_HEADERS = ("via", "from", "to", "call-id", "cseq")


@dataclass(frozen=True)
class PhoneCounters:
    invites_seen: int = 0
    invites_ignored: int = 0
    invites_accepted: int = 0
    rings: int = 0
    crashes: int = 0
    reboots: int = 0
    malformed: int = 0
    other_ignored: int = 0

    def bump(self, **deltas: int) -> PhoneCounters:
        return replace(self, **{k: getattr(self, k) + v for k, v in deltas.items()})


@dataclass(frozen=True)
class CallLeg:
    call_id: str
    role: str  # "caller" or "callee"
    peer_number: str
    invite: SipMessage
    remote_rtp: tuple[str, int] | None = None
    local_rtp_port: int | None = None
    confirmed: bool = False


@dataclass(frozen=True)
class PhoneState:
    phone_number: str
    device_id: str
    ip: str
    mac: str
    sip_port: int = 5060
    state: str = IDLE
    ring_events: tuple[float, ...] = ()
    crash_threshold: int = 10
    window: float = 2.0
    reboot_delay: float = 5.0
    ring_timeout: float = 10.0
    since: float = 0.0
    call: CallLeg | None = None
    counters: PhoneCounters = field(default_factory=PhoneCounters)

    @classmethod
    def from_config(cls, cfg: PhoneConfig, now: float = 0.0) -> PhoneState:
        return cls(
            phone_number=cfg.number,
            device_id=cfg.device_id,
            ip=cfg.host,
            mac=cfg.mac or mac_for_ip(cfg.host),
            sip_port=cfg.sip_port,
            crash_threshold=cfg.crash_threshold,
            window=cfg.window,
            reboot_delay=cfg.reboot_delay,
            ring_timeout=cfg.ring_timeout,
            since=now,
        )

    @property
    def contact(self) -> str:
        return f"<sip:{self.phone_number}@{self.ip}:{self.sip_port}>"

    def moved(self, state: str, now: float, **changes) -> PhoneState:
        return replace(self, state=state, since=now, **changes)


def _reply(phone: PhoneState, req: SipMessage, code: int, body: bytes = b"") -> SipMessage:
    headers = [(n, v) for n, v in req.headers if n.lower() in _DIALOG_HEADERS]
    if code != 100:
        headers.append(("Contact", phone.contact))
    if body:
        headers.append(("Content-Type", "application/sdp"))
    return SipMessage.response(code, headers, body)


def _in_dialog(phone: PhoneState, leg: CallLeg, method: str, cseq: int) -> SipMessage:
    """A request inside ``leg`` sent from this phone (ACK or BYE)."""
    invite = leg.invite
    if leg.role == "caller":
        from_, to = invite.header("From"), invite.header("To")
    else:
        from_, to = invite.header("To"), invite.header("From")
    host = (invite.request_uri or "").partition("@")[2] or phone.ip
    uri = f"sip:{leg.peer_number}@{host}"
    headers = [
        ("Via", f"SIP/2.0/UDP {phone.ip}:{phone.sip_port}"),
        ("From", from_ or ""),
        ("To", to or ""),
        ("Call-ID", leg.call_id),
        ("CSeq", f"{cseq} {method}"),
        ("Contact", phone.contact),
    ]
    return SipMessage.request(method, uri, headers)


def _on_invite(phone: PhoneState, pkt: SipMessage, now: float) -> tuple[PhoneState, list[SipMessage]]:
    counters = phone.counters.bump(invites_seen=1)
    if phone.state in (CRASHED, REBOOTING) or pkt.to_number != phone.phone_number:
        return replace(phone, counters=counters.bump(invites_ignored=1)), []

    counters = counters.bump(invites_accepted=1)
    events = tuple(t for t in phone.ring_events if now - t < phone.window) + (now,)
    if len(events) > phone.crash_threshold:
        crashed = phone.moved(CRASHED, now, ring_events=events, call=None, counters=counters.bump(crashes=1))
        return crashed, []

    replies = [_reply(phone, pkt, 100), _reply(phone, pkt, 180)]
    counters = counters.bump(rings=1)
    if phone.state == IDLE or phone.state == RINGING:
        sdp = read_sdp(pkt.body)
        leg = CallLeg(pkt.call_id, "callee", pkt.from_number or "", pkt, (sdp.ip, sdp.port) if sdp else None)
        # a repeated INVITE restarts the ring timer
        return phone.moved(RINGING, now, ring_events=events, call=leg, counters=counters), replies
    # busy with another call: ring without dropping it
    return replace(phone, ring_events=events, counters=counters), replies


def _matches_call(phone: PhoneState, pkt: SipMessage) -> bool:
    return phone.call is not None and pkt.call_id == phone.call.call_id


def phone_on_packet(phone: PhoneState, pkt: SipMessage, now: float) -> tuple[PhoneState, list[SipMessage]]:
    """Apply one SIP message; returns the new state and replies for the sender.

    Defined for every (state, message) pair. Anything without an effect is
    counted in ``other_ignored`` (or ``invites_ignored`` for INVITEs).
    """
    if pkt.is_request and pkt.method == "INVITE":
        return _on_invite(phone, pkt, now)

    ignored = replace(phone, counters=phone.counters.bump(other_ignored=1))
    if phone.state in (CRASHED, REBOOTING):
        return ignored, []

    if pkt.is_request:
        if pkt.to_number != phone.phone_number or not _matches_call(phone, pkt):
            return ignored, []
        if pkt.method == "BYE" and phone.state in (RINGING, IN_CALL, CALLING):
            return phone.moved(IDLE, now, call=None), [_reply(phone, pkt, 200)]
        if pkt.method == "ACK" and phone.state == IN_CALL and phone.call.role == "callee":
            return replace(phone, call=replace(phone.call, confirmed=True)), []
        return ignored, []

    # responses come back to the caller, so the From number is ours
    if pkt.from_number != phone.phone_number or not _matches_call(phone, pkt):
        return ignored, []
    if phone.state == CALLING and pkt.status_code == 200 and pkt.cseq_method == "INVITE":
        sdp = read_sdp(pkt.body)
        leg = replace(phone.call, remote_rtp=(sdp.ip, sdp.port) if sdp else None, confirmed=True)
        return phone.moved(IN_CALL, now, call=leg), [_in_dialog(phone, leg, "ACK", 1)]
    if phone.state == CALLING and pkt.status_code in (100, 180):
        return phone, []
    return ignored, []


def phone_on_datagram(phone: PhoneState, raw: bytes, now: float) -> tuple[PhoneState, list[SipMessage]]:
    try:
        pkt = parse_sip(raw)
    except MalformedMessage:
        return replace(phone, counters=phone.counters.bump(malformed=1)), []
    return phone_on_packet(phone, pkt, now)


def phone_tick(phone: PhoneState, now: float) -> PhoneState:
    """Advance timers: ring timeout, reboot after a crash, boot completion."""
    if phone.state == RINGING and now - phone.since >= phone.ring_timeout:
        return phone.moved(IDLE, now, call=None)
    if phone.state == CRASHED and now - phone.since >= phone.reboot_delay:
        return phone.moved(REBOOTING, now, counters=phone.counters.bump(reboots=1))
    if phone.state == REBOOTING:
        return phone.moved(IDLE, now, ring_events=())
    return phone


def phone_dial(
    phone: PhoneState, callee: str, now: float, call_id: str, rtp_port: int, registrar_host: str
) -> tuple[PhoneState, SipMessage | None]:
    if phone.state != IDLE:
        return phone, None
    headers = [
        ("Via", f"SIP/2.0/UDP {phone.ip}:{phone.sip_port}"),
        ("From", f"<sip:{phone.phone_number}@{phone.ip}>"),
        ("To", f"<sip:{callee}@{registrar_host}>"),
        ("Call-ID", call_id),
        ("CSeq", "1 INVITE"),
        ("Contact", phone.contact),
        ("Content-Type", "application/sdp"),
    ]
    sdp = make_sdp(phone.ip, rtp_port, zlib.crc32(call_id.encode()))
    invite = SipMessage.request("INVITE", f"sip:{callee}@{registrar_host}", headers, sdp)
    leg = CallLeg(call_id, "caller", callee, invite, local_rtp_port=rtp_port)
    return phone.moved(CALLING, now, call=leg), invite


def phone_answer(phone: PhoneState, now: float, rtp_port: int) -> tuple[PhoneState, SipMessage | None]:
    if phone.state != RINGING or phone.call is None:
        return phone, None
    leg = replace(phone.call, local_rtp_port=rtp_port)
    ok = _reply(phone, leg.invite, 200, make_sdp(phone.ip, rtp_port, zlib.crc32(leg.call_id.encode())))
    return phone.moved(IN_CALL, now, call=leg), ok


def phone_hangup(phone: PhoneState, now: float) -> tuple[PhoneState, SipMessage | None]:
    if phone.state == RINGING:
        return phone.moved(IDLE, now, call=None), None
    if phone.state in (IN_CALL, CALLING) and phone.call is not None:
        return phone.moved(IDLE, now, call=None), _in_dialog(phone, phone.call, "BYE", 2)
    return phone, None


@dataclass
class AudioLeg:
    """RTP state of the current call as seen by the phone service."""

    ssrc: int = 0
    sent: int = 0
    samples: np.ndarray | None = None
    received: list[bytes] = field(default_factory=list)
    done: threading.Event = field(default_factory=threading.Event)


class PhoneService:
    def __init__(
        self,
        config: PhoneConfig,
        network: Network | None = None,
        inventory=None,
        rng: random.Random | None = None,
        audio_seconds: float = 0.0,
        realtime_audio: bool = True,
        clock=time.monotonic,
    ) -> None:
        self.config = config
        self.network = network
        self.inventory = inventory
        self.rng = rng or random.Random(config.number)
        self.audio_seconds = audio_seconds
        self.realtime_audio = realtime_audio
        self.tone = ToneSpec(config.tone_hz)
        self.clock = clock
        self.phone = PhoneState.from_config(config, clock())
        self.transitions: deque[tuple[float, str, str]] = deque(maxlen=1024)
        self.registered = threading.Event()
        self.audio: AudioLeg | None = None
        self.last_audio: AudioLeg | None = None
        self._lock = threading.RLock()
        self._running = threading.Event()
        self._sock: socket.socket | None = None
        self._port = config.sip_port
        self._rtp_sock: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._call_seq = 0

    @property
    def address(self) -> tuple[str, int]:
        return (self.config.host, self._port)

    @property
    def state(self) -> str:
        with self._lock:
            return self.phone.state

    @property
    def counters(self) -> PhoneCounters:
        with self._lock:
            return self.phone.counters

    def start(self) -> PhoneService:
        cfg = self.config
        self._sock = bind_socket(socket.SOCK_DGRAM, cfg.host, cfg.sip_port, cfg.unsafe_bind)
        self._port = self._sock.getsockname()[1]
        self._sock.settimeout(0.02)
        self._running.set()
        thread = threading.Thread(target=self._loop, name=f"phone-{cfg.number}", daemon=True)
        thread.start()
        self._threads.append(thread)
        if self.network is not None:
            self.network.register_mac(cfg.host, self.phone.mac)
        if self.inventory is not None:
            self.inventory.add(DeviceEntry("phone", cfg.host, self.address[1], self.phone.mac, cfg.number))
        return self

    def stop(self) -> None:
        if not self._running.is_set():
            return
        self._running.clear()
        if self.inventory is not None:
            try:
                self.inventory.remove(self.config.host, self.address[1])
            except OSError as exc:
                log.warning("could not deregister phone %s: %s", self.config.number, exc)
        for thread in self._threads:
            thread.join(timeout=3)
        self._close_rtp()
        self._sock.close()

    def __enter__(self) -> PhoneService:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _set(self, new: PhoneState, cause: str) -> None:
        old = self.phone
        self.phone = new
        if new.state != old.state:
            self.transitions.append((self.clock(), old.state, new.state))
            log.debug("phone %s: %s -> %s (%s)", new.phone_number, old.state, new.state, cause)
            if old.state in (IN_CALL, CALLING, RINGING) and new.state not in (IN_CALL, CALLING, RINGING):
                self._close_rtp()
        if new.state == IN_CALL and new.call and new.call.confirmed and self.audio is None:
            self._start_audio(new.call)

    def _send(self, msg: SipMessage, dst: tuple[str, int]) -> None:
        try:
            send_udp(self.network, self._sock, serialize_sip(msg), dst)
        except OSError as exc:
            log.debug("phone %s send to %s failed: %s", self.config.number, dst, exc)

    def _loop(self) -> None:
        while self._running.is_set():
            try:
                raw, src = self._sock.recvfrom(65535)
            except socket.timeout:
                raw = None
            except OSError:
                raw = None
                if not self._running.is_set():
                    return
            with self._lock:
                if raw is not None and not self._registrar_reply(raw):
                    new, replies = phone_on_datagram(self.phone, raw, self.clock())
                    # replies leave before any audio the new state starts
                    for reply in replies:
                        self._send(reply, src)
                    self._set(new, "packet")
                    if new.state == RINGING and self.config.auto_answer:
                        self._answer_locked()
                self._set(phone_tick(self.phone, self.clock()), "tick")

    def _registrar_reply(self, raw: bytes) -> bool:
        try:
            msg = parse_sip(raw)
        except MalformedMessage:
            return False
        if not msg.is_request and msg.cseq_method == "REGISTER":
            if msg.status_code == 200:
                self.registered.set()
            return True
        return False

    def register(self, timeout: float = 2.0) -> bool:
        reg = self.config.registrar
        if reg is None:
            raise ValueError(f"phone {self.config.number} has no registrar configured")
        cfg = self.config
        msg = SipMessage.request(
            "REGISTER",
            f"sip:{cfg.number}@{reg[0]}",
            [
                ("Via", f"SIP/2.0/UDP {cfg.host}:{self.address[1]}"),
                ("From", f"<sip:{cfg.number}@{reg[0]}>"),
                ("To", f"<sip:{cfg.number}@{reg[0]}>"),
                ("Call-ID", f"reg-{cfg.device_id}"),
                ("CSeq", "1 REGISTER"),
                ("Contact", f"<sip:{cfg.number}@{cfg.host}:{self.address[1]}>"),
                ("Authorization", f"Static id={cfg.device_id} password={cfg.password}"),
            ],
        )
        self.registered.clear()
        self._send(msg, reg)
        return self.registered.wait(timeout)

    def _bind_rtp(self) -> int:
        lo, hi = self.config.rtp_range
        for _ in range(4 * (hi - lo + 1)):
            port = self.rng.randint(lo, hi)
            try:
                self._rtp_sock = bind_socket(socket.SOCK_DGRAM, self.config.host, port, self.config.unsafe_bind)
                return port
            except OSError:
                continue
        raise OSError(f"no free RTP port in {lo}-{hi} on {self.config.host}")

    def dial(self, callee: str) -> bool:
        reg = self.config.registrar
        if reg is None:
            raise ValueError(f"phone {self.config.number} has no registrar configured")
        with self._lock:
            if self.phone.state != IDLE:
                return False
            self._call_seq += 1
            call_id = f"{self.rng.getrandbits(64):016x}-{self._call_seq}@{self.config.host}"
            port = self._bind_rtp()
            new, invite = phone_dial(self.phone, callee, self.clock(), call_id, port, reg[0])
            self._set(new, "dial")
            self._send(invite, reg)
            return True

    def answer(self) -> bool:
        with self._lock:
            return self._answer_locked()

    def _answer_locked(self) -> bool:
        if self.phone.state != RINGING or self.phone.call is None:
            return False
        dst = self._last_hop()
        port = self._bind_rtp()
        new, ok = phone_answer(self.phone, self.clock(), port)
        self._set(new, "answer")
        self._send(ok, dst)
        return True

    def hangup(self) -> bool:
        with self._lock:
            dst = self._last_hop()
            new, bye = phone_hangup(self.phone, self.clock())
            self._set(new, "hangup")
            if bye is not None:
                self._send(bye, dst)
            return bye is not None

    def _last_hop(self) -> tuple[str, int]:
        if self.config.registrar is not None:
            return self.config.registrar
        via = (self.phone.call.invite.header("Via") or "").split()[-1]
        host, _, port = via.partition(":")
        return (host, int(port or 5060))

    def _start_audio(self, leg: CallLeg) -> None:
        self.audio = self.last_audio = AudioLeg()
        rtp_sock = self._rtp_sock
        if rtp_sock is None:
            return
        rtp_sock.settimeout(0.05)
        receiver = threading.Thread(target=self._receive_rtp, args=(rtp_sock, self.audio), daemon=True)
        receiver.start()
        if leg.remote_rtp is None or self.audio_seconds <= 0:
            self.audio.done.set()
            return
        audio = self.audio
        rng = random.Random(self.rng.getrandbits(64))

        def run() -> None:
            try:
                result = phone_call_audio(
                    rtp_sock, leg.remote_rtp, self.audio_seconds, self.tone, self.network, rng,
                    realtime=self.realtime_audio, stop=lambda: self.audio is not audio,
                )
                audio.ssrc, audio.sent, audio.samples = result.ssrc, result.sent, result.samples
            except OSError as exc:
                log.debug("audio on phone %s stopped: %s", self.config.number, exc)
            finally:
                audio.done.set()

        threading.Thread(target=run, name=f"rtp-{self.config.number}", daemon=True).start()

    def _receive_rtp(self, sock: socket.socket, audio: AudioLeg) -> None:
        while self.audio is audio:
            try:
                data, _ = sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                return
            audio.received.append(data)

    def _close_rtp(self) -> None:
        self.audio = None
        if self._rtp_sock is not None:
            self._rtp_sock.close()
            self._rtp_sock = None

    def wait_state(self, state: str, timeout: float) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.state == state:
                return True
            time.sleep(0.01)
        return self.state == state

    def snapshot(self) -> dict:
        with self._lock:
            c = self.phone.counters
            return {"state": self.phone.state, **vars(c)}
