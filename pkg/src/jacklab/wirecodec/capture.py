"""Line-delimited capture files.

Layout: a ``#jacklab-capture v1`` header line, then one record per line with
tab-separated fields ``ts_micros, transport, src_ip:port, dst_ip:port,
src_mac, dst_mac, base64(payload)``.
"""

from __future__ import annotations

import base64
import binascii
import ipaddress
import os
import re
from dataclasses import dataclass
from typing import Iterable

from jacklab.wirecodec.errors import CorruptCapture, NonMonotonic

HEADER = "#jacklab-capture v1"
TRANSPORTS = ("tcp", "udp")

Address = tuple[str, int]

_MAC = re.compile(r"[0-9a-f]{2}(?::[0-9a-f]{2}){5}")
_INT = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class CaptureRecord:
    ts_micros: int
    src: Address
    dst: Address
    src_mac: bytes
    dst_mac: bytes
    transport: str
    payload: bytes

    def __post_init__(self) -> None:
        if self.ts_micros < 0:
            raise ValueError("negative timestamp")
        if self.transport not in TRANSPORTS:
            raise ValueError(f"unknown transport {self.transport!r}")
        for addr in (self.src, self.dst):
            _check_address(addr)
        if len(self.src_mac) != 6 or len(self.dst_mac) != 6:
            raise ValueError("MAC addresses are 6 bytes")

    @property
    def sport(self) -> int:
        return self.src[1]

    @property
    def dport(self) -> int:
        return self.dst[1]


def _check_address(addr: Address) -> None:
    ip, port = addr
    ipaddress.IPv4Address(ip)
    if not isinstance(port, int) or not 0 <= port <= 0xFFFF:
        raise ValueError(f"bad port {port!r}")


def mac_text(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def mac_bytes(text: str) -> bytes:
    if not _MAC.fullmatch(text.lower()):
        raise ValueError(f"bad MAC address {text!r}")
    return bytes(int(part, 16) for part in text.split(":"))


def format_record(rec: CaptureRecord) -> str:
    return "\t".join(
        (
            str(rec.ts_micros),
            rec.transport,
            f"{rec.src[0]}:{rec.src[1]}",
            f"{rec.dst[0]}:{rec.dst[1]}",
            mac_text(rec.src_mac),
            mac_text(rec.dst_mac),
            base64.b64encode(rec.payload).decode("ascii"),
        )
    )


def _parse_addr(text: str) -> Address:
    ip, colon, port = text.rpartition(":")
    if not colon or not _INT.fullmatch(port):
        raise ValueError(f"bad address {text!r}")
    if str(ipaddress.IPv4Address(ip)) != ip:
        raise ValueError(f"non-canonical address {ip!r}")
    return ip, int(port)


def parse_record(line: str, line_no: int = 0) -> CaptureRecord:
    fields = line.split("\t")
    if len(fields) != 7:
        raise CorruptCapture(line_no, f"expected 7 fields, got {len(fields)}")
    ts, transport, src, dst, smac, dmac, payload = fields
    try:
        if not _INT.fullmatch(ts):
            raise ValueError(f"bad timestamp {ts!r}")
        if not _MAC.fullmatch(smac) or not _MAC.fullmatch(dmac):
            raise ValueError("MAC addresses must be lowercase colon-separated hex")
        data = base64.b64decode(payload, validate=True)
        if base64.b64encode(data).decode("ascii") != payload:
            raise ValueError("non-canonical base64 payload")
        return CaptureRecord(
            int(ts), _parse_addr(src), _parse_addr(dst), mac_bytes(smac), mac_bytes(dmac), transport, data
        )
    except (ValueError, binascii.Error) as exc:
        raise CorruptCapture(line_no, str(exc)) from exc


def dumps_capture(records: Iterable[CaptureRecord]) -> str:
    lines = [HEADER]
    last = -1
    for rec in records:
        if rec.ts_micros < last:
            raise NonMonotonic(f"timestamp {rec.ts_micros} follows {last}")
        last = rec.ts_micros
        lines.append(format_record(rec))
    return "\n".join(lines) + "\n"


def loads_capture(text: str) -> list[CaptureRecord]:
    if text == "":
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != HEADER:
        raise CorruptCapture(1, f"missing {HEADER!r} header")
    records: list[CaptureRecord] = []
    for line_no, line in enumerate(lines[1:], start=2):
        rec = parse_record(line, line_no)
        if records and rec.ts_micros < records[-1].ts_micros:
            raise NonMonotonic(f"line {line_no}: timestamp {rec.ts_micros} follows {records[-1].ts_micros}")
        records.append(rec)
    return records


def write_capture(path: str | os.PathLike, records: Iterable[CaptureRecord]) -> None:
    text = dumps_capture(records)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_capture(path: str | os.PathLike) -> list[CaptureRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return loads_capture(fh.read())
