"""Ethernet/IPv4 framing of capture records, with real checksums.

Captures store transport payloads only; when a record has to look like a
packet on the wire (replay rewriting, shield queues) it is framed here.
"""

from __future__ import annotations

import ipaddress
import struct

from jacklab.wirecodec.capture import CaptureRecord
from jacklab.wirecodec.errors import CodecError, TooShort

ETH_LEN = 14
IP_LEN = 20
UDP_LEN = 8
TCP_LEN = 20
PROTO = {"udp": 17, "tcp": 6}
_TRANSPORT = {v: k for k, v in PROTO.items()}


def internet_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _pseudo_header(rec: CaptureRecord, length: int) -> bytes:
    return (
        ipaddress.IPv4Address(rec.src[0]).packed
        + ipaddress.IPv4Address(rec.dst[0]).packed
        + struct.pack("!BBH", 0, PROTO[rec.transport], length)
    )


def transport_segment(rec: CaptureRecord) -> bytes:
    """UDP datagram or TCP segment for ``rec`` with its checksum filled in."""
    if rec.transport == "udp":
        length = UDP_LEN + len(rec.payload)
        header = struct.pack("!HHHH", rec.sport, rec.dport, length, 0)
    else:
        length = TCP_LEN + len(rec.payload)
        header = struct.pack("!HHIIBBHHH", rec.sport, rec.dport, 0, 0, 5 << 4, 0x18, 0xFFFF, 0, 0)
    checksum = internet_checksum(_pseudo_header(rec, length) + header + rec.payload)
    if rec.transport == "udp" and checksum == 0:
        checksum = 0xFFFF
    offset = 6 if rec.transport == "udp" else 16
    return header[:offset] + struct.pack("!H", checksum) + header[offset + 2:] + rec.payload


def transport_checksum(rec: CaptureRecord) -> int:
    segment = transport_segment(rec)
    offset = 6 if rec.transport == "udp" else 16
    return struct.unpack_from("!H", segment, offset)[0]


def frame_record(rec: CaptureRecord, ident: int = 0) -> bytes:
    segment = transport_segment(rec)
    total = IP_LEN + len(segment)
    if total > 0xFFFF:
        raise CodecError(f"payload of {len(rec.payload)} bytes does not fit one IPv4 packet")
    ip = struct.pack(
        "!BBHHHBBH4s4s",
        0x45, 0, total, ident & 0xFFFF, 0x4000, 64, PROTO[rec.transport], 0,
        ipaddress.IPv4Address(rec.src[0]).packed, ipaddress.IPv4Address(rec.dst[0]).packed,
    )
    ip = ip[:10] + struct.pack("!H", internet_checksum(ip)) + ip[12:]
    eth = rec.dst_mac + rec.src_mac + b"\x08\x00"
    return eth + ip + segment


def parse_frame(frame: bytes, ts_micros: int = 0, verify: bool = True) -> CaptureRecord:
    """Inverse of :func:`frame_record`; ``verify`` checks both checksums."""
    if len(frame) < ETH_LEN + IP_LEN:
        raise TooShort(f"frame of {len(frame)} bytes")
    dst_mac, src_mac, ethertype = frame[:6], frame[6:12], frame[12:14]
    if ethertype != b"\x08\x00":
        raise CodecError("not an IPv4 frame")
    ip = frame[ETH_LEN:ETH_LEN + IP_LEN]
    vihl, _, total, _, _, _, proto, _, src_ip, dst_ip = struct.unpack("!BBHHHBBH4s4s", ip)
    if vihl != 0x45:
        raise CodecError("only option-less IPv4 headers are supported")
    if proto not in _TRANSPORT:
        raise CodecError(f"unsupported IP protocol {proto}")
    if len(frame) < ETH_LEN + total:
        raise TooShort("frame shorter than its IPv4 total length")
    if verify and internet_checksum(ip) != 0:
        raise CodecError("bad IPv4 header checksum")
    transport = _TRANSPORT[proto]
    segment = frame[ETH_LEN + IP_LEN:ETH_LEN + total]
    hlen = UDP_LEN if transport == "udp" else TCP_LEN
    if len(segment) < hlen:
        raise TooShort("truncated transport header")
    sport, dport = struct.unpack_from("!HH", segment)
    rec = CaptureRecord(
        ts_micros,
        (str(ipaddress.IPv4Address(src_ip)), sport),
        (str(ipaddress.IPv4Address(dst_ip)), dport),
        bytes(src_mac),
        bytes(dst_mac),
        transport,
        bytes(segment[hlen:]),
    )
    if verify and transport_segment(rec) != bytes(segment):
        raise CodecError(f"bad {transport} checksum")
    return rec
