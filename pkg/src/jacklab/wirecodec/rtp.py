"""Fixed 12-byte RTP header codec and sequence-number unwrapping."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable

from jacklab.wirecodec.errors import BadVersion, TooShort, UnsupportedHeader

HEADER_LEN = 12
_HEADER = struct.Struct("!BBHII")
SEQ_MOD = 1 << 16


@dataclass(frozen=True)
class RtpPacket:
    payload_type: int
    seq: int
    timestamp: int
    ssrc: int
    payload: bytes = b""
    marker: bool = False
    version: int = 2

    def __post_init__(self) -> None:
        if self.version != 2:
            raise BadVersion(f"RTP version {self.version}")
        if not 0 <= self.payload_type < 128:
            raise ValueError(f"payload type {self.payload_type} out of range")
        if not 0 <= self.seq < SEQ_MOD:
            raise ValueError(f"sequence number {self.seq} out of range")
        if not 0 <= self.timestamp < 1 << 32 or not 0 <= self.ssrc < 1 << 32:
            raise ValueError("timestamp and ssrc are 32-bit unsigned")


def encode_rtp(pkt: RtpPacket) -> bytes:
    first = pkt.version << 6
    second = (0x80 if pkt.marker else 0) | pkt.payload_type
    return _HEADER.pack(first, second, pkt.seq, pkt.timestamp, pkt.ssrc) + pkt.payload


def decode_rtp(raw: bytes) -> RtpPacket:
    if len(raw) < HEADER_LEN:
        raise TooShort(f"{len(raw)} bytes, need {HEADER_LEN}")
    first, second, seq, timestamp, ssrc = _HEADER.unpack_from(raw)
    version = first >> 6
    if version != 2:
        raise BadVersion(f"RTP version {version}")
    if first & 0x3F:
        raise UnsupportedHeader(f"first header byte {first:#04x} sets padding, extension or CSRC bits")
    return RtpPacket(
        payload_type=second & 0x7F,
        seq=seq,
        timestamp=timestamp,
        ssrc=ssrc,
        payload=bytes(raw[HEADER_LEN:]),
        marker=bool(second & 0x80),
    )


def unwrap_seq(seqs: Iterable[int]) -> list[int]:
    """Extend 16-bit sequence numbers to monotone-comparable integers.

    Each value is placed at the offset from its predecessor that is smallest
    in magnitude, so a backwards jump of more than 2**15 counts as a wrap.
    """
    out: list[int] = []
    last = None
    for seq in seqs:
        if last is None:
            last = seq
        else:
            delta = (seq - last) % SEQ_MOD
            if delta >= SEQ_MOD // 2:
                delta -= SEQ_MOD
            last += delta
        out.append(last)
    return out
