"""Rebuild listenable audio from RTP packets found in a capture."""

from __future__ import annotations

import logging
import os
import warnings
import wave
from dataclasses import dataclass

import numpy as np

from jacklab.attacklab.errors import UnknownPayloadType
from jacklab.wirecodec import CaptureRecord, CodecError, decode_rtp, ulaw_decode, unwrap_seq

log = logging.getLogger(__name__)

SAMPLE_RATE = 8000
FRAME = 160
PCMU = 0
MIN_PACKETS = 2


@dataclass
class ReconstructedStream:
    ssrc: int
    src: tuple[str, int]
    dst: tuple[str, int]
    samples: np.ndarray
    gap_count: int
    packets: int
    path: str | None = None

    @property
    def direction(self) -> str:
        return f"{self.src[0]}:{self.src[1]}->{self.dst[0]}:{self.dst[1]}"


def _candidates(capture, rtp_range):
    lo, hi = rtp_range
    streams: dict[tuple, list] = {}
    for rec in capture:
        if rec.transport != "udp" or not (lo <= rec.sport <= hi or lo <= rec.dport <= hi):
            continue
        try:
            pkt = decode_rtp(rec.payload)
        except CodecError:
            continue
        streams.setdefault((pkt.ssrc, rec.src, rec.dst), []).append(pkt)
    return streams


def reconstruct(packets) -> tuple[np.ndarray, int]:
    """PCM for packets of one stream, ordered by extended sequence number.

    Each missing packet becomes 160 samples of silence; repeated sequence
    numbers keep their first copy.
    """
    ext = unwrap_seq(p.seq for p in packets)
    by_seq = {}
    for e, p in zip(ext, packets):
        by_seq.setdefault(e, p)
    first, last = min(by_seq), max(by_seq)
    frames = []
    for e in range(first, last + 1):
        pkt = by_seq.get(e)
        if pkt is None:
            frames.append(np.zeros(FRAME, dtype=np.int16))
        else:
            pcm = ulaw_decode(pkt.payload[:FRAME])
            if len(pcm) < FRAME:
                pcm = np.concatenate([pcm, np.zeros(FRAME - len(pcm), dtype=np.int16)])
            frames.append(pcm)
    return np.concatenate(frames), (last - first + 1) - len(by_seq)


def write_wav(path: str | os.PathLike, samples: np.ndarray, rate: int = SAMPLE_RATE) -> None:
    with wave.open(os.fspath(path), "wb") as out:
        out.setnchannels(1)
        out.setsampwidth(2)
        out.setframerate(rate)
        out.writeframes(samples.astype("<i2").tobytes())


def eavesdrop_rtp(
    capture: list[CaptureRecord], out_dir: str | os.PathLike | None = None, rtp_range=(16384, 16483)
) -> list[ReconstructedStream]:
    """One stream per (ssrc, src, dst); payload type 0 only.

    Streams of fewer than two packets are not reported: a lone datagram
    whose header happens to parse is not a call.
    """
    result = []
    for (ssrc, src, dst), packets in _candidates(capture, rtp_range).items():
        if len(packets) < MIN_PACKETS:
            continue
        types = {p.payload_type for p in packets}
        if types != {PCMU}:
            warnings.warn(UnknownPayloadType(f"stream {ssrc:08x} uses payload type {sorted(types)}; skipped"))
            continue
        samples, gaps = reconstruct(packets)
        stream = ReconstructedStream(ssrc, src, dst, samples, gaps, len(packets))
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            name = f"{ssrc:08x}_{src[0]}_{src[1]}_to_{dst[0]}_{dst[1]}.wav"
            stream.path = os.path.join(out_dir, name)
            write_wav(stream.path, samples)
        result.append(stream)
    return result


def normalized_cross_correlation(a, b, max_lag: int = 0) -> float:
    """Peak zero-mean normalized correlation of two signals over lags up to ``max_lag``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    best = -1.0
    for lag in range(-max_lag, max_lag + 1):
        x, y = (a[lag:], b) if lag >= 0 else (a, b[-lag:])
        n = min(len(x), len(y))
        if n == 0:
            continue
        x = x[:n] - x[:n].mean()
        y = y[:n] - y[:n].mean()
        denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
        if denom:
            best = max(best, float(np.dot(x, y) / denom))
    return best
