"""Test-tone generation and 20 ms PCMU packetization for call legs."""

from __future__ import annotations

import random
import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from jacklab.simdevices.network import Network, send_udp
from jacklab.wirecodec import RtpPacket, encode_rtp, ulaw_encode

SAMPLE_RATE = 8000
FRAME_SAMPLES = 160
FRAME_SECONDS = FRAME_SAMPLES / SAMPLE_RATE
PCMU = 0

_ssrc_lock = threading.Lock()
_ssrcs_in_use: set[int] = set()


@dataclass(frozen=True)
class ToneSpec:
    frequency: float = 440.0
    amplitude: float = 0.5
    sample_rate: int = SAMPLE_RATE


def generate_tone(spec: ToneSpec, n_samples: int) -> np.ndarray:
    t = np.arange(n_samples) / spec.sample_rate
    wave = spec.amplitude * 32767 * np.sin(2 * np.pi * spec.frequency * t)
    return np.round(wave).astype(np.int16)


def packet_count(duration: float) -> int:
    return max(0, round(duration / FRAME_SECONDS))


def packetize(samples: np.ndarray, ssrc: int, seq_start: int, ts_start: int = 0) -> list[RtpPacket]:
    """Split whole 160-sample frames into consecutive PCMU packets."""
    packets = []
    for i in range(len(samples) // FRAME_SAMPLES):
        frame = samples[i * FRAME_SAMPLES:(i + 1) * FRAME_SAMPLES]
        packets.append(
            RtpPacket(
                PCMU,
                (seq_start + i) % 65536,
                (ts_start + i * FRAME_SAMPLES) % 2**32,
                ssrc,
                ulaw_encode(frame),
                marker=i == 0,
            )
        )
    return packets


def allocate_ssrc(rng: random.Random) -> int:
    """Pick an SSRC no live leg in this process is using."""
    with _ssrc_lock:
        while True:
            ssrc = rng.getrandbits(32)
            if ssrc not in _ssrcs_in_use:
                _ssrcs_in_use.add(ssrc)
                return ssrc


def release_ssrc(ssrc: int) -> None:
    with _ssrc_lock:
        _ssrcs_in_use.discard(ssrc)


@dataclass(frozen=True)
class AudioResult:
    ssrc: int
    sent: int
    samples: np.ndarray
    packets: tuple[RtpPacket, ...]


def phone_call_audio(
    sock: socket.socket,
    peer: tuple[str, int],
    duration: float,
    tone: ToneSpec,
    network: Network | None = None,
    rng: random.Random | None = None,
    realtime: bool = True,
    stop: Callable[[], bool] | None = None,
) -> AudioResult:
    """Stream ``duration`` seconds of tone to ``peer`` from an already bound RTP socket."""
    rng = rng or random.Random()
    samples = generate_tone(tone, packet_count(duration) * FRAME_SAMPLES)
    ssrc = allocate_ssrc(rng)
    try:
        packets = packetize(samples, ssrc, rng.getrandbits(16))
        start = time.monotonic()
        sent = 0
        for i, pkt in enumerate(packets):
            if stop is not None and stop():
                break
            if realtime:
                delay = start + i * FRAME_SECONDS - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            send_udp(network, sock, encode_rtp(pkt), peer)
            sent += 1
    finally:
        release_ssrc(ssrc)
    return AudioResult(ssrc, sent, samples, tuple(packets))
