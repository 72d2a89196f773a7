"""G.711 mu-law (PCMU) codec, 16-bit linear PCM on the wide side."""

from __future__ import annotations

import numpy as np

BIAS = 0x84
CLIP_14 = 8159
_SEGMENT_ENDS = np.array([0x3F, 0x7F, 0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF, 0x1FFF])
SILENCE = 0xFF


def _expand(code: int) -> int:
    u = ~code & 0xFF
    t = (((u & 0x0F) << 3) + BIAS) << ((u & 0x70) >> 4)
    return BIAS - t if u & 0x80 else t - BIAS


DECODE_TABLE = np.array([_expand(c) for c in range(256)], dtype=np.int16)


def ulaw_decode(data: bytes) -> np.ndarray:
    return DECODE_TABLE[np.frombuffer(data, dtype=np.uint8)]


def ulaw_encode(samples: np.ndarray) -> bytes:
    """CCITT reference quantizer, operating on the top 14 bits of each sample."""
    pcm = np.asarray(samples, dtype=np.int32) >> 2
    mask = np.where(pcm < 0, 0x7F, 0xFF)
    mag = np.minimum(np.abs(pcm), CLIP_14) + (BIAS >> 2)
    segment = np.searchsorted(_SEGMENT_ENDS, mag, side="left")
    code = np.where(segment >= 8, 0x7F, (segment << 4) | ((mag >> (segment + 1)) & 0x0F))
    return (code ^ mask).astype(np.uint8).tobytes()
