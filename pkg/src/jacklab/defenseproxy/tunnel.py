"""Per-packet AES-256-GCM sealing of RTP datagrams between two shields."""

from __future__ import annotations

import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from jacklab.defenseproxy.errors import AuthenticationFailure, PayloadTooLarge

NONCE_LEN = 12
TAG_LEN = 16
EXPANSION = NONCE_LEN + TAG_LEN
MTU_BUDGET = 1400


@dataclass(frozen=True)
class TunnelConfig:
    shared_key: bytes
    peer: str = ""
    phone: tuple[str, int] = ("127.0.20.1", 5060)
    rtp_range: tuple[int, int] = (16384, 16483)
    max_plain_payload: int = MTU_BUDGET - EXPANSION

    def __post_init__(self) -> None:
        if len(self.shared_key) != 32:
            raise ValueError("the tunnel key must be exactly 256 bits")
        if self.max_plain_payload < 0 or self.max_plain_payload + EXPANSION > MTU_BUDGET:
            raise ValueError(f"max_plain_payload + {EXPANSION} must not exceed {MTU_BUDGET}")

    @property
    def aead(self) -> AESGCM:
        return AESGCM(self.shared_key)


def tunnel_encrypt(payload: bytes, cfg: TunnelConfig) -> bytes:
    """``nonce || ciphertext || tag`` under a fresh random nonce."""
    if len(payload) > cfg.max_plain_payload:
        raise PayloadTooLarge(f"{len(payload)} bytes exceeds the {cfg.max_plain_payload}-byte tunnel budget")
    nonce = os.urandom(NONCE_LEN)
    return nonce + cfg.aead.encrypt(nonce, payload, None)


def tunnel_decrypt(ciphertext: bytes, cfg: TunnelConfig) -> bytes:
    if len(ciphertext) < EXPANSION:
        raise AuthenticationFailure("ciphertext shorter than nonce and tag")
    try:
        return cfg.aead.decrypt(ciphertext[:NONCE_LEN], ciphertext[NONCE_LEN:], None)
    except InvalidTag:
        raise AuthenticationFailure("tunnel packet failed authentication") from None
