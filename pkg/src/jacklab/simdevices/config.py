"""Device configuration: dataclasses plus the line-oriented ``key = value`` file format.

Example phone file::

    # desk phone
    number = 201
    id = SEP00AABB0201
    host = 127.0.20.1
    registrar = 127.0.30.1:5060
    crash_threshold = 10
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass

DEFAULT_RTP_RANGE = (16384, 16483)

# file keys that differ from the attribute name
_ALIASES = {"id": "device_id", "phone_number": "number"}


@dataclass(frozen=True)
class PrinterConfig:
    host: str = "127.0.10.1"
    data_port: int = 9100
    metadata_port: int = 65002
    trays: tuple[int, ...] = (150, 150, 150)
    model: str = "JL-9100 Simulated Laser"
    mac: str | None = None
    job_timeout: float = 10.0
    unsafe_bind: bool = False


@dataclass(frozen=True)
class PhoneConfig:
    number: str = "201"
    device_id: str = ""
    host: str = "127.0.20.1"
    sip_port: int = 5060
    registrar: tuple[str, int] | None = None
    password: str = "testbed"
    crash_threshold: int = 10
    window: float = 2.0
    reboot_delay: float = 5.0
    ring_timeout: float = 10.0
    rtp_range: tuple[int, int] = DEFAULT_RTP_RANGE
    mac: str | None = None
    auto_answer: bool = False
    tone_hz: float = 440.0
    unsafe_bind: bool = False

    def __post_init__(self) -> None:
        if not self.number:
            raise ValueError("a phone needs a number")
        if not self.device_id:
            object.__setattr__(self, "device_id", f"phone-{self.number}")
        lo, hi = self.rtp_range
        if not 0 < lo <= hi < 65536:
            raise ValueError(f"bad RTP range {lo}-{hi}")


@dataclass(frozen=True)
class RegistrarConfig:
    host: str = "127.0.30.1"
    port: int = 5060
    password: str = "testbed"
    unsafe_bind: bool = False


def _convert(raw: str, hint, key: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or origin is types.UnionType:
        inner = [a for a in args if a is not type(None)]
        if raw.lower() in ("", "none"):
            return None
        return _convert(raw, inner[0], key)
    if hint is bool:
        lowered = raw.lower()
        if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"{key}: expected a boolean, got {raw!r}")
        return lowered in ("1", "true", "yes", "on")
    if hint in (int, float, str):
        try:
            return hint(raw)
        except ValueError:
            raise ValueError(f"{key}: expected {hint.__name__}, got {raw!r}") from None
    if origin is tuple and args == (int, ...):
        return tuple(int(p) for p in raw.split(",") if p.strip())
    if origin is tuple and args == (int, int):
        lo, sep, hi = raw.partition("-")
        if not sep:
            raise ValueError(f"{key}: expected a range like 16384-16483, got {raw!r}")
        return (int(lo), int(hi))
    if origin is tuple and args == (str, int):
        host, sep, port = raw.rpartition(":")
        if not sep:
            raise ValueError(f"{key}: expected host:port, got {raw!r}")
        return (host, int(port))
    raise TypeError(f"no converter for {hint}")


def parse_pairs(text: str) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are skipped."""
    pairs = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq or not key.strip():
            raise ValueError(f"line {no}: expected key = value")
        pairs[key.strip().lower()] = value.strip()
    return pairs


def build_config(cls, pairs: dict[str, str]):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in pairs.items():
        name = _ALIASES.get(key, key)
        if name not in names:
            raise ValueError(f"unknown {cls.__name__} key {key!r}")
        kwargs[name] = _convert(value, hints[name], key)
    return cls(**kwargs)


def load_config(path: str | os.PathLike, cls):
    with open(path, encoding="utf-8") as fh:
        return build_config(cls, parse_pairs(fh.read()))
