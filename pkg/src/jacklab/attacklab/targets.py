"""Target lists, the allowlist guard, and flood plans."""

from __future__ import annotations

import ipaddress
import os
from dataclasses import dataclass

from jacklab.attacklab.errors import TargetNotAllowed


@dataclass(frozen=True)
class Target:
    ip: str
    port: int
    mac: str | None = None
    phone_number: str | None = None

    def line(self) -> str:
        return " ".join(str(p) for p in (self.ip, self.port, self.mac, self.phone_number) if p)


def parse_targets(text: str) -> list[Target]:
    """One ``ip port [mac] [number]`` per line; ``#`` starts a comment."""
    targets = []
    for no, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) < 2 or len(parts) > 4:
            raise ValueError(f"targets line {no}: expected 'ip port [mac] [number]'")
        try:
            ipaddress.IPv4Address(parts[0])
            port = int(parts[1])
        except ValueError:
            raise ValueError(f"targets line {no}: bad address {parts[0]} {parts[1]}") from None
        mac = number = None
        for extra in parts[2:]:
            if ":" in extra:
                mac = extra.lower()
            else:
                number = extra
        targets.append(Target(parts[0], port, mac, number))
    return targets


def load_targets(path: str | os.PathLike) -> list[Target]:
    with open(path, encoding="utf-8") as fh:
        return parse_targets(fh.read())


def load_allowlist(path: str | os.PathLike) -> list[ipaddress.IPv4Network]:
    nets = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                nets.append(ipaddress.IPv4Network(line, strict=False))
    return nets


def check_targets(targets, allowlist=None) -> None:
    """Refuse targets outside ``allowlist``; without one, only loopback is allowed."""
    for t in targets:
        ip = ipaddress.IPv4Address(t.ip)
        allowed = any(ip in net for net in allowlist) if allowlist is not None else ip.is_loopback
        if not allowed:
            raise TargetNotAllowed(f"{t.ip} is not in the target allowlist")


@dataclass(frozen=True)
class FloodPlan:
    targets: tuple[Target, ...]
    payload_source: str | None = None
    loops: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.loops < 0:
            raise ValueError("loops must be >= 0")


@dataclass
class TargetReport:
    target: Target
    attempted: int = 0
    completed: int = 0
    errors: int = 0
    rings_observed: int = 0
    final_state: str | None = None


@dataclass
class FloodReport:
    targets: list[TargetReport]
    elapsed: float = 0.0

    @property
    def attempted(self) -> int:
        return sum(t.attempted for t in self.targets)

    @property
    def completed(self) -> int:
        return sum(t.completed for t in self.targets)

    @property
    def errors(self) -> int:
        return sum(t.errors for t in self.targets)

    def lines(self) -> list[str]:
        out = [
            f"{t.target.ip}:{t.target.port} attempted={t.attempted} completed={t.completed} errors={t.errors}"
            + (f" rings={t.rings_observed}" if t.rings_observed else "")
            + (f" state={t.final_state}" if t.final_state else "")
            for t in self.targets
        ]
        out.append(f"total attempted={self.attempted} completed={self.completed} errors={self.errors}")
        return out
