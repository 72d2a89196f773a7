"""Which shield queue a packet belongs to."""

from __future__ import annotations

from dataclasses import dataclass

from jacklab.wirecodec import CaptureRecord

SIP_QUEUE = 1
OUTBOUND_RTP_QUEUE = 2
INBOUND_RTP_QUEUE = 3


@dataclass(frozen=True)
class QueueRule:
    """Match UDP traffic to (``direction == "to"``) or from the phone on a port range."""

    queue_id: int
    phone_ip: str
    direction: str
    port_lo: int
    port_hi: int
    transport: str = "udp"

    def __post_init__(self) -> None:
        if self.queue_id not in (1, 2, 3):
            raise ValueError(f"queue id must be 1, 2 or 3, not {self.queue_id}")
        if self.direction not in ("to", "from"):
            raise ValueError(f"direction must be 'to' or 'from', not {self.direction!r}")
        if not 0 <= self.port_lo <= self.port_hi <= 65535:
            raise ValueError(f"bad port range {self.port_lo}-{self.port_hi}")

    def matches(self, rec: CaptureRecord) -> bool:
        if rec.transport != self.transport:
            return False
        ip, port = rec.dst if self.direction == "to" else rec.src
        return ip == self.phone_ip and self.port_lo <= port <= self.port_hi

    def overlaps(self, other: QueueRule) -> bool:
        return (
            self.phone_ip == other.phone_ip
            and self.direction == other.direction
            and self.transport == other.transport
            and self.port_lo <= other.port_hi
            and other.port_lo <= self.port_hi
        )


def default_rules(phone_ip: str, sip_port: int = 5060, rtp_range: tuple[int, int] = (16384, 16483)) -> tuple[QueueRule, ...]:
    lo, hi = rtp_range
    return validate_rules(
        (
            QueueRule(SIP_QUEUE, phone_ip, "to", sip_port, sip_port),
            QueueRule(OUTBOUND_RTP_QUEUE, phone_ip, "from", lo, hi),
            QueueRule(INBOUND_RTP_QUEUE, phone_ip, "to", lo, hi),
        )
    )


def validate_rules(rules) -> tuple[QueueRule, ...]:
    rules = tuple(rules)
    for i, a in enumerate(rules):
        for b in rules[i + 1:]:
            if a.overlaps(b):
                raise ValueError(f"queue {a.queue_id} and queue {b.queue_id} rules overlap")
    return rules


def classify(rec: CaptureRecord, rules) -> int | None:
    """Queue id for ``rec``, or None when it should pass untouched."""
    for rule in rules:
        if rule.matches(rec):
            return rule.queue_id
    return None
