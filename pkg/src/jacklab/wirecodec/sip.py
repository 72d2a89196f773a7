"""SIP subset codec: INVITE/ACK/BYE/REGISTER requests and 100/180/200 responses."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from jacklab.wirecodec.errors import MalformedMessage

METHODS = ("INVITE", "ACK", "BYE", "REGISTER")
REASONS = {100: "Trying", 180: "Ringing", 200: "OK"}
REQUIRED_HEADERS = ("From", "To", "Call-ID", "CSeq")
SIP_VERSION = "SIP/2.0"

_TOKEN = re.compile(r"[A-Za-z0-9!%'*+\-._`~]+")
_URI = re.compile(r"sip:[^@\s]+@\S+")
_SEPARATOR = re.compile(rb"\r?\n\r?\n")
_LINE_BREAK = re.compile(r"\r?\n")
_USER = re.compile(r"sip:([^@;>\s]+)@")
_DIGITS = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class SipMessage:
    kind: str
    headers: tuple[tuple[str, str], ...]
    body: bytes = b""
    method: str | None = None
    request_uri: str | None = None
    status_code: int | None = None
    reason: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "headers", tuple((n, v) for n, v in self.headers))
        if self.kind == "request":
            if self.method not in METHODS:
                raise MalformedMessage(f"unknown method {self.method!r}")
            if self.request_uri is None or not _URI.fullmatch(self.request_uri):
                raise MalformedMessage(f"bad request URI {self.request_uri!r}")
            if self.status_code is not None or self.reason is not None:
                raise MalformedMessage("request carries a status")
        elif self.kind == "response":
            if REASONS.get(self.status_code) != self.reason:
                raise MalformedMessage(f"unsupported status {self.status_code} {self.reason!r}")
            if self.method is not None or self.request_uri is not None:
                raise MalformedMessage("response carries a method")
        else:
            raise MalformedMessage(f"unknown kind {self.kind!r}")
        for name, value in self.headers:
            if not _TOKEN.fullmatch(name):
                raise MalformedMessage(f"bad header name {name!r}")
            if value != value.strip() or "\r" in value or "\n" in value:
                raise MalformedMessage(f"bad value for header {name}")
        for name in REQUIRED_HEADERS:
            if self.header(name) is None:
                raise MalformedMessage(f"missing {name} header")
        length = self.header("Content-Length")
        if length is None:
            raise MalformedMessage("missing Content-Length header")
        if not _DIGITS.fullmatch(length) or int(length) != len(self.body):
            raise MalformedMessage(f"Content-Length {length!r} does not match body of {len(self.body)} bytes")

    @classmethod
    def request(
        cls, method: str, uri: str, headers: list[tuple[str, str]], body: bytes = b""
    ) -> SipMessage:
        """Build a request, appending Content-Length for ``body``."""
        return cls("request", _with_length(headers, body), body, method=method, request_uri=uri)

    @classmethod
    def response(cls, status_code: int, headers: list[tuple[str, str]], body: bytes = b"") -> SipMessage:
        reason = REASONS.get(status_code)
        return cls("response", _with_length(headers, body), body, status_code=status_code, reason=reason)

    @property
    def is_request(self) -> bool:
        return self.kind == "request"

    def header(self, name: str) -> str | None:
        """First value of ``name``, matched case-insensitively."""
        lower = name.lower()
        for key, value in self.headers:
            if key.lower() == lower:
                return value
        return None

    @property
    def call_id(self) -> str:
        return self.header("Call-ID") or ""

    @property
    def cseq_method(self) -> str:
        parts = (self.header("CSeq") or "").split()
        return parts[1] if len(parts) > 1 else ""

    @property
    def to_number(self) -> str | None:
        return sip_user(self.header("To") or "")

    @property
    def from_number(self) -> str | None:
        return sip_user(self.header("From") or "")

    def label(self) -> str:
        """Short name used in flow traces, e.g. ``INVITE`` or ``180 Ringing``."""
        if self.is_request:
            return self.method or ""
        return f"{self.status_code} {self.reason}"


def sip_user(value: str) -> str | None:
    """User part of the first ``sip:user@host`` found in ``value``."""
    match = _USER.search(value)
    return match.group(1) if match else None


def _with_length(headers: list[tuple[str, str]], body: bytes) -> tuple[tuple[str, str], ...]:
    kept = [(n, v) for n, v in headers if n.lower() != "content-length"]
    kept.append(("Content-Length", str(len(body))))
    return tuple(kept)


def parse_sip(raw: bytes) -> SipMessage:
    """Parse one SIP message. Bare LF line endings are accepted.

    Bytes past Content-Length are discarded, as a UDP receiver would.
    """
    if not isinstance(raw, (bytes, bytearray)):
        raise MalformedMessage("SIP input must be bytes")
    raw = bytes(raw)
    sep = _SEPARATOR.search(raw)
    if sep is None:
        raise MalformedMessage("no blank line between headers and body")
    try:
        head = raw[: sep.start()].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedMessage("header section is not UTF-8") from exc
    rest = raw[sep.end():]
    lines = _LINE_BREAK.split(head)
    if any("\r" in line for line in lines):
        raise MalformedMessage("stray carriage return in header section")

    headers: list[tuple[str, str]] = []
    for line in lines[1:]:
        name, colon, value = line.partition(":")
        if not colon:
            raise MalformedMessage(f"header line without colon: {line!r}")
        headers.append((name.strip(), value.strip()))

    length_text = next((v for n, v in headers if n.lower() == "content-length"), None)
    if length_text is None or not _DIGITS.fullmatch(length_text):
        raise MalformedMessage("missing or invalid Content-Length")
    length = int(length_text)
    if len(rest) < length:
        raise MalformedMessage(f"body shorter than Content-Length ({len(rest)} < {length})")
    body = rest[:length]

    start = lines[0]
    if start.startswith(SIP_VERSION + " "):
        code_text, _, reason = start[len(SIP_VERSION) + 1:].partition(" ")
        if not _DIGITS.fullmatch(code_text):
            raise MalformedMessage(f"bad status line {start!r}")
        return SipMessage("response", tuple(headers), body, status_code=int(code_text), reason=reason)
    parts = start.split(" ")
    if len(parts) != 3 or parts[2] != SIP_VERSION:
        raise MalformedMessage(f"bad request line {start!r}")
    return SipMessage("request", tuple(headers), body, method=parts[0], request_uri=parts[1])


def serialize_sip(msg: SipMessage) -> bytes:
    if msg.is_request:
        start = f"{msg.method} {msg.request_uri} {SIP_VERSION}"
    else:
        start = f"{SIP_VERSION} {msg.status_code} {msg.reason}"
    lines = [start] + [f"{name}: {value}" for name, value in msg.headers]
    return ("\r\n".join(lines) + "\r\n\r\n").encode("utf-8") + msg.body


def replace_header(msg: SipMessage, name: str, value: str) -> SipMessage:
    """Copy of ``msg`` with the first ``name`` header set to ``value``."""
    lower = name.lower()
    headers = list(msg.headers)
    for i, (key, _) in enumerate(headers):
        if key.lower() == lower:
            headers[i] = (key, value)
            break
    else:
        headers.insert(len(headers) - 1, (name, value))
    return SipMessage(
        msg.kind, tuple(headers), msg.body, msg.method, msg.request_uri, msg.status_code, msg.reason
    )


@dataclass
class SdpInfo:
    """The two SDP facts a testbed phone needs: where to send audio."""

    ip: str
    port: int
    payload_types: list[int] = field(default_factory=list)


def make_sdp(ip: str, port: int, session_id: int) -> bytes:
    return (
        "v=0\r\n"
        f"o=- {session_id} {session_id} IN IP4 {ip}\r\n"
        "s=jacklab\r\n"
        f"c=IN IP4 {ip}\r\n"
        "t=0 0\r\n"
        f"m=audio {port} RTP/AVP 0\r\n"
        "a=rtpmap:0 PCMU/8000\r\n"
    ).encode("ascii")


def read_sdp(body: bytes) -> SdpInfo | None:
    """Pull the connection address and audio port out of an SDP body."""
    ip = None
    media = None
    for line in body.decode("utf-8", "replace").splitlines():
        if line.startswith("c=IN IP4 "):
            ip = line[len("c=IN IP4 "):].strip()
        elif line.startswith("m=audio "):
            media = line.split()
    if ip is None or media is None or len(media) < 2 or not _DIGITS.fullmatch(media[1]):
        return None
    return SdpInfo(ip, int(media[1]), [int(p) for p in media[3:] if _DIGITS.fullmatch(p)])
