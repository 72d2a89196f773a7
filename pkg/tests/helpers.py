from __future__ import annotations

from jacklab.wirecodec import SipMessage
from jacklab.wirecodec.sip import make_sdp


def invite(to: str = "201", frm: str = "200", call_id: str = "c1@test", cseq: int = 1) -> SipMessage:
    return SipMessage.request(
        "INVITE",
        f"sip:{to}@127.0.30.1",
        [
            ("Via", "SIP/2.0/UDP 127.0.30.1:5060"),
            ("From", f"<sip:{frm}@127.0.20.9>"),
            ("To", f"<sip:{to}@127.0.30.1>"),
            ("Call-ID", call_id),
            ("CSeq", f"{cseq} INVITE"),
            ("Contact", f"<sip:{frm}@127.0.20.9:5060>"),
            ("Content-Type", "application/sdp"),
        ],
        make_sdp("127.0.20.9", 16400, 1),
    )


def request(method: str, to: str, frm: str, call_id: str = "c1@test") -> SipMessage:
    return SipMessage.request(
        method,
        f"sip:{to}@127.0.30.1",
        [
            ("Via", "SIP/2.0/UDP 127.0.30.1:5060"),
            ("From", f"<sip:{frm}@127.0.30.1>"),
            ("To", f"<sip:{to}@127.0.30.1>"),
            ("Call-ID", call_id),
            ("CSeq", f"2 {method}"),
        ],
    )


def response(code: int, frm: str, to: str, call_id: str = "c1@test", method: str = "INVITE", body=b"") -> SipMessage:
    return SipMessage.response(
        code,
        [
            ("Via", "SIP/2.0/UDP 127.0.30.1:5060"),
            ("From", f"<sip:{frm}@127.0.30.1>"),
            ("To", f"<sip:{to}@127.0.30.1>"),
            ("Call-ID", call_id),
            ("CSeq", f"1 {method}"),
        ],
        body,
    )
