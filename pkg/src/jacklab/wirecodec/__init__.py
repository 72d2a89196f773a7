"""Pure encoders and decoders for every byte format the testbed speaks."""

from jacklab.wirecodec.capture import (
    CaptureRecord,
    dumps_capture,
    loads_capture,
    mac_bytes,
    mac_text,
    read_capture,
    write_capture,
)
from jacklab.wirecodec.errors import (
    BadVersion,
    CodecError,
    CorruptCapture,
    MalformedMessage,
    NonMonotonic,
    TooShort,
    UnsupportedHeader,
)
from jacklab.wirecodec.frame import frame_record, internet_checksum, parse_frame, transport_checksum
from jacklab.wirecodec.g711 import ulaw_decode, ulaw_encode
from jacklab.wirecodec.printjob import (
    PrintJobMetadata,
    count_pages,
    format_metadata_record,
    parse_metadata_stream,
)
from jacklab.wirecodec.rtp import RtpPacket, decode_rtp, encode_rtp, unwrap_seq
from jacklab.wirecodec.sip import SipMessage, parse_sip, serialize_sip

__all__ = [
    "BadVersion",
    "CaptureRecord",
    "CodecError",
    "CorruptCapture",
    "MalformedMessage",
    "NonMonotonic",
    "PrintJobMetadata",
    "RtpPacket",
    "SipMessage",
    "TooShort",
    "UnsupportedHeader",
    "count_pages",
    "decode_rtp",
    "dumps_capture",
    "encode_rtp",
    "format_metadata_record",
    "frame_record",
    "internet_checksum",
    "loads_capture",
    "mac_bytes",
    "mac_text",
    "parse_frame",
    "parse_metadata_stream",
    "parse_sip",
    "read_capture",
    "serialize_sip",
    "transport_checksum",
    "ulaw_decode",
    "ulaw_encode",
    "unwrap_seq",
    "write_capture",
]
