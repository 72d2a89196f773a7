class CodecError(ValueError):
    """Input bytes are not valid for the codec that was asked to read them."""


class MalformedMessage(CodecError):
    pass


class BadVersion(CodecError):
    pass


class TooShort(CodecError):
    pass


class UnsupportedHeader(CodecError):
    """RTP header uses padding, extensions or CSRC lists, which the testbed never emits."""


class CorruptCapture(CodecError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"capture line {line_no}: {reason}")
        self.line_no = line_no


class NonMonotonic(CodecError):
    pass
