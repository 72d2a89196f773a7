class InventoryUnreachable(ConnectionError):
    pass


class NotAnInvite(ValueError):
    pass


class TargetNotAllowed(PermissionError):
    """A flood target is outside the declared allowlist."""


class UnknownPayloadType(UserWarning):
    """An RTP stream uses a payload type other than PCMU; it is skipped."""
