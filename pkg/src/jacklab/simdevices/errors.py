class PortInUse(OSError):
    def __init__(self, host: str, port: int, kind: str = "") -> None:
        super().__init__(f"{kind + ' ' if kind else ''}port {host}:{port} is already in use")
        self.host = host
        self.port = port


class UnsafeBind(PermissionError):
    """Refused to bind a non-loopback address without explicit opt-in."""


class UnknownNumber(LookupError):
    pass
