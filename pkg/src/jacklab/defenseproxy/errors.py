class AuthenticationFailure(ValueError):
    """Ciphertext failed authentication: tampered, truncated, or the wrong key."""


class PayloadTooLarge(ValueError):
    pass


class PersistenceFailure(OSError):
    """The replay filter could not write its digest log; it keeps running in memory."""
