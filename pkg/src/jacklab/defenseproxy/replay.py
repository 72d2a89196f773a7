"""Drop any packet whose exact payload bytes were already seen."""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from collections import OrderedDict

from jacklab.defenseproxy.errors import PersistenceFailure

log = logging.getLogger(__name__)

ACCEPT = "accept"
DROP = "drop"
DEFAULT_CAPACITY = 65536


class ReplayFilterState:
    """Bounded set of SHA-256 payload digests, oldest evicted first.

    With a ``persistence_path`` every accepted digest is appended as a hex
    line, and digests already in the file are loaded at start-up, so a
    restarted shield still recognises old packets.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, persistence_path: str | os.PathLike | None = None) -> None:
        if capacity < 1:
            raise ValueError("filter capacity must be at least 1")
        self.capacity = capacity
        self.persistence_path = persistence_path
        self.seen: OrderedDict[bytes, None] = OrderedDict()
        self.accepted = 0
        self.dropped = 0
        self.failure: PersistenceFailure | None = None
        self.lock = threading.Lock()
        self._log = None
        if persistence_path is not None:
            self._open_log(persistence_path)

    def _open_log(self, path) -> None:
        try:
            if os.path.exists(path):
                with open(path, encoding="ascii") as fh:
                    for line in fh:
                        line = line.strip()
                        if len(line) == 64:
                            self._remember(bytes.fromhex(line))
            self._log = open(path, "a", encoding="ascii")
        except (OSError, ValueError) as exc:
            self._degrade(exc)

    def _degrade(self, exc: Exception) -> None:
        self.failure = PersistenceFailure(f"replay filter persistence disabled: {exc}")
        log.warning("%s; continuing in memory", self.failure)
        if self._log is not None:
            try:
                self._log.close()
            except OSError:
                pass
        self._log = None

    def _remember(self, digest: bytes) -> None:
        self.seen[digest] = None
        self.seen.move_to_end(digest)
        while len(self.seen) > self.capacity:
            self.seen.popitem(last=False)

    def __contains__(self, payload: bytes) -> bool:
        return hashlib.sha256(payload).digest() in self.seen

    @property
    def persistence_failed(self) -> bool:
        return self.failure is not None

    @property
    def processed(self) -> int:
        return self.accepted + self.dropped

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None


def replay_filter(payload: bytes, state: ReplayFilterState) -> tuple[str, ReplayFilterState]:
    digest = hashlib.sha256(payload).digest()
    with state.lock:
        if digest in state.seen:
            state.dropped += 1
            return DROP, state
        state._remember(digest)
        state.accepted += 1
        if state._log is not None:
            try:
                state._log.write(digest.hex() + "\n")
                state._log.flush()
            except OSError as exc:
                state._degrade(exc)
    return ACCEPT, state
