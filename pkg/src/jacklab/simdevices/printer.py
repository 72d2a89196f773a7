"""Simulated raw-port network printer with paper trays and a job-metadata feed."""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass, field

from jacklab.simdevices.config import PrinterConfig
from jacklab.simdevices.inventory import DeviceEntry
from jacklab.simdevices.netutil import bind_socket, mac_for_ip
from jacklab.simdevices.network import Network, send_tcp
from jacklab.wirecodec import PrintJobMetadata, format_metadata_record
from jacklab.wirecodec.printjob import count_pages, read_job_header, split_sheets

log = logging.getLogger(__name__)

READY = "READY"
PRINTING = "PRINTING"
OUT_OF_PAPER = "OUT_OF_PAPER"

PRINTED = "PRINTED"
PARTIAL = "PARTIAL"
REJECTED = "REJECTED"


@dataclass
class Tray:
    capacity: int
    remaining: int

    def __post_init__(self) -> None:
        if not 0 <= self.remaining <= self.capacity:
            raise ValueError(f"tray remaining {self.remaining} outside 0..{self.capacity}")


@dataclass(frozen=True)
class PrintJob:
    job_id: int
    source: tuple[str, int]
    raw: bytes
    pages: int
    metadata: PrintJobMetadata


@dataclass(frozen=True)
class JobLogEntry:
    job_id: int
    source: tuple[str, int]
    pages_requested: int
    pages_printed: int
    outcome: str
    sheets: tuple[bytes, ...] = ()
    metadata: PrintJobMetadata | None = None


@dataclass
class PrinterState:
    """Tray accounting plus the job log. Not locked; the owning service serializes access."""

    trays: list[Tray]
    model: str = "JL-9100 Simulated Laser"
    job_log: list[JobLogEntry] = field(default_factory=list)
    active_jobs: int = 0

    @classmethod
    def with_trays(cls, capacities, model: str | None = None) -> PrinterState:
        trays = [Tray(int(c), int(c)) for c in capacities]
        if not trays or max(t.capacity for t in trays) < 1:
            raise ValueError("a printer needs at least one tray holding a sheet")
        return cls(trays) if model is None else cls(trays, model)

    @property
    def remaining(self) -> int:
        return sum(t.remaining for t in self.trays)

    @property
    def capacity(self) -> int:
        return sum(t.capacity for t in self.trays)

    @property
    def status(self) -> str:
        if self.remaining == 0:
            return OUT_OF_PAPER
        return PRINTING if self.active_jobs else READY

    @property
    def pages_printed(self) -> int:
        return sum(e.pages_printed for e in self.job_log)

    def next_job_id(self) -> int:
        return len(self.job_log) + 1

    def print_job(self, job: PrintJob) -> JobLogEntry:
        """Print what the trays allow, taking sheets from trays in order."""
        wanted = job.pages
        for tray in self.trays:
            take = min(tray.remaining, wanted)
            tray.remaining -= take
            wanted -= take
        printed = job.pages - wanted
        if printed == job.pages:
            outcome = PRINTED
        elif printed:
            outcome = PARTIAL
        else:
            outcome = REJECTED
        entry = JobLogEntry(
            job.job_id, job.source, job.pages, printed, outcome, tuple(split_sheets(job.raw)[:printed]), job.metadata
        )
        self.job_log.append(entry)
        return entry

    def refill(self, tray_index: int, sheets: int | None = None) -> None:
        tray = self.trays[tray_index]
        tray.remaining = tray.capacity if sheets is None else min(tray.capacity, tray.remaining + sheets)

    def counts(self) -> dict[str, int]:
        out = {PRINTED: 0, PARTIAL: 0, REJECTED: 0}
        for entry in self.job_log:
            out[entry.outcome] += 1
        return out


def job_metadata(raw: bytes, job_id: int, source: tuple[str, int], model: str) -> PrintJobMetadata:
    fields = read_job_header(raw)
    return PrintJobMetadata(
        username=fields.get("USERNAME") or "anonymous",
        userid=fields.get("USERID") or "0",
        hostid=fields.get("HOSTID") or source[0],
        jobname=fields.get("JOBNAME") or f"job-{job_id}",
        printer_model=model,
    )


class PrinterService:
    """Accepts one job per data connection and announces each job on the metadata port."""

    def __init__(self, config: PrinterConfig, network: Network | None = None, inventory=None) -> None:
        self.config = config
        self.network = network
        self.inventory = inventory
        self.state = PrinterState.with_trays(config.trays, config.model)
        self._lock = threading.Lock()
        self._idle = threading.Condition(self._lock)
        self._subscribers: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._workers: set[threading.Thread] = set()
        self._running = threading.Event()
        self._data: socket.socket | None = None
        self._meta: socket.socket | None = None
        self.mac = config.mac or mac_for_ip(config.host)
        self._ports = (config.data_port, config.metadata_port)

    @property
    def address(self) -> tuple[str, int]:
        return (self.config.host, self.data_port)

    @property
    def data_port(self) -> int:
        return self._ports[0]

    @property
    def metadata_port(self) -> int:
        return self._ports[1]

    def start(self) -> PrinterService:
        cfg = self.config
        self._data = bind_socket(socket.SOCK_STREAM, cfg.host, cfg.data_port, cfg.unsafe_bind)
        try:
            self._meta = bind_socket(socket.SOCK_STREAM, cfg.host, cfg.metadata_port, cfg.unsafe_bind)
        except OSError:
            self._data.close()
            raise
        self._ports = (self._data.getsockname()[1], self._meta.getsockname()[1])
        self._data.listen(128)
        self._meta.listen(16)
        self._running.set()
        for target, name in ((self._accept_jobs, "data"), (self._accept_subscribers, "meta")):
            thread = threading.Thread(target=target, name=f"printer-{cfg.host}-{name}", daemon=True)
            thread.start()
            self._threads.append(thread)
        if self.network is not None:
            self.network.register_mac(cfg.host, self.mac)
        if self.inventory is not None:
            self.inventory.add(DeviceEntry("printer", cfg.host, self.data_port, self.mac))
        log.info("printer %s listening on %s and %s", cfg.model, self.data_port, self.metadata_port)
        return self

    def stop(self) -> None:
        if not self._running.is_set():
            return
        self._running.clear()
        if self.inventory is not None:
            try:
                self.inventory.remove(self.config.host, self.data_port)
            except OSError as exc:
                log.warning("could not deregister printer: %s", exc)
        for sock in (self._data, self._meta):
            if sock is not None:
                _shutdown_close(sock)
        with self._lock:
            subscribers, self._subscribers = self._subscribers, []
            workers = list(self._workers)
        for conn in subscribers:
            _shutdown_close(conn)
        for thread in self._threads + workers:
            thread.join(timeout=2)

    def __enter__(self) -> PrinterService:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _accept_jobs(self) -> None:
        while self._running.is_set():
            try:
                conn, peer = self._data.accept()
            except OSError:
                return
            with self._lock:
                self.state.active_jobs += 1
                worker = threading.Thread(target=self._receive_job, args=(conn, peer), daemon=True)
                self._workers.add(worker)
            worker.start()

    def _receive_job(self, conn: socket.socket, peer: tuple[str, int]) -> None:
        chunks = []
        try:
            conn.settimeout(self.config.job_timeout)
            while data := conn.recv(65536):
                chunks.append(data)
        except OSError as exc:
            log.debug("job connection from %s ended early: %s", peer, exc)
        finally:
            conn.close()
        raw = b"".join(chunks)
        with self._lock:
            try:
                if raw:
                    self._account(raw, peer)
            finally:
                self.state.active_jobs -= 1
                self._workers.discard(threading.current_thread())
                self._idle.notify_all()

    def _account(self, raw: bytes, peer: tuple[str, int]) -> None:
        job_id = self.state.next_job_id()
        meta = job_metadata(raw, job_id, peer, self.state.model)
        entry = self.state.print_job(PrintJob(job_id, peer, raw, count_pages(raw), meta))
        log.debug("job %d from %s: %s %d/%d", job_id, peer, entry.outcome, entry.pages_printed, entry.pages_requested)
        record = format_metadata_record(meta)
        for sub in list(self._subscribers):
            try:
                send_tcp(self.network, sub, record)
            except OSError:
                self._subscribers.remove(sub)
                sub.close()

    def _accept_subscribers(self) -> None:
        while self._running.is_set():
            try:
                conn, _ = self._meta.accept()
            except OSError:
                return
            with self._lock:
                self._subscribers.append(conn)

    def refill(self, tray_index: int, sheets: int | None = None) -> None:
        with self._lock:
            self.state.refill(tray_index, sheets)

    def wait_idle(self, timeout: float = 10.0) -> bool:
        """Block until no job connection is being received."""
        deadline = time.monotonic() + timeout
        with self._lock:
            while self.state.active_jobs:
                left = deadline - time.monotonic()
                if left <= 0:
                    return False
                self._idle.wait(left)
        return True

    def wait_jobs(self, count: int, timeout: float = 10.0) -> bool:
        """Block until at least ``count`` jobs are logged and none is in flight."""
        deadline = time.monotonic() + timeout
        with self._lock:
            while len(self.state.job_log) < count or self.state.active_jobs:
                left = deadline - time.monotonic()
                if left <= 0:
                    return False
                self._idle.wait(left)
        return True

    def snapshot(self) -> dict:
        with self._lock:
            st = self.state
            return {
                "status": st.status,
                "remaining": st.remaining,
                "capacity": st.capacity,
                "trays": [(t.capacity, t.remaining) for t in st.trays],
                "jobs": len(st.job_log),
                "pages_printed": st.pages_printed,
                **{k.lower(): v for k, v in st.counts().items()},
            }

    def job_log(self) -> list[JobLogEntry]:
        with self._lock:
            return list(self.state.job_log)


def printer_serve(config: PrinterConfig, network: Network | None = None, inventory=None) -> PrinterService:
    return PrinterService(config, network, inventory).start()


def submit_print_job(
    address: tuple[str, int], raw: bytes, network: Network | None = None, source_ip: str | None = None
) -> None:
    """Send one job the way a workstation's raw-port driver would."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        if source_ip:
            sock.bind((source_ip, 0))
        sock.settimeout(10)
        sock.connect(address)
        send_tcp(network, sock, raw)


def subscribe_metadata(address: tuple[str, int], source_ip: str | None = None) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    if source_ip:
        sock.bind((source_ip, 0))
    sock.connect(address)
    return sock


def _shutdown_close(sock: socket.socket) -> None:
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    sock.close()
