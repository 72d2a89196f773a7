"""Raw print-job streams and the printer's job-metadata records."""

from __future__ import annotations

from dataclasses import dataclass

FORM_FEED = b"\x0c"
JOB_PREFIX = b"@PJL SET "
METADATA_KEYS = ("USERNAME", "USERID", "HOSTID", "JOBNAME")


@dataclass(frozen=True)
class PrintJobMetadata:
    username: str
    userid: str
    hostid: str
    jobname: str
    printer_model: str

    def fields(self) -> dict[str, str]:
        return {
            "USERNAME": self.username,
            "USERID": self.userid,
            "HOSTID": self.hostid,
            "JOBNAME": self.jobname,
            "MODEL": self.printer_model,
        }


def count_pages(raw: bytes) -> int:
    return 1 + raw.count(FORM_FEED)


def split_sheets(raw: bytes) -> list[bytes]:
    return raw.split(FORM_FEED)


def job_header(**fields: str) -> bytes:
    """Leading ``@PJL SET KEY=value`` lines a client uses to name its job."""
    return b"".join(JOB_PREFIX + f"{k.upper()}={v}".encode("utf-8") + b"\n" for k, v in fields.items())


def read_job_header(raw: bytes) -> dict[str, str]:
    fields: dict[str, str] = {}
    pos = 0
    while raw.startswith(JOB_PREFIX, pos):
        end = raw.find(b"\n", pos)
        if end < 0:
            break
        line = raw[pos + len(JOB_PREFIX):end].decode("utf-8", "replace").rstrip("\r")
        key, eq, value = line.partition("=")
        if eq:
            fields[key.strip().upper()] = value.strip()
        pos = end + 1
    return fields


def format_metadata_record(meta: PrintJobMetadata) -> bytes:
    lines = [f"{k}={v}" for k, v in meta.fields().items()]
    return ("\n".join(lines) + "\n\n").encode("utf-8")


def parse_metadata_stream(data: bytes) -> list[PrintJobMetadata]:
    """Split a metadata-channel byte stream into records.

    A trailing record without its blank-line terminator is left out.
    """
    records = []
    text = data.decode("utf-8", "replace").replace("\r\n", "\n")
    chunks = text.split("\n\n")
    for chunk in chunks[:-1]:
        fields = {}
        for line in chunk.split("\n"):
            key, eq, value = line.partition("=")
            if eq:
                fields[key.strip().upper()] = value
        if not fields:
            continue
        records.append(
            PrintJobMetadata(
                username=fields.get("USERNAME", ""),
                userid=fields.get("USERID", ""),
                hostid=fields.get("HOSTID", ""),
                jobname=fields.get("JOBNAME", ""),
                printer_model=fields.get("MODEL", ""),
            )
        )
    return records
