from __future__ import annotations

import errno
import ipaddress
import socket

from jacklab.simdevices.errors import PortInUse, UnsafeBind


def check_bind_address(host: str, unsafe_bind: bool = False) -> None:
    if not ipaddress.ip_address(host).is_loopback and not unsafe_bind:
        raise UnsafeBind(f"refusing to bind non-loopback address {host} without --unsafe-bind")


def bind_socket(kind: int, host: str, port: int, unsafe_bind: bool = False) -> socket.socket:
    """Bind a TCP or UDP socket, turning EADDRINUSE into :class:`PortInUse`."""
    check_bind_address(host, unsafe_bind)
    sock = socket.socket(socket.AF_INET, kind)
    if kind == socket.SOCK_STREAM:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        if exc.errno == errno.EADDRINUSE:
            raise PortInUse(host, port, "tcp" if kind == socket.SOCK_STREAM else "udp") from exc
        raise
    return sock


def mac_for_ip(ip: str) -> str:
    """Deterministic locally administered MAC for a testbed address."""
    octets = ipaddress.IPv4Address(ip).packed
    return "02:00:" + ":".join(f"{b:02x}" for b in octets)


def port_is_free(host: str, port: int, kind: int = socket.SOCK_DGRAM) -> bool:
    try:
        bind_socket(kind, host, port).close()
    except PortInUse:
        return False
    return True
