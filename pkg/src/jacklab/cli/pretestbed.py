"""A throwaway two-phone network used only to record a genuine INVITE."""

from __future__ import annotations

import random

from jacklab.attacklab import extract_invite_template
from jacklab.simdevices import (
    RINGING,
    Network,
    PhoneConfig,
    PhoneService,
    RegistrarConfig,
    RegistrarService,
)
from jacklab.wirecodec import CaptureRecord

REGISTRAR_HOST = "127.0.99.1"
CALLER_HOST = "127.0.99.2"
CALLEE_HOST = "127.0.99.3"


def capture_invite_template(seed: int = 0, timeout: float = 3.0) -> CaptureRecord:
    """Phone 200 calls phone 201 through a registrar; returns the INVITE as delivered to 201."""
    net = Network()
    registrar = RegistrarService(RegistrarConfig(host=REGISTRAR_HOST), net)
    reg = (REGISTRAR_HOST, 5060)
    caller = PhoneService(
        PhoneConfig(number="200", host=CALLER_HOST, registrar=reg), net, rng=random.Random(f"{seed}:pre-200")
    )
    callee = PhoneService(
        PhoneConfig(number="201", host=CALLEE_HOST, registrar=reg), net, rng=random.Random(f"{seed}:pre-201")
    )
    started = []
    try:
        for service in (registrar, caller, callee):
            service.start()
            started.append(service)
        if not (caller.register(timeout) and callee.register(timeout)):
            raise OSError("template phones could not register")
        tap = net.tap()
        caller.dial("201")
        if not callee.wait_state(RINGING, timeout):
            raise OSError("template call never rang")
        return extract_invite_template(r for r in tap.records() if r.dst[0] == CALLEE_HOST)
    finally:
        for service in reversed(started):
            service.stop()
