"""Scenarios compiled into the tool, runnable by name."""

from __future__ import annotations

from jacklab.cli.scenario import Scenario, parse_scenario

_PHONES = "".join(
    f"""
[device.phone{i}]
kind = phone
number = 20{i}
host = 127.0.20.{i}
reboot_delay = 2.0
"""
    for i in range(1, 5)
)

_FLOOD = """
[action.template]
kind = capture_template

[action.scan]
kind = discover
kinds = phone

[action.flood]
kind = phonejack2
targets = discovered
loops = 50
"""

PRINTJACK2_DEMO = """
[scenario]
name = printjack2-demo
seed = 1
description = 1000 one-page jobs against a printer holding 3 x 150 sheets

[device.printer]
kind = printer
host = 127.0.10.1
trays = 150,150,150

[action.flood]
kind = printjack2
targets = printer
loops = 1000
payload = hacked printer!!!!\\n

[assert]
printer.status = OUT_OF_PAPER
printer.printed = 450
printer.rejected = 550
printer.remaining = 0
flood.completed = 1000
flood.sheets_with_payload = 450
"""

PHONEJACK2_NO_SHIELD = (
    """
[scenario]
name = phonejack2-no-shield
seed = 2
description = replayed INVITE flood, 50 copies per phone, four unprotected phones
"""
    + _PHONES
    + _FLOOD
    + """
[action.recover]
kind = wait_state
devices = phone1,phone2,phone3,phone4
state = IDLE
timeout = 15

[assert]
scan.found = 4
flood.completed = 200
recover.reached = 4
"""
    + "".join(
        f"""phone{i}.path = RINGING,CRASHED,REBOOTING,IDLE
phone{i}.crashes = 1
phone{i}.rebooted_after_delay = 1
phone{i}.state = IDLE
"""
        for i in range(1, 5)
    )
)

PHONEJACK2_VS_FILTER = (
    """
[scenario]
name = phonejack2-vs-filter
seed = 2
description = the same flood with a replay-filtering shield in front of every phone
"""
    + _PHONES
    + "".join(f"\n[shield.shield{i}]\nphone = phone{i}\n" for i in range(1, 5))
    + _FLOOD
    + """
[assert]
flood.completed = 200
flood.rings_observed = 4
"""
    + "".join(
        f"""phone{i}.rings = 1
phone{i}.crashes = 0
phone{i}.state = RINGING
shield{i}.replay_accepted = 1
shield{i}.replay_dropped = 49
"""
        for i in range(1, 5)
    )
)

PHONEJACK3_VS_TUNNEL = """
[scenario]
name = phonejack3-vs-tunnel
seed = 3
description = a 2 s call between shielded phones, observed on the wire and inside a shield

[device.pbx]
kind = registrar
host = 127.0.30.1

[device.alice]
kind = phone
number = 201
host = 127.0.20.1
tone_hz = 440

[device.bob]
kind = phone
number = 202
host = 127.0.20.2
tone_hz = 660
auto_answer = yes

[shield.alice_shield]
phone = alice
peer = bob_shield

[shield.bob_shield]
phone = bob
peer = alice_shield

[tap.wire]
segment = core

[tap.inside]
segment = bob_shield

[action.call]
kind = call
caller = alice
callee = bob
seconds = 2

[action.outside]
kind = eavesdrop
tap = wire

[action.inner]
kind = eavesdrop
tap = inside
reference = alice
against = wire

[assert]
call.connected = 1
outside.streams = 0
outside.rtp_packets >= 100
inner.streams = 2
inner.ncc >= 0.99
inner.plaintext_leaks = 0
inner.against_packets >= 100
alice_shield.queue3_auth_failed = 0
bob_shield.queue3_auth_failed = 0
"""

CALL_FLOW = """
[scenario]
name = call-flow
seed = 4
description = one call between two registered phones captured on the shared link

[device.pbx]
kind = registrar
host = 127.0.30.1

[device.alice]
kind = phone
number = 201
host = 127.0.20.1

[device.bob]
kind = phone
number = 202
host = 127.0.20.2

[tap.link]
segment = core

[action.call]
kind = call
caller = alice
callee = bob
seconds = 0.5
capture = link

[assert]
call.connected = 1
call.sip_flow = alice>pbx INVITE,pbx>alice 100,pbx>bob INVITE,bob>pbx 100,bob>pbx 180,pbx>alice 180,bob>pbx 200,pbx>alice 200,alice>pbx ACK,pbx>bob ACK,alice>pbx BYE,pbx>bob BYE,bob>pbx 200,pbx>alice 200
call.rtp_streams = 2
call.rtp_conformant = 1
call.rtp_in_dialog = 1
alice.state = IDLE
bob.state = IDLE
pbx.failures = 0
"""

BUILTINS = {
    "printjack2-demo": PRINTJACK2_DEMO,
    "phonejack2-no-shield": PHONEJACK2_NO_SHIELD,
    "phonejack2-vs-filter": PHONEJACK2_VS_FILTER,
    "phonejack3-vs-tunnel": PHONEJACK3_VS_TUNNEL,
    "call-flow": CALL_FLOW,
}


def builtin(name: str) -> Scenario:
    try:
        text = BUILTINS[name]
    except KeyError:
        raise KeyError(f"no builtin scenario {name!r}; try: {', '.join(BUILTINS)}") from None
    return parse_scenario(text, name)
