import itertools
import random
import socket
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jacklab.simdevices import (
    CRASHED,
    IDLE,
    IN_CALL,
    REBOOTING,
    RINGING,
    DeviceEntry,
    Inventory,
    InventoryServer,
    Network,
    PhoneConfig,
    PhoneState,
    PortInUse,
    PrinterConfig,
    PrinterService,
    PrinterState,
    PrintJob,
    Registrar,
    RemoteInventory,
    ToneSpec,
    UnsafeBind,
    generate_tone,
    packetize,
    phone_answer,
    phone_dial,
    phone_hangup,
    phone_on_datagram,
    phone_on_packet,
    phone_tick,
    submit_print_job,
)
from jacklab.simdevices.audio import allocate_ssrc, packet_count, phone_call_audio, release_ssrc
from jacklab.simdevices.config import build_config, parse_pairs
from jacklab.simdevices.phone import CALLING, STATES, CallLeg
from jacklab.simdevices.printer import PARTIAL, PRINTED, REJECTED, job_metadata, subscribe_metadata
from jacklab.wirecodec import decode_rtp, parse_metadata_stream, serialize_sip
from jacklab.wirecodec.printjob import job_header

from .helpers import invite, request, response

# --- printer accounting ----------------------------------------------------


def _job(state: PrinterState, raw: bytes) -> PrintJob:
    job_id = state.next_job_id()
    return PrintJob(job_id, ("127.0.0.9", 4000), raw, 1 + raw.count(b"\x0c"), job_metadata(raw, job_id, ("127.0.0.9", 4000), state.model))


def test_450_single_page_jobs_empty_three_trays():
    state = PrinterState.with_trays([150, 150, 150])
    outcomes = [state.print_job(_job(state, b"page")).outcome for _ in range(450)]
    assert outcomes == [PRINTED] * 450
    assert state.status == "OUT_OF_PAPER"
    assert state.pages_printed == 150 * 3


def test_trays_drain_in_declaration_order():
    state = PrinterState.with_trays([2, 3])
    state.print_job(_job(state, b"a\x0cb\x0cc"))
    assert [(t.capacity, t.remaining) for t in state.trays] == [(2, 0), (3, 2)]


def test_partial_then_rejected_leaves_trays_alone():
    state = PrinterState.with_trays([2])
    entry = state.print_job(_job(state, b"1\x0c2\x0c3"))
    assert (entry.outcome, entry.pages_requested, entry.pages_printed) == (PARTIAL, 3, 2)
    assert entry.sheets == (b"1", b"2")
    rejected = state.print_job(_job(state, b"again"))
    assert rejected.outcome == REJECTED and rejected.pages_printed == 0
    assert state.remaining == 0


def test_phrase_lands_on_the_sheet():
    state = PrinterState.with_trays([1])
    entry = state.print_job(_job(state, b"hacked printer!!!!\n"))
    assert entry.pages_requested == 1
    assert b"hacked printer!!!!" in entry.sheets[0]


def test_refill_restores_status():
    state = PrinterState.with_trays([1, 1])
    state.print_job(_job(state, b"a\x0cb"))
    assert state.status == "OUT_OF_PAPER"
    state.refill(1)
    assert state.status == "READY" and state.remaining == 1


def test_printer_needs_paper_capacity():
    with pytest.raises(ValueError):
        PrinterState.with_trays([])
    with pytest.raises(ValueError):
        PrinterState.with_trays([0, 0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=4), st.lists(st.integers(0, 6), max_size=40))
def test_sheet_conservation(capacities, form_feeds):
    if max(capacities) < 1:
        capacities = capacities + [1]
    state = PrinterState.with_trays(capacities)
    start = state.remaining
    for ff in form_feeds:
        state.print_job(_job(state, b"x" + b"\x0c" * ff))
        assert start - state.remaining == state.pages_printed
        assert all(0 <= t.remaining <= t.capacity for t in state.trays)
        assert (state.status == "OUT_OF_PAPER") == (state.remaining == 0)


def test_job_metadata_defaults_and_header():
    meta = job_metadata(b"plain", 7, ("127.0.50.1", 999), "M1")
    assert meta.fields() == {
        "USERNAME": "anonymous", "USERID": "0", "HOSTID": "127.0.50.1", "JOBNAME": "job-7", "MODEL": "M1",
    }
    raw = job_header(username="alice", userid="1001", hostid="ws-7", jobname="salaries.xlsx") + b"body"
    assert job_metadata(raw, 1, ("127.0.50.1", 1), "M1").jobname == "salaries.xlsx"


# --- printer service over sockets -----------------------------------------

SERVICE_HOST = "127.0.11.7"


def test_printer_service_accounts_jobs_and_emits_metadata():
    net = Network()
    inventory = Inventory()
    cfg = PrinterConfig(host=SERVICE_HOST, trays=(2,))
    with PrinterService(cfg, net, inventory) as printer:
        assert inventory.list()[0].kind == "printer"
        sub = subscribe_metadata((SERVICE_HOST, cfg.metadata_port))
        time.sleep(0.05)
        for n, raw in enumerate((b"one", job_header(username="bob") + b"two\x0cthree", b"four"), 1):
            submit_print_job(printer.address, raw, net)
            assert printer.wait_jobs(n, 5)
        submit_print_job(printer.address, b"", net)  # an empty connection is not a job
        time.sleep(0.1)
        assert printer.wait_idle(5)
        snap = printer.snapshot()
        sub.settimeout(2)
        data = b""
        while data.count(b"\n\n") < 3:
            data += sub.recv(4096)
        sub.close()
    assert inventory.list() == []
    assert (snap["status"], snap["printed"], snap["partial"], snap["rejected"]) == ("OUT_OF_PAPER", 1, 1, 1)
    metas = parse_metadata_stream(data)
    assert [m.jobname for m in metas] == ["job-1", "job-2", "job-3"]
    assert metas[1].username == "bob" and metas[2].username == "anonymous"


def test_printer_port_in_use():
    cfg = PrinterConfig(host=SERVICE_HOST, trays=(1,))
    with PrinterService(cfg):
        with pytest.raises(PortInUse):
            PrinterService(cfg).start()


def test_non_loopback_bind_refused():
    with pytest.raises(UnsafeBind):
        PrinterService(PrinterConfig(host="10.1.2.3")).start()


def test_concurrent_submissions_conserve_sheets():
    cfg = PrinterConfig(host=SERVICE_HOST, trays=(30, 25))
    with PrinterService(cfg) as printer:
        barrier = threading.Barrier(8)

        def worker(n):
            barrier.wait()
            for i in range(10):
                submit_print_job(printer.address, b"p" + b"\x0c" * ((n + i) % 3))

        threads = [threading.Thread(target=worker, args=(n,)) for n in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert printer.wait_jobs(80, 10)
        snap = printer.snapshot()
    assert snap["jobs"] == 80
    assert snap["capacity"] - snap["remaining"] == snap["pages_printed"] == 55


# --- phone state machine ---------------------------------------------------


def fresh_phone(**kw) -> PhoneState:
    base = dict(phone_number="201", device_id="p201", ip="127.0.20.1", mac="02:00:7f:00:14:01")
    base.update(kw)
    return PhoneState(**base)


def test_matching_invite_rings():
    phone, replies = phone_on_packet(fresh_phone(), invite("201"), 0.0)
    assert phone.state == RINGING
    assert [r.label() for r in replies] == ["100 Trying", "180 Ringing"]
    assert replies[1].call_id == "c1@test"


def test_invite_for_another_number_is_ignored():
    phone, replies = phone_on_packet(fresh_phone(), invite("202"), 0.0)
    assert (phone.state, replies, phone.counters.invites_ignored) == (IDLE, [], 1)


def test_eleven_invites_in_a_second_crash_then_reboot():
    phone = fresh_phone()
    pkt = invite("201")
    for i in range(11):
        phone, replies = phone_on_packet(phone, pkt, i * 0.1)
    assert phone.state == CRASHED and replies == []
    assert phone.counters.rings == 10 and phone.counters.crashes == 1
    assert phone_tick(phone, 1.0 + 4.99).state == CRASHED
    phone = phone_tick(phone, 1.0 + 5.0)
    assert phone.state == REBOOTING
    phone = phone_tick(phone, 6.05)
    assert phone.state == IDLE and phone.ring_events == ()


def test_spread_out_invites_never_crash():
    phone = fresh_phone()
    for i in range(40):
        phone, _ = phone_on_packet(phone, invite("201"), i * 0.25)
    assert phone.state == RINGING and phone.counters.crashes == 0


def test_ring_timeout_returns_to_idle():
    phone, _ = phone_on_packet(fresh_phone(), invite("201"), 0.0)
    assert phone_tick(phone, 9.9).state == RINGING
    assert phone_tick(phone, 10.0).state == IDLE


def test_bye_while_ringing_or_in_call():
    phone, _ = phone_on_packet(fresh_phone(), invite("201"), 0.0)
    idle, replies = phone_on_packet(phone, request("BYE", "201", "200"), 1.0)
    assert idle.state == IDLE and [r.label() for r in replies] == ["200 OK"]
    talking, ok = phone_answer(phone, 1.0, 16400)
    assert talking.state == IN_CALL and ok.status_code == 200 and b"m=audio 16400" in ok.body
    idle, replies = phone_on_packet(talking, request("BYE", "201", "200"), 2.0)
    assert idle.state == IDLE and replies[0].status_code == 200


def test_caller_side_flow():
    phone, inv = phone_dial(fresh_phone(), "202", 0.0, "call-9", 16390, "127.0.30.1")
    assert phone.state == CALLING and inv.to_number == "202" and inv.from_number == "201"
    for code in (100, 180):
        phone, replies = phone_on_packet(phone, response(code, "201", "202", "call-9"), 0.1)
        assert phone.state == CALLING and replies == []
    phone, replies = phone_on_packet(phone, response(200, "201", "202", "call-9"), 0.2)
    assert phone.state == IN_CALL and [r.method for r in replies] == ["ACK"]
    phone, bye = phone_hangup(phone, 3.0)
    assert phone.state == IDLE and bye.method == "BYE" and bye.to_number == "202"


def test_replayed_invite_accepted_again():
    pkt = invite("201")
    once, _ = phone_on_packet(fresh_phone(), pkt, 0.0)
    back = phone_tick(once, 20.0)
    twice, replies = phone_on_packet(back, pkt, 20.0)
    assert twice.state == once.state == RINGING and replies


def test_malformed_datagrams_are_counted():
    phone, replies = phone_on_datagram(fresh_phone(), b"\x00garbage", 0.0)
    assert phone.counters.malformed == 1 and replies == [] and phone.state == IDLE
    phone, replies = phone_on_datagram(phone, serialize_sip(invite("201")), 0.0)
    assert phone.state == RINGING


ALLOWED = {
    (IDLE, RINGING), (RINGING, IN_CALL), (RINGING, IDLE),
    (CRASHED, REBOOTING), (REBOOTING, IDLE),
    (IDLE, CALLING), (CALLING, IN_CALL), (CALLING, IDLE), (IN_CALL, IDLE),
} | {(s, CRASHED) for s in STATES}


def _phone_in(state: str) -> PhoneState:
    leg = None
    if state in (RINGING, IN_CALL):
        leg = CallLeg("c1@test", "callee", "200", invite("201"))
    elif state == CALLING:
        leg = CallLeg("c1@test", "caller", "202", invite("202", frm="201"))
    return fresh_phone(state=state, call=leg)


def _all_messages():
    for to, call_id in itertools.product(("201", "202"), ("c1@test", "other")):
        yield invite(to, call_id=call_id)
        for method in ("ACK", "BYE", "REGISTER"):
            yield request(method, to, "200", call_id)
        for code, method in itertools.product((100, 180, 200), ("INVITE", "BYE", "REGISTER")):
            yield response(code, "201", to, call_id, method)
            yield response(code, to, "201", call_id, method)


def test_state_machine_totality():
    messages = list(_all_messages())
    pairs = 0
    for state in STATES:
        for msg in messages:
            before = _phone_in(state)
            after, replies = phone_on_packet(before, msg, 1.0)
            assert after.state in STATES
            assert after.state == before.state or (before.state, after.state) in ALLOWED
            c = after.counters
            assert c.invites_seen == c.invites_ignored + c.invites_accepted
            assert all(r.is_request or r.status_code in (100, 180, 200) for r in replies)
            ticked = phone_tick(after, 100.0)
            assert ticked.state == after.state or (after.state, ticked.state) in ALLOWED
            pairs += 1
    assert pairs == len(STATES) * len(messages)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["201", "202"]), st.sampled_from(["a", "b"]), st.floats(0, 0.5)), max_size=60))
def test_invite_accounting_holds_for_any_schedule(schedule):
    phone = fresh_phone()
    now = 0.0
    for to, call_id, gap in schedule:
        now += gap
        before = phone.state
        phone = phone_tick(phone, now)
        phone, _ = phone_on_packet(phone, invite(to, call_id=call_id), now)
        assert before == phone.state or (before, phone.state) in ALLOWED or before in (CRASHED, REBOOTING)
        c = phone.counters
        assert c.invites_seen == c.invites_ignored + c.invites_accepted
        assert len([t for t in phone.ring_events if now - t < phone.window]) <= phone.crash_threshold + 1


# --- registrar ---------------------------------------------------------------


def _register(reg: Registrar, number: str, host: str, password: str = "testbed"):
    msg = request("REGISTER", number, number)
    from jacklab.wirecodec.sip import replace_header

    msg = replace_header(msg, "Contact", f"<sip:{number}@{host}:5060>")
    msg = replace_header(msg, "Authorization", f"Static id=x password={password}")
    return reg.route(msg, (host, 5060))


def test_registrar_flow_routing():
    reg = Registrar()
    assert _register(reg, "201", "127.0.20.1")[0][1].status_code == 200
    _register(reg, "202", "127.0.20.2")
    out = reg.route(invite("202", frm="201"))
    assert [(dst, m.label()) for dst, m in out] == [(("127.0.20.1", 5060), "100 Trying"), (("127.0.20.2", 5060), "INVITE")]
    assert out[1][1] == invite("202", frm="201")
    assert reg.route(response(100, "201", "202")) == []
    for code in (180, 200):
        assert [d for d, _ in reg.route(response(code, "201", "202"))] == [("127.0.20.1", 5060)]
    assert [d for d, _ in reg.route(request("ACK", "202", "201"))] == [("127.0.20.2", 5060)]
    # the callee hangs up: BYE goes to the caller, the 200 back to the callee
    assert [d for d, _ in reg.route(request("BYE", "201", "202"))] == [("127.0.20.1", 5060)]
    assert [d for d, _ in reg.route(response(200, "202", "201", method="BYE"))] == [("127.0.20.2", 5060)]
    assert reg.calls == {}


def test_registrar_refuses_unknown_parties():
    reg = Registrar()
    _register(reg, "201", "127.0.20.1")
    assert reg.route(invite("999", frm="201")) == []
    assert reg.route(invite("201", frm="555")) == []
    assert [r for r, _ in reg.failures] == ["UnknownNumber: 999", "UnknownNumber: unregistered caller 555"]
    assert _register(reg, "203", "127.0.20.3", password="wrong") == []
    assert "203" not in reg.bindings


# --- audio ---------------------------------------------------------------------


def test_two_seconds_is_one_hundred_packets():
    samples = generate_tone(ToneSpec(), packet_count(2.0) * 160)
    packets = packetize(samples, ssrc=7, seq_start=65500)
    assert len(packets) == 100
    assert [p.timestamp for p in packets] == list(range(0, 15841, 160))
    assert [p.seq for p in packets[34:37]] == [65534, 65535, 0]
    assert {len(p.payload) for p in packets} == {160} and {p.payload_type for p in packets} == {0}


def test_zero_duration_sends_nothing():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.bind(("127.0.0.1", 0))
        result = phone_call_audio(sock, ("127.0.0.1", 9), 0.0, ToneSpec(), realtime=False)
    assert result.sent == 0


def test_live_legs_get_distinct_ssrcs():
    rng = random.Random(1)
    held = [allocate_ssrc(rng) for _ in range(50)]
    assert len(set(held)) == 50
    for s in held:
        release_ssrc(s)


def test_audio_stream_leaves_in_order():
    net = Network()
    tap = net.tap()
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as rx, socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as tx:
        rx.bind(("127.0.0.1", 0))
        tx.bind(("127.0.0.1", 0))
        phone_call_audio(tx, rx.getsockname(), 0.2, ToneSpec(), net, random.Random(3), realtime=False)
    pkts = [decode_rtp(r.payload) for r in tap.records()]
    assert len(pkts) == 10
    assert len({p.ssrc for p in pkts}) == 1
    assert all((b.seq - a.seq) % 65536 == 1 and b.timestamp - a.timestamp == 160 for a, b in zip(pkts, pkts[1:]))


# --- config, inventory, taps ----------------------------------------------------


def test_phone_config_file():
    cfg = build_config(PhoneConfig, parse_pairs(
        "# desk phone\nnumber = 203\nid = SEP03\nregistrar = 127.0.30.1:5060\nrtp_range = 20000-20010\nauto_answer = yes\n"
    ))
    assert (cfg.number, cfg.device_id, cfg.registrar, cfg.rtp_range, cfg.auto_answer) == (
        "203", "SEP03", ("127.0.30.1", 5060), (20000, 20010), True,
    )
    assert build_config(PrinterConfig, {"trays": "100,50"}).trays == (100, 50)
    with pytest.raises(ValueError):
        build_config(PhoneConfig, {"colour": "red"})
    with pytest.raises(ValueError):
        parse_pairs("no equals sign")


def test_inventory_over_tcp():
    inventory = Inventory()
    server = InventoryServer(inventory).start()
    try:
        remote = RemoteInventory(*server.address)
        remote.add(DeviceEntry("phone", "127.0.20.1", 5060, "02:00:7f:00:14:01", "201"))
        remote.add(DeviceEntry("printer", "127.0.10.1", 9100, "02:00:7f:00:0a:01"))
        assert [e.kind for e in remote.list()] == ["printer", "phone"]
        with pytest.raises(ValueError):
            remote.add(DeviceEntry("phone", "127.0.20.2", 5060, "02:00:7f:00:14:02"))
        remote.remove("127.0.10.1", 9100)
        assert [e.ip for e in inventory.list()] == ["127.0.20.1"]
    finally:
        server.stop()


def test_tap_timestamps_never_decrease():
    ticks = iter([0.0, 5.0, 4.0, 6.0, 3.0])
    net = Network(clock=lambda: next(ticks, 10.0))
    tap = net.tap()
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.bind(("127.0.0.1", 0))
        for _ in range(3):
            net.send_udp(sock, b"x", ("127.0.0.1", 9))
    stamps = [r.ts_micros for r in tap.records()]
    assert stamps == sorted(stamps)
