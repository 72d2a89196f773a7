import logging
import random
import socket
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jacklab.defenseproxy import (
    ACCEPT,
    DROP,
    EXPANSION,
    AuthenticationFailure,
    PayloadTooLarge,
    QueueRule,
    RemoteShield,
    ReplayFilterState,
    Shield,
    ShieldConfig,
    ShieldService,
    TunnelConfig,
    classify,
    default_rules,
    load_shield_config,
    new_key_hex,
    replay_filter,
    tunnel_decrypt,
    tunnel_encrypt,
    validate_rules,
)
from jacklab.simdevices import Network, PhoneConfig, PhoneService
from jacklab.simdevices.audio import ToneSpec, generate_tone, packetize
from jacklab.wirecodec import CaptureRecord, encode_rtp, serialize_sip

from .helpers import invite

PHONE = "127.0.21.1"
MAC = b"\x02\x00\x7f\x00\x15\x01"


def rec(src, dst, transport="udp", payload=b"x"):
    return CaptureRecord(0, src, dst, MAC, MAC, transport, payload)


# --- classification --------------------------------------------------------


def test_queue_assignment():
    rules = default_rules(PHONE)
    assert classify(rec(("127.0.30.1", 5060), (PHONE, 5060)), rules) == 1
    assert classify(rec((PHONE, 16400), ("127.0.21.2", 16450)), rules) == 2
    assert classify(rec(("127.0.21.2", 16450), (PHONE, 16400)), rules) == 3
    assert classify(rec(("127.0.50.1", 40000), ("127.0.10.1", 9100), "tcp"), rules) is None
    assert classify(rec((PHONE, 5060), ("127.0.30.1", 5060)), rules) is None
    assert classify(rec(("127.0.30.1", 5060), (PHONE, 5060), "tcp"), rules) is None


def test_overlapping_rules_rejected():
    with pytest.raises(ValueError):
        validate_rules([QueueRule(1, PHONE, "to", 5000, 6000), QueueRule(3, PHONE, "to", 5060, 5060)])
    with pytest.raises(ValueError):
        QueueRule(4, PHONE, "to", 1, 2)


@given(st.sampled_from(["udp", "tcp"]), st.integers(1, 65535), st.integers(1, 65535), st.booleans())
def test_classify_is_total_and_unique(transport, sport, dport, inbound):
    rules = default_rules(PHONE)
    r = rec(("127.0.9.9", sport), (PHONE, dport), transport) if inbound else rec((PHONE, sport), ("127.0.9.9", dport), transport)
    matches = [rule.queue_id for rule in rules if rule.matches(r)]
    assert len(matches) <= 1
    assert classify(r, rules) == (matches[0] if matches else None)


# --- replay filter ---------------------------------------------------------


def test_first_copy_accepted_rest_dropped():
    state = ReplayFilterState()
    p = serialize_sip(invite("201"))
    verdicts = [replay_filter(p, state)[0] for _ in range(5)]
    assert verdicts == [ACCEPT, DROP, DROP, DROP, DROP]
    assert (state.accepted, state.dropped) == (1, 4)


def test_one_byte_difference_is_a_new_packet():
    state = ReplayFilterState()
    assert replay_filter(b"INVITE-a", state)[0] == ACCEPT
    assert replay_filter(b"INVITE-b", state)[0] == ACCEPT


def test_oldest_digest_evicted_first():
    state = ReplayFilterState(capacity=2)
    for p in (b"a", b"b", b"c"):
        replay_filter(p, state)
    assert b"a" not in state and b"b" in state and b"c" in state
    assert replay_filter(b"a", state)[0] == ACCEPT


def test_digests_survive_restart(tmp_path):
    path = tmp_path / "seen.log"
    first = ReplayFilterState(persistence_path=path)
    replay_filter(b"packet", first)
    first.close()
    second = ReplayFilterState(persistence_path=path)
    assert replay_filter(b"packet", second)[0] == DROP
    assert path.read_text().count("\n") == 1


def test_unwritable_persistence_falls_back_to_memory(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        state = ReplayFilterState(persistence_path=tmp_path)  # a directory cannot be appended to
    assert state.persistence_failed
    assert "continuing in memory" in caplog.text
    assert [replay_filter(b"p", state)[0] for _ in range(2)] == [ACCEPT, DROP]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 15), max_size=80), st.randoms(use_true_random=False))
def test_duplicate_schedules(indices, rnd):
    pool = [bytes([i]) * rnd.randint(1, 40) + bytes([i]) for i in range(16)]
    state = ReplayFilterState()
    seen = set()
    for i in indices:
        verdict, _ = replay_filter(pool[i], state)
        assert verdict == (DROP if pool[i] in seen else ACCEPT)
        seen.add(pool[i])
    assert state.accepted == len(seen)
    assert state.accepted + state.dropped == len(indices)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 99), st.text("abcdef0123456789", min_size=1, max_size=12)), unique=True, max_size=30))
def test_distinct_sip_messages_never_dropped(keys):
    state = ReplayFilterState()
    for cseq, call_id in keys:
        assert replay_filter(serialize_sip(invite("201", call_id=call_id, cseq=cseq)), state)[0] == ACCEPT


# --- tunnel ----------------------------------------------------------------

KEY = bytes(range(32))


@settings(max_examples=100)
@given(st.binary(max_size=1372))
def test_tunnel_round_trip(payload):
    cfg = TunnelConfig(KEY)
    sealed = tunnel_encrypt(payload, cfg)
    assert len(sealed) == len(payload) + EXPANSION <= 1400
    assert tunnel_decrypt(sealed, cfg) == payload


def test_fresh_nonce_per_packet():
    cfg = TunnelConfig(KEY)
    a, b = tunnel_encrypt(b"same", cfg), tunnel_encrypt(b"same", cfg)
    assert a != b and a[:12] != b[:12]
    assert tunnel_decrypt(a, cfg) == tunnel_decrypt(b, cfg) == b"same"


@settings(max_examples=100)
@given(st.binary(min_size=1, max_size=200), st.integers(0, 10_000), st.integers(1, 255))
def test_tampering_detected(payload, where, flip):
    cfg = TunnelConfig(KEY)
    sealed = bytearray(tunnel_encrypt(payload, cfg))
    sealed[where % len(sealed)] ^= flip
    with pytest.raises(AuthenticationFailure):
        tunnel_decrypt(bytes(sealed), cfg)


def test_wrong_key_and_truncation_rejected():
    sealed = tunnel_encrypt(b"audio", TunnelConfig(KEY))
    with pytest.raises(AuthenticationFailure):
        tunnel_decrypt(sealed, TunnelConfig(bytes(32)))
    with pytest.raises(AuthenticationFailure):
        tunnel_decrypt(sealed[:20], TunnelConfig(KEY))


def test_tunnel_budget():
    with pytest.raises(PayloadTooLarge):
        tunnel_encrypt(bytes(1373), TunnelConfig(KEY))
    with pytest.raises(ValueError):
        TunnelConfig(KEY, max_plain_payload=1373)
    with pytest.raises(ValueError):
        TunnelConfig(b"short")


# --- shield in the simulated network ------------------------------------------


def _shield(name, phone_ip, peer="", key=None):
    return Shield(ShieldConfig(name=name, phone_ip=phone_ip, peer_shield=peer, key_hex=key or KEY.hex()))


def test_idle_shield_has_zero_counters():
    assert set(_shield("s", PHONE).counters().values()) == {0}


def _sock(ip, port=0):
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind((ip, port))
    return s


def test_flood_through_shield_rings_once():
    net = Network()
    shield = _shield("s1", "127.0.21.3")
    net.attach_shield(shield)
    with PhoneService(PhoneConfig(number="201", host="127.0.21.3"), net) as phone, _sock("127.0.66.7") as attacker:
        payload = serialize_sip(invite("201"))
        delivered = [net.send_udp(attacker, payload, phone.address) for _ in range(50)]
        time.sleep(0.3)
        assert delivered.count(True) == 1
        assert phone.counters.rings == 1 and phone.counters.crashes == 0
    c = shield.counters()
    assert (c["replay_accepted"], c["replay_dropped"]) == (1, 49)
    assert c["queue1_received"] == c["queue1_delivered"] + c["queue1_dropped"] + c["queue1_auth_failed"]


def test_tunnel_between_shields_is_transparent_and_opaque():
    net = Network()
    key = new_key_hex()
    left, right = _shield("left", "127.0.21.4", "right", key), _shield("right", "127.0.21.5", "left", key)
    net.attach_shield(left)
    net.attach_shield(right)
    core, inside = net.tap("core"), net.tap("right")
    samples = generate_tone(ToneSpec(523.0), 100 * 160)
    sent = [encode_rtp(p) for p in packetize(samples, ssrc=99, seq_start=10)]
    with _sock("127.0.21.4", 16390) as a, _sock("127.0.21.5", 16391) as b:
        b.settimeout(1)
        for payload in sent:
            assert net.send_udp(a, payload, ("127.0.21.5", 16391))
        received = [b.recvfrom(2048)[0] for _ in sent]
    assert received == sent
    assert [r.payload for r in inside.records()] == sent
    ciphertext = b"".join(r.payload for r in core.records())
    assert len(core.records()) == 100
    for payload in sent:
        for i in range(len(payload) - 15):
            assert payload[i:i + 16] not in ciphertext
    assert left.counters()["queue2_delivered"] == 100 and right.counters()["queue3_delivered"] == 100


def test_unsealed_rtp_fails_authentication():
    shield = _shield("s", PHONE)
    verdict = shield.process(rec(("127.0.21.9", 16400), (PHONE, 16401), payload=b"\x80" + bytes(171)))
    assert verdict.action == "drop"
    c = shield.counters()
    assert (c["queue3_received"], c["queue3_auth_failed"]) == (1, 1)


def test_standalone_shield_over_queue_socket(tmp_path):
    conf = tmp_path / "shield.conf"
    conf.write_text(
        f"name = remote\nphone_ip = 127.0.21.6\nrtp_range = 16384-16483\nkey_hex = {KEY.hex()}\n"
        "filter_capacity = 1024\nlisten = 127.0.40.9:0\n"
    )
    cfg = load_shield_config(conf)
    assert cfg.filter_capacity == 1024 and cfg.listen == ("127.0.40.9", 0)
    with ShieldService(Shield(cfg)) as service:
        stub = RemoteShield("remote", "127.0.21.6", service.address)
        net = Network()
        net.attach_shield(stub)
        with _sock("127.0.21.6", 5060) as phone, _sock("127.0.66.7") as attacker:
            phone.settimeout(1)
            payload = serialize_sip(invite("201"))
            results = [net.send_udp(attacker, payload, ("127.0.21.6", 5060)) for _ in range(5)]
            assert phone.recvfrom(4096)[0] == payload
        counters = stub.counters()
        stub.close()
    assert results == [True, False, False, False, False]
    assert (counters["replay_accepted"], counters["replay_dropped"]) == (1, 4)


def test_shield_rejects_garbage_requests():
    service = ShieldService(_shield("g", PHONE))
    try:
        assert service.handle(b"F\x00\x01") == b"E"
        assert service.handle(b"?") == b"E"
        assert service.errors == 2
    finally:
        service.stop()


def test_random_traffic_accounting():
    shield = _shield("acct", PHONE)
    rng = random.Random(5)
    for _ in range(500):
        port = rng.choice([5060, 16400, 9100, 40000])
        inbound = rng.random() < 0.5
        payload = rng.choice([b"a", b"b", tunnel_encrypt(b"rtp", shield.tunnel), bytes(rng.randrange(40))])
        r = rec(("127.0.9.9", port), (PHONE, port), payload=payload) if inbound else rec((PHONE, port), ("127.0.9.9", port), payload=payload)
        shield.process(r)
    c = shield.counters()
    total = c["passthrough"]
    for q in (1, 2, 3):
        assert c[f"queue{q}_received"] == c[f"queue{q}_delivered"] + c[f"queue{q}_dropped"] + c[f"queue{q}_auth_failed"]
        total += c[f"queue{q}_received"]
    assert total == 500
