"""Stand up a scenario's testbed, drive its actions, and check the outcome at quiescence."""

from __future__ import annotations

import ipaddress
import logging
import os
import random
import socket
import time
from dataclasses import dataclass, field


from jacklab.attacklab import (
    FloodPlan,
    Target,
    check_targets,
    discover,
    eavesdrop_rtp,
    normalized_cross_correlation,
    phonejack2,
    printjack2,
)
from jacklab.cli.errors import TopologyError
from jacklab.cli.pretestbed import capture_invite_template
from jacklab.cli.scenario import DISCOVERED, ActionSpec, Check, Scenario
from jacklab.defenseproxy import RemoteShield, Shield, ShieldConfig, ShieldService
from jacklab.simdevices import (
    CRASHED,
    IDLE,
    IN_CALL,
    RINGING,
    Inventory,
    Network,
    PhoneConfig,
    PhoneService,
    PrinterConfig,
    PrinterService,
    RegistrarConfig,
    RegistrarService,
)
from jacklab.simdevices.config import build_config
from jacklab.simdevices.netutil import port_is_free
from jacklab.wirecodec import CaptureRecord, CodecError, MalformedMessage, decode_rtp, parse_sip

log = logging.getLogger(__name__)

ATTACKER_IP = "127.0.66.6"
QUIET_TIMEOUT = 30.0
# values that depend on wall-clock timing rather than on the seed
VOLATILE = ("seconds", "ncc")


@dataclass
class CheckResult:
    check: Check
    actual: object
    passed: bool

    @property
    def key(self) -> str:
        return self.check.key

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.key} {self.check.op} {self.check.expected} (actual {self.actual})"


@dataclass
class ScenarioReport:
    name: str
    seed: int
    values: dict[str, object] = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)
    wall_time: float = 0.0
    captures: dict[str, list[CaptureRecord]] = field(default_factory=dict)
    leaked_ports: list[tuple[str, int, str]] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and not self.leaked_ports and all(c.passed for c in self.checks)

    def outcome(self) -> tuple:
        """Everything a rerun with the same seed must reproduce."""
        stable = {k: v for k, v in self.values.items() if k.rpartition(".")[2] not in VOLATILE}
        return (sorted(stable.items()), [(c.key, c.passed) for c in self.checks], self.error)

    def device_states(self) -> dict[str, object]:
        return {k.partition(".")[0]: v for k, v in self.values.items() if k.endswith(".state") or k.endswith(".status")}

    def lines(self) -> list[str]:
        out = [f"scenario {self.name} seed={self.seed}"]
        out += [f"  {k} = {v}" for k, v in sorted(self.values.items())]
        out += [c.line() for c in self.checks]
        if self.error:
            out.append(f"ERROR {self.error}")
        out += [f"LEAK {host}:{port}/{kind} still bound" for host, port, kind in self.leaked_ports]
        out.append(f"{'PASSED' if self.passed else 'FAILED'} in {self.wall_time:.2f}s")
        return out


def effective_seed(scenario: Scenario, seed: int | None = None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("JACKLAB_SEED")
    return int(env) if env not in (None, "") else scenario.seed


def _flag(options: dict, key: str, default: bool = False) -> bool:
    value = options.get(key)
    if value is None:
        return default
    return value.strip().lower() in ("1", "yes", "true", "on")


class Testbed:
    def __init__(self, scenario: Scenario, seed: int, unsafe_bind: bool = False, allowlist=None) -> None:
        self.scenario = scenario
        self.seed = seed
        self.unsafe_bind = unsafe_bind
        self.allowlist = allowlist
        self.network = Network()
        self.inventory = Inventory()
        self.devices: dict[str, object] = {}
        self.shields: dict[str, Shield] = {}
        self.shield_services: list[ShieldService] = []
        self.taps = {}
        self.values: dict[str, object] = {}
        self.template: CaptureRecord | None = None
        self.discovered: list[Target] = []
        self.bound: list[tuple[str, int, str]] = []
        self._started: list = []
        self._key = random.Random(f"{seed}:tunnel-key").randbytes(32).hex()

    # --- topology -------------------------------------------------------------

    def _host_allowed(self, host: str) -> bool:
        ip = ipaddress.ip_address(host)
        if ip.is_loopback:
            return True
        return self.unsafe_bind and self.allowlist is not None and any(ip in net for net in self.allowlist)

    def _config(self, cls, options: dict, defaults: dict):
        pairs = {**defaults, **options}
        try:
            cfg = build_config(cls, pairs)
        except (TypeError, ValueError) as exc:
            raise TopologyError(str(exc)) from None
        if not self._host_allowed(cfg.host):
            raise TopologyError(f"{cfg.host} is not loopback; needs --unsafe-bind and an allowlist entry")
        return cfg if ipaddress.ip_address(cfg.host).is_loopback else build_config(cls, {**pairs, "unsafe_bind": "yes"})

    def build(self) -> None:
        """Create every service without binding, so configuration errors surface first."""
        s = self.scenario
        registrar = None
        for spec in s.of_kind("registrar"):
            cfg = self._config(RegistrarConfig, spec.options, {})
            registrar = RegistrarService(cfg, self.network, self.inventory)
            self.devices[spec.name] = registrar
        for n, spec in enumerate(s.of_kind("printer"), 1):
            cfg = self._config(PrinterConfig, spec.options, {"host": f"127.0.10.{n}"})
            self.devices[spec.name] = PrinterService(cfg, self.network, self.inventory)
        for n, spec in enumerate(s.of_kind("phone"), 1):
            defaults = {"host": f"127.0.20.{n}", "number": str(200 + n)}
            if registrar is not None:
                defaults["registrar"] = f"{registrar.config.host}:{registrar.config.port}"
            cfg = self._config(PhoneConfig, spec.options, defaults)
            rng = random.Random(f"{self.seed}:{spec.name}")
            self.devices[spec.name] = PhoneService(cfg, self.network, self.inventory, rng=rng)
        addresses = {}
        for name, service in self.devices.items():
            key = (service.config.host, service.address[1])
            if key in addresses:
                raise TopologyError(f"{name} and {addresses[key]} both use {key[0]}:{key[1]}")
            addresses[key] = name

    def _shield_config(self, spec, n: int) -> ShieldConfig:
        phone = self.devices[spec.phone]
        opts = dict(spec.options)
        return ShieldConfig(
            name=spec.name,
            phone_ip=phone.config.host,
            phone_sip_port=phone.address[1],
            rtp_range=phone.config.rtp_range,
            peer_shield=opts.get("peer", ""),
            key_hex=opts.get("key", self.scenario.options.get("key", self._key)),
            persistence_path=opts.get("persistence") or None,
            listen=(opts.get("listen_host", f"127.0.40.{n}"), 0),
        )

    def start(self) -> None:
        for service in self.devices.values():
            service.start()
            self._started.append(service)
            cfg = service.config
            if isinstance(service, PrinterService):
                self.bound += [(cfg.host, service.data_port, "tcp"), (cfg.host, service.metadata_port, "tcp")]
            else:
                self.bound.append((cfg.host, service.address[1], "udp"))
        phones = [p for p in self.devices.values() if isinstance(p, PhoneService)]
        if self.scenario.of_kind("registrar") and _flag(self.scenario.options, "register", True):
            for phone in phones:
                if not phone.register():
                    raise OSError(f"phone {phone.config.number} could not register")
        # shields go up after registration so their counters only see the run itself
        for n, spec in enumerate(self.scenario.shields, 1):
            shield = Shield(self._shield_config(spec, n))
            self.shields[spec.name] = shield
            if _flag(spec.options, "standalone"):
                service = ShieldService(shield).start()
                self.shield_services.append(service)
                self.bound.append((*service.address, "udp"))
                self.network.attach_shield(RemoteShield(spec.name, shield.config.phone_ip, service.address, shield.config.peer_shield or None))
            else:
                self.network.attach_shield(shield)
        for tap in self.scenario.taps:
            self.taps[tap.name] = self.network.tap(tap.segment)

    def stop(self) -> None:
        for service in self.shield_services:
            service.stop()
        for service in reversed(self._started):
            try:
                service.stop()
            except OSError as exc:
                log.warning("stopping %s failed: %s", service, exc)
        for shield in self.shields.values():
            shield.close()

    def leaked_ports(self) -> list[tuple[str, int, str]]:
        kinds = {"tcp": socket.SOCK_STREAM, "udp": socket.SOCK_DGRAM}
        return [(h, p, k) for h, p, k in self.bound if not port_is_free(h, p, kinds[k])]

    def quiesce(self, idle: float | None = None) -> bool:
        idle = self.scenario.idle if idle is None else idle
        deadline = time.monotonic() + QUIET_TIMEOUT
        while time.monotonic() < deadline:
            quiet = self.network.idle_for()
            if quiet >= idle:
                return True
            time.sleep(min(0.05, idle - quiet))
        return False

    # --- actions --------------------------------------------------------------

    def run_action(self, action: ActionSpec) -> None:
        handler = getattr(self, f"_do_{action.kind}")
        started = time.monotonic()
        result = handler(action, action.options) or {}
        result["seconds"] = round(time.monotonic() - started, 3)
        for key, value in result.items():
            self.values[f"{action.name}.{key}"] = value

    def _targets(self, action: ActionSpec) -> list[Target]:
        targets = []
        for name in action.names("targets"):
            if name == DISCOVERED:
                kind = "printer" if action.kind == "printjack2" else "phone"
                targets += [t for t, k in self.discovered if k == kind]
                continue
            service = self.devices[name]
            if isinstance(service, PrinterService):
                targets.append(Target(service.config.host, service.data_port))
            else:
                targets.append(Target(service.config.host, service.address[1], service.phone.mac, service.config.number))
        check_targets(targets, self.allowlist if self.unsafe_bind else None)
        return targets

    def _do_register(self, action, opts):
        names = action.names("devices") or [n for n, d in self.devices.items() if isinstance(d, PhoneService)]
        return {"registered": sum(self.devices[n].register() for n in names)}

    def _do_capture_template(self, action, opts):
        self.template = capture_invite_template(self.seed)
        return {"bytes": len(self.template.payload)}

    def _do_discover(self, action, opts):
        found = discover(self.inventory)
        kinds = set(action.names("kinds")) or {"phone", "printer"}
        self.discovered = [(d.target(), d.kind) for d in found if d.kind in kinds]
        return {"found": len(self.discovered)}

    def _do_printjack2(self, action, opts):
        targets = self._targets(action)
        bot = opts.get("bot")
        payload = None if bot else opts.get("payload", "hacked printer!!!!\\n").replace("\\n", "\n").encode()
        report = printjack2(FloodPlan(targets, bot, int(opts.get("loops", "1"))), self.network, ATTACKER_IP, payload=payload)
        phrase = (payload or open(bot, "rb").read()).strip().splitlines()
        phrase = phrase[0] if phrase else b""
        sheets = 0
        for target in targets:
            for service in self.devices.values():
                if isinstance(service, PrinterService) and service.address == (target.ip, target.port):
                    per_target = next(t for t in report.targets if t.target == target)
                    service.wait_jobs(per_target.completed, timeout=QUIET_TIMEOUT)
                    sheets += sum(phrase in sheet for e in service.job_log() for sheet in e.sheets)
        return {"attempted": report.attempted, "completed": report.completed, "errors": report.errors, "sheets_with_payload": sheets}

    def _do_phonejack2(self, action, opts):
        targets = self._targets(action)
        plan = FloodPlan(targets, loops=int(opts.get("loops", "1")))
        report = phonejack2(plan, self.template, self.network, ATTACKER_IP, settle=float(opts.get("settle", "0.3")))
        rings = sum(t.rings_observed for t in report.targets)
        return {"attempted": report.attempted, "completed": report.completed, "errors": report.errors, "rings_observed": rings}

    def _do_wait_state(self, action, opts):
        timeout = float(opts.get("timeout", "10"))
        deadline = time.monotonic() + timeout
        reached = 0
        for name in action.names("devices"):
            reached += self.devices[name].wait_state(opts["state"], max(0.0, deadline - time.monotonic()))
        return {"reached": reached}

    def _do_sleep(self, action, opts):
        time.sleep(float(opts["seconds"]))

    def _do_call(self, action, opts):
        caller, callee = self.devices[opts["caller"]], self.devices[opts["callee"]]
        seconds = float(opts.get("seconds", "1"))
        caller.audio_seconds = callee.audio_seconds = seconds
        capture = self.taps[opts["capture"]] if "capture" in opts else None
        connected = 0
        rang = caller.dial(callee.config.number) and (callee.wait_state(RINGING, 3) or callee.state == IN_CALL)
        if rang:
            if not callee.config.auto_answer:
                self.quiesce(0.1)
                callee.answer()
            if caller.wait_state(IN_CALL, 3) and callee.wait_state(IN_CALL, 3):
                connected = 1
                deadline = time.monotonic() + seconds + 5
                for phone in (caller, callee):
                    while phone.last_audio is None and time.monotonic() < deadline:
                        time.sleep(0.01)
                    if phone.last_audio is not None:
                        phone.last_audio.done.wait(max(0.0, deadline - time.monotonic()))
                self.quiesce(0.2)
        caller.hangup()
        caller.wait_state(IDLE, 3)
        callee.wait_state(IDLE, 3)
        self.quiesce(0.2)
        result = {"connected": connected}
        for side, phone in (("caller", caller), ("callee", callee)):
            audio = phone.last_audio
            result[f"{side}_rtp_sent"] = audio.sent if audio else 0
            result[f"{side}_rtp_received"] = len(audio.received) if audio else 0
        if capture is not None:
            result.update(self._call_flow(capture.records()))
        return result

    def _label(self, addr) -> str:
        for name, service in self.devices.items():
            if service.config.host == addr[0]:
                return name
        return addr[0]

    def _call_flow(self, records) -> dict:
        flow, rtp, first_ack, first_bye = [], [], None, None
        for index, rec in enumerate(records):
            if rec.transport != "udp":
                continue
            try:
                msg = parse_sip(rec.payload)
            except MalformedMessage:
                try:
                    rtp.append((index, rec, decode_rtp(rec.payload)))
                except CodecError:
                    pass
                continue
            label = msg.method if msg.is_request else str(msg.status_code)
            flow.append(f"{self._label(rec.src)}>{self._label(rec.dst)} {label}")
            if label == "ACK" and first_ack is None:
                first_ack = index
            if label == "BYE" and first_bye is None:
                first_bye = index
        streams: dict[tuple, list] = {}
        for _, rec, pkt in rtp:
            streams.setdefault((rec.src, rec.dst), []).append(pkt)
        conformant = all(
            len({p.ssrc for p in pkts}) == 1
            and all((b.seq - a.seq) % 65536 == 1 and (b.timestamp - a.timestamp) % 2**32 == 160 for a, b in zip(pkts, pkts[1:]))
            for pkts in streams.values()
        )
        in_dialog = bool(rtp) and first_ack is not None and all(
            first_ack < i and (first_bye is None or i < first_bye) for i, _, _ in rtp
        )
        return {
            "sip_flow": ",".join(flow),
            "rtp_streams": len(streams),
            "rtp_packets": len(rtp),
            "rtp_conformant": int(bool(streams) and conformant),
            "rtp_in_dialog": int(in_dialog),
        }

    def _rtp_records(self, records) -> list[CaptureRecord]:
        ranges = {p.config.rtp_range for p in self.devices.values() if isinstance(p, PhoneService)}
        return [
            r for r in records
            if r.transport == "udp" and any(lo <= r.sport <= hi or lo <= r.dport <= hi for lo, hi in ranges)
        ]

    def _do_eavesdrop(self, action, opts):
        records = self.taps[opts["tap"]].records()
        out_dir = opts.get("out_dir") or None
        rtp_range = next(iter({p.config.rtp_range for p in self.devices.values() if isinstance(p, PhoneService)}), (16384, 16483))
        streams = eavesdrop_rtp(records, out_dir=out_dir, rtp_range=rtp_range)
        result = {
            "streams": len(streams),
            "gaps": sum(s.gap_count for s in streams),
            "rtp_packets": len(self._rtp_records(records)),
        }
        if "reference" in opts:
            ref = self.devices[opts["reference"]]
            sent = ref.last_audio.samples if ref.last_audio is not None else None
            scores = [
                normalized_cross_correlation(s.samples, sent, max_lag=160)
                for s in streams if s.src[0] == ref.config.host and sent is not None
            ]
            result["ncc"] = round(max(scores), 6) if scores else 0.0
        if "against" in opts:
            plain = [r.payload for r in self._rtp_records(self.taps[opts["against"]].records())]
            here = b"".join(r.payload for r in self._rtp_records(records))
            windows = {here[i:i + 16] for i in range(len(here) - 15)}
            result["plaintext_leaks"] = sum(p[i:i + 16] in windows for p in plain for i in range(len(p) - 15))
            result["against_packets"] = len(plain)
        return result

    # --- final values ---------------------------------------------------------

    def collect(self) -> dict[str, object]:
        values = dict(self.values)
        for name, service in self.devices.items():
            if isinstance(service, PrinterService):
                snap = service.snapshot()
                for key in ("status", "remaining", "capacity", "pages_printed", "printed", "partial", "rejected"):
                    values[f"{name}.{key}"] = snap[key]
                values[f"{name}.jobs"] = len(service.job_log())
            elif isinstance(service, PhoneService):
                for key, value in service.snapshot().items():
                    values[f"{name}.{key}"] = value
                trans = list(service.transitions)
                values[f"{name}.path"] = ",".join(t[2] for t in trans)
                values[f"{name}.rebooted_after_delay"] = int(_rebooted_after(trans, service.config.reboot_delay))
            else:
                values[f"{name}.failures"] = len(service.registrar.failures)
                values[f"{name}.bindings"] = len(service.registrar.bindings)
                values[f"{name}.malformed"] = service.malformed
        for name, shield in self.shields.items():
            for key, value in shield.counters().items():
                values[f"{name}.{key}"] = value
        for name, tap in self.taps.items():
            values[f"{name}.packets"] = len(tap)
        return values


def _rebooted_after(transitions, delay: float) -> bool:
    """Every crash was followed by a return to IDLE no sooner than ``delay`` later."""
    crashed_at = None
    crashes = 0
    for ts, _, new in transitions:
        if new == CRASHED:
            crashed_at = ts
            crashes += 1
        elif new == IDLE and crashed_at is not None:
            if ts - crashed_at < delay:
                return False
            crashed_at = None
    return crashes > 0 and crashed_at is None


def run_scenario(scenario: Scenario, seed: int | None = None, unsafe_bind: bool = False, allowlist=None) -> ScenarioReport:
    """Run ``scenario`` end to end; assertion failures are reported, not raised.

    Configuration problems (TopologyError) and busy ports (PortInUse) still
    raise, after anything already started has been torn down.
    """
    seed = effective_seed(scenario, seed)
    report = ScenarioReport(scenario.name, seed)
    started = time.monotonic()
    bed = Testbed(scenario, seed, unsafe_bind, allowlist)
    bed.build()
    try:
        bed.start()
        for action in scenario.actions:
            try:
                bed.run_action(action)
            except (OSError, ValueError) as exc:
                report.error = f"action {action.name}: {exc}"
                log.warning(report.error)
                break
            bed.quiesce()
        report.values = bed.collect()
        report.captures = {name: tap.records() for name, tap in bed.taps.items()}
    finally:
        bed.stop()
        report.leaked_ports = bed.leaked_ports()
    for check in scenario.checks:
        actual = report.values.get(check.key)
        report.checks.append(CheckResult(check, actual, check.evaluate(actual)))
    report.wall_time = time.monotonic() - started
    return report
