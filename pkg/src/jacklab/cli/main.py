"""``jacklab`` command line: devices, attacks, shields, exposure reports and scenarios."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import signal
import sys
import threading

from jacklab import attacklab, exposure
from jacklab.cli.builtins import BUILTINS, builtin
from jacklab.cli.errors import TopologyError
from jacklab.cli.pretestbed import capture_invite_template
from jacklab.cli.runner import run_scenario
from jacklab.cli.scenario import load_scenario
from jacklab.defenseproxy import ShieldConfig, load_shield_config, shield_serve
from jacklab.exposure import ExposureError
from jacklab.simdevices import (
    Inventory,
    InventoryServer,
    PhoneConfig,
    PhoneService,
    PrinterConfig,
    PrinterService,
    RegistrarConfig,
    RegistrarService,
    RemoteInventory,
)
from jacklab.simdevices.config import build_config, parse_pairs
from jacklab.wirecodec import CodecError, read_capture, write_capture

log = logging.getLogger("jacklab")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return (host, int(port))


def _wait(duration: float | None) -> None:
    """Block until ``duration`` elapses or the process is interrupted."""
    stop = threading.Event()
    if threading.current_thread() is threading.main_thread():
        signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait(duration)
    except KeyboardInterrupt:
        pass


def _inventory(args):
    return RemoteInventory(*args.inventory) if args.inventory else Inventory()


def _config_pairs(args, fields: dict) -> dict[str, str]:
    pairs = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            pairs.update(parse_pairs(fh.read()))
    for key, value in fields.items():
        if value is not None:
            pairs[key] = str(value)
    if args.unsafe_bind:
        pairs["unsafe_bind"] = "yes"
    return pairs


def _print_inventory(inventory, out) -> None:
    for entry in inventory.list():
        print(f"inventory: {entry.line()}", file=out)


# --- device ---------------------------------------------------------------------


def cmd_device(args, out) -> int:
    kind = args.kind
    if kind == "inventory":
        server = InventoryServer(Inventory(), args.host or "127.0.0.1", args.port or 0).start()
        print(f"inventory listening on {server.address[0]}:{server.address[1]}", file=out, flush=True)
        try:
            _wait(args.duration)
        finally:
            server.stop()
        return EXIT_OK
    inventory = _inventory(args)
    if kind == "printer":
        trays = args.trays
        cfg = build_config(PrinterConfig, _config_pairs(args, {"host": args.host, "data_port": args.port, "trays": trays}))
        service = PrinterService(cfg, inventory=inventory).start()
        print(f"printer up at {cfg.host}:{service.data_port} metadata {service.metadata_port} sheets {service.snapshot()['remaining']}", file=out)
    elif kind == "phone":
        registrar = f"{args.registrar[0]}:{args.registrar[1]}" if args.registrar else None
        cfg = build_config(
            PhoneConfig, _config_pairs(args, {"host": args.host, "sip_port": args.port, "number": args.number, "registrar": registrar})
        )
        service = PhoneService(cfg, inventory=inventory).start()
        print(f"phone {cfg.number} up at {service.address[0]}:{service.address[1]}", file=out)
        if cfg.registrar is not None:
            ok = service.register()
            print(f"registration {'ok' if ok else 'failed'}", file=out)
    else:
        cfg = build_config(RegistrarConfig, _config_pairs(args, {"host": args.host, "port": args.port}))
        service = RegistrarService(cfg, inventory=inventory).start()
        print(f"registrar up at {service.address[0]}:{service.address[1]}", file=out)
    _print_inventory(inventory, out)
    out.flush()
    try:
        _wait(args.duration)
    finally:
        snapshot = service.snapshot() if hasattr(service, "snapshot") else None
        service.stop()
    if snapshot:
        print(" ".join(f"{k}={v}" for k, v in snapshot.items() if not isinstance(v, (list, dict))), file=out)
    return EXIT_OK


# --- attack ---------------------------------------------------------------------


def _targets(args):
    targets = attacklab.load_targets(args.targets)
    allowlist = attacklab.load_allowlist(args.allowlist) if args.allowlist else None
    if allowlist is not None and not args.unsafe_bind:
        raise UsageError("--allowlist only takes effect together with --unsafe-bind")
    attacklab.check_targets(targets, allowlist if args.unsafe_bind else None)
    return targets


def cmd_attack(args, out) -> int:
    kind = args.kind
    if kind == "discover":
        source = args.inventory
        for device in attacklab.discover(source):
            print(f"{device.kind} {device.ip} {device.port} {device.mac} {device.phone_number or ''}".rstrip(), file=out)
        return EXIT_OK
    if kind == "printjack2":
        plan = attacklab.FloodPlan(_targets(args), args.bot, args.loops)
        report = attacklab.printjack2(plan, source_ip=args.source_ip)
    elif kind == "phonejack2":
        template = attacklab.extract_invite_template(read_capture(args.template))
        plan = attacklab.FloodPlan(_targets(args), loops=args.loops)
        report = attacklab.phonejack2(plan, template, source_ip=args.source_ip or "127.0.66.6")
    elif kind == "capture-template":
        template = capture_invite_template(args.seed)
        write_capture(args.out, [template])
        print(f"INVITE template for {template.dst[0]}:{template.dst[1]} written to {args.out}", file=out)
        return EXIT_OK
    elif kind == "sniff-print":
        documents, metadata = attacklab.sniff_print_jobs(read_capture(args.capture))
        os.makedirs(args.out_dir, exist_ok=True)
        for n, doc in enumerate(documents, 1):
            path = os.path.join(args.out_dir, f"job-{n}.prn")
            with open(path, "wb") as fh:
                fh.write(doc)
            print(f"document {path} {len(doc)} bytes", file=out)
        for meta in metadata:
            print(" ".join(f"{k.upper()}={v}" for k, v in meta.fields().items()), file=out)
        return EXIT_OK
    else:
        streams = attacklab.eavesdrop_rtp(read_capture(args.capture), out_dir=args.out_dir)
        for s in streams:
            print(f"stream {s.ssrc:08x} {s.direction} packets={s.packets} gaps={s.gap_count} wav={s.path}", file=out)
        print(f"{len(streams)} stream(s) recovered", file=out)
        return EXIT_OK
    for line in report.lines():
        print(line, file=out)
    return EXIT_OK if report.errors == 0 else EXIT_ERROR


# --- defend ---------------------------------------------------------------------


def cmd_defend(args, out) -> int:
    cfg = load_shield_config(args.config) if args.config else ShieldConfig()
    if args.unsafe_bind:
        cfg = dataclasses.replace(cfg, unsafe_bind=True)
    service = shield_serve(cfg)
    print(f"shield {cfg.name} guarding {cfg.phone_ip} on queue socket {service.address[0]}:{service.address[1]}", file=out, flush=True)
    try:
        _wait(args.duration)
    finally:
        service.stop()
    print(service.shield.counters_text(), end="", file=out)
    return EXIT_OK


# --- report ---------------------------------------------------------------------


def _dataset(name: str):
    if os.path.exists(name):
        return exposure.load_exposure(name)
    stem = os.path.splitext(os.path.basename(name))[0]
    try:
        return exposure.load_exposure(exposure.fixture_path(stem))
    except FileNotFoundError:
        raise FileNotFoundError(f"no such dataset {name!r} (shipped: {', '.join(exposure.records.FIXTURES)})") from None


def cmd_report(args, out) -> int:
    if args.kind == "variation":
        report = exposure.variation_report(_dataset(args.old), _dataset(args.new), args.port)
        text = exposure.variation_csv(report) if args.format == "csv" else exposure.format_variation_table(report)
        if args.csv:
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write(exposure.variation_csv(report))
    else:
        pairs = exposure.ranking_emit(_dataset(args.data), args.port, args.plot)
        text = exposure.ranking_csv(pairs) if args.format == "csv" else exposure.format_ranking_table(pairs)
    out.write(text)
    return EXIT_OK


# --- scenario -------------------------------------------------------------------


def cmd_scenario(args, out) -> int:
    if args.kind == "list":
        for name in BUILTINS:
            print(f"{name:22} {builtin(name).description}", file=out)
        return EXIT_OK
    if args.kind == "show":
        if args.name in BUILTINS:
            out.write(BUILTINS[args.name].lstrip())
        else:
            with open(args.name, encoding="utf-8") as fh:
                out.write(fh.read())
        return EXIT_OK
    scenario = builtin(args.name) if args.name in BUILTINS else load_scenario(args.name)
    allowlist = attacklab.load_allowlist(args.allowlist) if args.allowlist else None
    if args.unsafe_bind and allowlist is None:
        raise UsageError("--unsafe-bind needs --allowlist")
    report = run_scenario(scenario, args.seed, args.unsafe_bind, allowlist)
    lines = report.lines() if args.verbose_values else [l for l in report.lines() if not l.startswith("  ")]
    for line in lines:
        print(line, file=out)
    return EXIT_OK if report.passed else EXIT_ERROR


# --- parser ---------------------------------------------------------------------


def _add_bind_flags(p) -> None:
    p.add_argument("--unsafe-bind", action="store_true", help="allow non-loopback addresses (needs --allowlist)")
    p.add_argument("--allowlist", help="file of permitted networks, one CIDR per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jacklab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, metavar="{device,attack,defend,report,scenario}")

    dev = sub.add_parser("device", help="run a simulated device")
    dsub = dev.add_subparsers(dest="kind", required=True)
    for kind in ("printer", "phone", "registrar", "inventory"):
        p = dsub.add_parser(kind)
        p.add_argument("--host")
        p.add_argument("--port", type=int)
        p.add_argument("--duration", type=float, help="seconds to stay up (default: until interrupted)")
        if kind != "inventory":
            p.add_argument("--config", help="key = value device config file")
            p.add_argument("--inventory", type=_address, help="register with an inventory server at host:port")
            p.add_argument("--unsafe-bind", action="store_true")
        if kind == "printer":
            p.add_argument("--trays", help="sheets per tray, e.g. 150,150,150")
        if kind == "phone":
            p.add_argument("--number")
            p.add_argument("--registrar", type=_address)

    att = sub.add_parser("attack", help="run an attack")
    asub = att.add_subparsers(dest="kind", required=True)
    p = asub.add_parser("discover")
    p.add_argument("--inventory", type=_address, required=True)
    for kind in ("printjack2", "phonejack2"):
        p = asub.add_parser(kind)
        p.add_argument("--targets", required=True, help="target file, one 'ip port [mac] [number]' per line")
        p.add_argument("--loops", type=int, default=1)
        p.add_argument("--source-ip")
        _add_bind_flags(p)
        if kind == "printjack2":
            p.add_argument("--bot", required=True, help="file whose lines make up each job")
        else:
            p.add_argument("--template", required=True, help="capture holding an INVITE")
    p = asub.add_parser("capture-template")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    for kind in ("sniff-print", "eavesdrop"):
        p = asub.add_parser(kind)
        p.add_argument("--capture", required=True)
        p.add_argument("--out-dir", required=kind == "sniff-print")

    dfd = sub.add_parser("defend", help="run a phone shield")
    dsub = dfd.add_subparsers(dest="kind", required=True)
    p = dsub.add_parser("shield")
    p.add_argument("--config")
    p.add_argument("--duration", type=float)
    p.add_argument("--unsafe-bind", action="store_true")

    rep = sub.add_parser("report", help="exposure tables")
    rsub = rep.add_subparsers(dest="kind", required=True)
    p = rsub.add_parser("variation")
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--csv", help="also write the CSV mirror here")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p = rsub.add_parser("ranking")
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--plot", help="write country<TAB>count plot data here")
    p.add_argument("--format", choices=("text", "csv"), default="text")

    scn = sub.add_parser("scenario", help="end-to-end testbed runs")
    ssub = scn.add_subparsers(dest="kind", required=True)
    ssub.add_parser("list")
    p = ssub.add_parser("show")
    p.add_argument("name")
    p = ssub.add_parser("run")
    p.add_argument("name", help="builtin name or scenario file")
    p.add_argument("--seed", type=int, help="overrides the scenario seed and JACKLAB_SEED")
    p.add_argument("--values", dest="verbose_values", action="store_true", help="print every collected value")
    _add_bind_flags(p)
    return parser


COMMANDS = {"device": cmd_device, "attack": cmd_attack, "defend": cmd_defend, "report": cmd_report, "scenario": cmd_scenario}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"jacklab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, TopologyError, ExposureError, CodecError) as exc:
        print(f"jacklab: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
