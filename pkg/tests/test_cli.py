import io
import socket
import time

import pytest

from jacklab.cli import TopologyError, builtin, parse_scenario, run_scenario
from jacklab.cli.main import main
from jacklab.simdevices import Inventory, InventoryServer, Network, PhoneConfig, PhoneService, PortInUse, PrinterConfig, PrinterService
from jacklab.simdevices.netutil import port_is_free
from jacklab.simdevices.printer import submit_print_job
from jacklab.wirecodec import write_capture
from jacklab.wirecodec.printjob import job_header


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


SMALL = """
[scenario]
name = small
seed = 5
idle = 0.1

[device.lp]
kind = printer
host = 127.0.13.1
trays = 4

[action.flood]
kind = printjack2
targets = lp
loops = 6

[assert]
lp.printed = 4
lp.rejected = {rejected}
flood.completed >= 6
"""


# --- scenario files --------------------------------------------------------------


def test_scenario_file_runs(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL.format(rejected=2))
    code, text = run("scenario", "run", str(path))
    assert code == 0 and "PASSED" in text and "PASS lp.printed == 4" in text
    assert port_is_free("127.0.13.1", 9100, socket.SOCK_STREAM)


def test_failed_assertion_exits_nonzero_and_cleans_up(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL.format(rejected=3))
    code, text = run("scenario", "run", str(path))
    assert code == 1 and "FAIL lp.rejected == 3 (actual 2)" in text
    assert port_is_free("127.0.13.1", 9100, socket.SOCK_STREAM)
    assert port_is_free("127.0.13.1", 65002, socket.SOCK_STREAM)


@pytest.mark.parametrize(
    "text, message",
    [
        ("[scenario]\n[device.x]\nkind = toaster\n", "kind must be"),
        ("[scenario]\n[device.p]\nkind = phone\n[shield.s]\nphone = q\n", "no device named"),
        ("[scenario]\n[device.p]\nkind = printer\n[shield.s]\nphone = p\n", "must guard a phone"),
        ("[scenario]\n[tap.t]\nsegment = nowhere\n", "segment must be"),
        ("[scenario]\n[device.p]\nkind = phone\n[action.f]\nkind = phonejack2\ntargets = p\n", "capture_template"),
        ("[scenario]\n[device.p]\nkind = phone\n[assert]\nq.state = IDLE\n", "undeclared"),
        ("[scenario]\n[device.p]\nkind = phone\n[tap.p]\n", "used twice"),
        ("[scenario]\n[action.a]\nkind = teleport\n", "unknown kind"),
        ("[scenario]\n[device.p]\nkind = phone\n[action.c]\nkind = call\ncaller = p\ncallee = p\n", "registrar"),
        ("[device.p]\nkind = phone\n", "missing [scenario]"),
    ],
)
def test_topology_errors(text, message):
    with pytest.raises(TopologyError, match=message[:12].replace("[", r"\[")):
        parse_scenario(text)


def test_duplicate_addresses_and_non_loopback_rejected():
    twice = "[scenario]\n[device.a]\nkind = phone\nhost = 127.0.24.1\n[device.b]\nkind = phone\nhost = 127.0.24.1\n"
    with pytest.raises(TopologyError, match="both use"):
        run_scenario(parse_scenario(twice))
    outside = "[scenario]\n[device.a]\nkind = printer\nhost = 10.9.9.9\n"
    with pytest.raises(TopologyError, match="not loopback"):
        run_scenario(parse_scenario(outside))
    code, _ = run("scenario", "run", "--unsafe-bind", "printjack2-demo")
    assert code == 2


def test_port_in_use_raises_after_teardown():
    blocker = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    blocker.bind(("127.0.24.2", 5060))
    text = "[scenario]\n[device.a]\nkind = printer\nhost = 127.0.24.3\n[device.b]\nkind = phone\nhost = 127.0.24.2\n"
    try:
        with pytest.raises(PortInUse):
            run_scenario(parse_scenario(text))
    finally:
        blocker.close()
    assert port_is_free("127.0.24.3", 9100, socket.SOCK_STREAM)


def test_assertion_operators():
    s = parse_scenario("[scenario]\n[device.p]\nkind = phone\n[assert]\np.rings >= 1\np.state != IDLE\np.crashes = 0\n")
    assert [(c.key, c.op, c.expected) for c in s.checks] == [
        ("p.rings", ">=", "1"), ("p.state", "!=", "IDLE"), ("p.crashes", "==", "0")
    ]
    assert s.checks[0].evaluate(2) and not s.checks[0].evaluate(0) and not s.checks[0].evaluate(None)
    assert s.checks[1].evaluate("RINGING") and not s.checks[1].evaluate("IDLE")


def test_seed_from_environment(monkeypatch, tmp_path):
    scenario = parse_scenario(SMALL.format(rejected=2))
    monkeypatch.setenv("JACKLAB_SEED", "77")
    assert run_scenario(scenario).seed == 77
    assert run_scenario(scenario, seed=3).seed == 3


@pytest.mark.slow
def test_builtin_scenarios_are_deterministic():
    for name in ("printjack2-demo", "phonejack2-vs-filter"):
        first, second = run_scenario(builtin(name)), run_scenario(builtin(name))
        assert first.passed and second.passed, first.lines()
        assert first.outcome() == second.outcome()
        assert not first.leaked_ports and not second.leaked_ports


def test_builtin_list_and_show():
    code, text = run("scenario", "list")
    assert code == 0 and text.count("\n") == 5
    code, text = run("scenario", "show", "call-flow")
    assert code == 0 and text.startswith("[scenario]")


# --- subcommands ----------------------------------------------------------------------


def test_usage_errors_exit_2():
    assert run("frobnicate")[0] == 2
    assert run()[0] == 2
    assert run("report", "variation", "--old", "t1.csv")[0] == 2
    assert run("--help")[0] == 0


def test_report_variation_reproduces_table(tmp_path):
    out_csv = tmp_path / "t2.csv"
    code, text = run("report", "variation", "--old", "t1.csv", "--new", "t2.csv", "--port", "9100", "--csv", str(out_csv))
    assert code == 0
    assert [line.split()[-1] for line in text.splitlines()[2:12]] == [
        "+132%", "+87%", "+141%", "+7%", "+338%", "+76%", "+68%", "+80%", "+21%", "+115%"
    ]
    assert "+150%" in text and "+106%" in text
    assert out_csv.read_text().splitlines()[1] == "1,Germany,12891,29951,132"


def test_report_ranking_and_errors(tmp_path):
    plot = tmp_path / "fig.tsv"
    code, _ = run("report", "ranking", "--data", "t3", "--port", "5060", "--plot", str(plot))
    assert code == 0 and plot.read_text().startswith("Germany\t4297178\n")
    assert run("report", "ranking", "--data", "missing.csv", "--port", "9100")[0] == 1
    assert run("report", "ranking", "--data", "t3", "--port", "5061")[0] == 1


def test_device_printer_adds_inventory_entry():
    code, text = run("device", "printer", "--host", "127.0.13.5", "--trays", "150,150,150", "--duration", "0.2")
    assert code == 0
    assert "printer up at 127.0.13.5:9100" in text and "inventory: printer 127.0.13.5 9100" in text
    assert port_is_free("127.0.13.5", 9100, socket.SOCK_STREAM)


def test_device_bad_config_is_operational_error(tmp_path):
    cfg = tmp_path / "p.conf"
    cfg.write_text("trays = lots\n")
    assert run("device", "printer", "--config", str(cfg), "--duration", "0")[0] == 1


def test_attack_discover_and_refused_targets(tmp_path):
    inventory = Inventory()
    server = InventoryServer(inventory).start()
    try:
        with PhoneService(PhoneConfig(number="311", host="127.0.25.1"), inventory=inventory):
            code, text = run("attack", "discover", "--inventory", f"{server.address[0]}:{server.address[1]}")
        assert code == 0 and text.startswith("phone 127.0.25.1 5060 02:00:7f:00:19:01 311")
        port = server.address[1]
    finally:
        server.stop()
    assert run("attack", "discover", "--inventory", f"127.0.0.1:{port}")[0] == 1
    targets = tmp_path / "targets"
    targets.write_text("192.168.65.59 9100\n")
    bot = tmp_path / "bot.txt"
    bot.write_text("hacked printer!!!!\n")
    assert run("attack", "printjack2", "--targets", str(targets), "--bot", str(bot))[0] == 1
    allow = tmp_path / "allow"
    allow.write_text("192.168.65.0/24\n")
    assert run("attack", "printjack2", "--targets", str(targets), "--bot", str(bot), "--allowlist", str(allow))[0] == 2


def test_attack_printjack2_command(tmp_path):
    targets = tmp_path / "targets"
    targets.write_text("127.0.13.9 9100\n")
    bot = tmp_path / "bot.txt"
    bot.write_text("hacked printer!!!!\n")
    with PrinterService(PrinterConfig(host="127.0.13.9", trays=(2,))) as printer:
        code, text = run("attack", "printjack2", "--targets", str(targets), "--bot", str(bot), "--loops", "3")
        assert printer.wait_jobs(3, 5)
        assert printer.snapshot()["status"] == "OUT_OF_PAPER"
    assert code == 0 and "total attempted=3 completed=3 errors=0" in text


def test_capture_template_then_flood(tmp_path):
    template = tmp_path / "invite.cap"
    code, text = run("attack", "capture-template", "--out", str(template))
    assert code == 0 and "written" in text
    targets = tmp_path / "targets"
    targets.write_text("127.0.25.2 5060 02:00:7f:00:19:02 312\n")
    with PhoneService(PhoneConfig(number="312", host="127.0.25.2")) as phone:
        code, text = run("attack", "phonejack2", "--targets", str(targets), "--template", str(template), "--loops", "3")
        time.sleep(0.1)
        assert phone.counters.rings == 3
    assert code == 0 and "rings=3" in text


def test_sniff_and_eavesdrop_commands(tmp_path):
    net = Network()
    tap = net.tap()
    job = job_header(username="bob", userid="7", hostid="ws", jobname="plan.txt") + b"secret plan\n"
    with PrinterService(PrinterConfig(host="127.0.13.6"), net) as printer:
        submit_print_job(printer.address, job, net, "127.0.50.1")
        assert printer.wait_jobs(1, 5)
    cap = tmp_path / "print.cap"
    write_capture(cap, tap.records())
    code, text = run("attack", "sniff-print", "--capture", str(cap), "--out-dir", str(tmp_path / "jobs"))
    assert code == 0
    assert (tmp_path / "jobs" / "job-1.prn").read_bytes() == job
    code, text = run("attack", "eavesdrop", "--capture", str(cap))
    assert code == 0 and "0 stream(s)" in text
    assert run("attack", "eavesdrop", "--capture", str(tmp_path / "nope.cap"))[0] == 1


def test_defend_shield_command(tmp_path):
    cfg = tmp_path / "shield.conf"
    cfg.write_text("name = s9\nphone_ip = 127.0.25.9\nkey_hex = " + "11" * 32 + "\nlisten = 127.0.40.9:0\n")
    code, text = run("defend", "shield", "--config", str(cfg), "--duration", "0.1")
    assert code == 0 and "shield s9 guarding 127.0.25.9" in text and "replay_dropped 0" in text
    assert run("defend", "shield", "--duration", "0")[0] == 1
