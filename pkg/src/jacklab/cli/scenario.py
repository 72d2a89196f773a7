"""Scenario files: sections of ``key = value`` lines describing a testbed run."""

from __future__ import annotations

import configparser
import operator
import os
from dataclasses import dataclass, field

from jacklab.cli.errors import TopologyError

DEVICE_KINDS = ("printer", "phone", "registrar")
ACTION_KINDS = {
    "register": (),
    "capture_template": (),
    "discover": (),
    "printjack2": ("targets",),
    "phonejack2": ("targets",),
    "wait_state": ("devices", "state"),
    "call": ("caller", "callee"),
    "eavesdrop": ("tap",),
    "sleep": ("seconds",),
}
OPERATORS = {
    "==": operator.eq,
    "!=": operator.ne,
    ">=": operator.ge,
    "<=": operator.le,
    ">": operator.gt,
    "<": operator.lt,
}
DISCOVERED = "discovered"


@dataclass
class DeviceSpec:
    name: str
    kind: str
    options: dict[str, str]


@dataclass
class ShieldSpec:
    name: str
    phone: str
    options: dict[str, str]


@dataclass
class TapSpec:
    name: str
    segment: str


@dataclass
class ActionSpec:
    name: str
    kind: str
    options: dict[str, str]

    def names(self, key: str) -> list[str]:
        return [p.strip() for p in self.options.get(key, "").split(",") if p.strip()]


@dataclass(frozen=True)
class Check:
    key: str
    op: str
    expected: str

    def evaluate(self, actual) -> bool:
        if actual is None:
            return False
        compare = OPERATORS[self.op]
        try:
            return compare(float(actual), float(self.expected))
        except (TypeError, ValueError):
            if self.op not in ("==", "!="):
                return False
            return compare(str(actual), self.expected)


@dataclass
class Scenario:
    name: str
    seed: int = 0
    description: str = ""
    idle: float = 0.5
    devices: list[DeviceSpec] = field(default_factory=list)
    shields: list[ShieldSpec] = field(default_factory=list)
    taps: list[TapSpec] = field(default_factory=list)
    actions: list[ActionSpec] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    options: dict[str, str] = field(default_factory=dict)

    def device(self, name: str) -> DeviceSpec:
        for d in self.devices:
            if d.name == name:
                return d
        raise TopologyError(f"no device named {name!r}")

    def of_kind(self, kind: str) -> list[DeviceSpec]:
        return [d for d in self.devices if d.kind == kind]


def parse_check(key: str, raw: str) -> Check:
    key, raw = key.strip(), raw.strip()
    # "a.b >= 3" arrives split at its "=" as key "a.b >" and value "3"
    if key[-1:] in "<>!":
        key, raw = key[:-1].strip(), key[-1] + "=" + raw
    elif raw.startswith("="):
        raw = "==" + raw[1:]
    for op in (">=", "<=", "!=", "==", ">", "<"):
        if raw.startswith(op):
            return Check(key, op, raw[len(op):].strip())
    return Check(key, "==", raw)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source)
    except configparser.Error as exc:
        raise TopologyError(f"{source}: {exc}") from None
    if not parser.has_section("scenario"):
        raise TopologyError(f"{source}: missing [scenario] section")
    head = dict(parser["scenario"])
    try:
        scenario = Scenario(
            name=head.pop("name", os.path.splitext(os.path.basename(source))[0]),
            seed=int(head.pop("seed", "0")),
            description=head.pop("description", ""),
            idle=float(head.pop("idle", "0.5")),
            options=head,
        )
    except ValueError as exc:
        raise TopologyError(f"{source}: {exc}") from None
    for section in parser.sections():
        kind, _, name = section.partition(".")
        body = dict(parser[section])
        if section == "scenario":
            continue
        if section == "assert":
            scenario.checks.extend(parse_check(k, v) for k, v in body.items())
        elif kind == "device" and name:
            scenario.devices.append(DeviceSpec(name, body.pop("kind", ""), body))
        elif kind == "shield" and name:
            scenario.shields.append(ShieldSpec(name, body.pop("phone", ""), body))
        elif kind == "tap" and name:
            scenario.taps.append(TapSpec(name, body.get("segment", "core")))
        elif kind == "action" and name:
            scenario.actions.append(ActionSpec(name, body.pop("kind", ""), body))
        else:
            raise TopologyError(f"{source}: unknown section [{section}]")
    validate(scenario)
    return scenario


def load_scenario(path: str | os.PathLike) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), os.fspath(path))


def validate(s: Scenario) -> None:
    """Reject scenarios whose references do not resolve; runs before anything binds."""
    names: set[str] = set()
    for item in [*s.devices, *s.shields, *s.taps, *s.actions]:
        if item.name in names or item.name == "scenario":
            raise TopologyError(f"name {item.name!r} is used twice")
        names.add(item.name)
    for d in s.devices:
        if d.kind not in DEVICE_KINDS:
            raise TopologyError(f"device {d.name}: kind must be one of {', '.join(DEVICE_KINDS)}")
    if len(s.of_kind("registrar")) > 1:
        raise TopologyError("at most one registrar per scenario")
    shield_names = {sh.name for sh in s.shields}
    guarded = set()
    for sh in s.shields:
        if s.device(sh.phone).kind != "phone":
            raise TopologyError(f"shield {sh.name} must guard a phone, not {sh.phone}")
        if sh.phone in guarded:
            raise TopologyError(f"phone {sh.phone} has two shields")
        guarded.add(sh.phone)
        peer = sh.options.get("peer", "")
        if peer and peer not in shield_names:
            raise TopologyError(f"shield {sh.name} names unknown peer {peer}")
    for tap in s.taps:
        if tap.segment != "core" and tap.segment not in shield_names:
            raise TopologyError(f"tap {tap.name}: segment must be core or a shield name")
    have_template = False
    for a in s.actions:
        if a.kind not in ACTION_KINDS:
            raise TopologyError(f"action {a.name}: unknown kind {a.kind!r}")
        for key in ACTION_KINDS[a.kind]:
            if key not in a.options:
                raise TopologyError(f"action {a.name} needs {key}")
        if a.kind == "capture_template":
            have_template = True
        if a.kind == "phonejack2" and not have_template:
            raise TopologyError(f"action {a.name} needs an earlier capture_template action")
        if a.kind in ("printjack2", "phonejack2"):
            wanted = "printer" if a.kind == "printjack2" else "phone"
            for target in a.names("targets"):
                if target != DISCOVERED and s.device(target).kind != wanted:
                    raise TopologyError(f"action {a.name}: {target} is not a {wanted}")
        for key in ("devices", "caller", "callee", "reference"):
            for ref in a.names(key):
                if s.device(ref).kind != "phone":
                    raise TopologyError(f"action {a.name}: {ref} is not a phone")
        if a.kind in ("register", "call") and not s.of_kind("registrar"):
            raise TopologyError(f"action {a.name} needs a registrar")
        for key in ("tap", "against", "capture"):
            for ref in a.names(key):
                if ref not in {t.name for t in s.taps}:
                    raise TopologyError(f"action {a.name}: no tap named {ref}")
    for check in s.checks:
        owner = check.key.partition(".")[0]
        if owner not in names and owner != "scenario":
            raise TopologyError(f"assertion {check.key} refers to undeclared {owner!r}")
