"""Loopback-bound simulated victims: printer, phones, registrar, and the link between them."""

from jacklab.simdevices.audio import ToneSpec, generate_tone, packetize, phone_call_audio
from jacklab.simdevices.config import PhoneConfig, PrinterConfig, RegistrarConfig, load_config
from jacklab.simdevices.errors import PortInUse, UnknownNumber, UnsafeBind
from jacklab.simdevices.inventory import (
    DeviceEntry,
    Inventory,
    InventoryServer,
    RemoteInventory,
    TestbedInventory,
)
from jacklab.simdevices.network import CORE, Network, Tap, Verdict
from jacklab.simdevices.phone import (
    CRASHED,
    IDLE,
    IN_CALL,
    REBOOTING,
    RINGING,
    PhoneService,
    PhoneState,
    phone_answer,
    phone_dial,
    phone_hangup,
    phone_on_datagram,
    phone_on_packet,
    phone_tick,
)
from jacklab.simdevices.printer import (
    OUT_OF_PAPER,
    PrinterService,
    PrinterState,
    PrintJob,
    printer_serve,
    submit_print_job,
)
from jacklab.simdevices.registrar import Registrar, RegistrarService, registrar_route

__all__ = [
    "CORE",
    "CRASHED",
    "DeviceEntry",
    "IDLE",
    "IN_CALL",
    "Inventory",
    "InventoryServer",
    "Network",
    "OUT_OF_PAPER",
    "PhoneConfig",
    "PhoneService",
    "PhoneState",
    "PortInUse",
    "PrintJob",
    "PrinterConfig",
    "PrinterService",
    "PrinterState",
    "REBOOTING",
    "RINGING",
    "Registrar",
    "RegistrarConfig",
    "RegistrarService",
    "RemoteInventory",
    "Tap",
    "TestbedInventory",
    "ToneSpec",
    "UnknownNumber",
    "UnsafeBind",
    "Verdict",
    "generate_tone",
    "load_config",
    "packetize",
    "phone_answer",
    "phone_call_audio",
    "phone_dial",
    "phone_hangup",
    "phone_on_datagram",
    "phone_on_packet",
    "phone_tick",
    "printer_serve",
    "registrar_route",
    "submit_print_job",
]
