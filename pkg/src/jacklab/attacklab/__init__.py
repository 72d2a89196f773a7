"""Paper-exhaustion and INVITE floods, print-job sniffing, and RTP eavesdropping."""

from jacklab.attacklab.discover import DiscoveredDevice, discover
from jacklab.attacklab.eavesdrop import (
    ReconstructedStream,
    eavesdrop_rtp,
    normalized_cross_correlation,
    reconstruct,
    write_wav,
)
from jacklab.attacklab.errors import InventoryUnreachable, NotAnInvite, TargetNotAllowed, UnknownPayloadType
from jacklab.attacklab.phonejack import (
    craft_invite_replay,
    extract_invite_template,
    phonejack2,
    replay_frame,
    rewrite_to_number,
)
from jacklab.attacklab.printjack import printjack2, sniff_print_jobs
from jacklab.attacklab.targets import (
    FloodPlan,
    FloodReport,
    Target,
    TargetReport,
    check_targets,
    load_allowlist,
    load_targets,
    parse_targets,
)

__all__ = [
    "DiscoveredDevice",
    "FloodPlan",
    "FloodReport",
    "InventoryUnreachable",
    "NotAnInvite",
    "ReconstructedStream",
    "Target",
    "TargetNotAllowed",
    "TargetReport",
    "UnknownPayloadType",
    "check_targets",
    "craft_invite_replay",
    "discover",
    "eavesdrop_rtp",
    "extract_invite_template",
    "load_allowlist",
    "load_targets",
    "normalized_cross_correlation",
    "parse_targets",
    "phonejack2",
    "printjack2",
    "reconstruct",
    "replay_frame",
    "rewrite_to_number",
    "sniff_print_jobs",
    "write_wav",
]
