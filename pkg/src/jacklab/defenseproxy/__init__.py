"""Per-phone shield: replay filter for signaling and an authenticated tunnel for audio."""

from jacklab.defenseproxy.errors import AuthenticationFailure, PayloadTooLarge, PersistenceFailure
from jacklab.defenseproxy.replay import ACCEPT, DROP, ReplayFilterState, replay_filter
from jacklab.defenseproxy.rules import QueueRule, classify, default_rules, validate_rules
from jacklab.defenseproxy.shield import (
    RemoteShield,
    Shield,
    ShieldConfig,
    ShieldService,
    load_shield_config,
    new_key_hex,
    parse_counters,
    shield_serve,
)
from jacklab.defenseproxy.tunnel import EXPANSION, TunnelConfig, tunnel_decrypt, tunnel_encrypt

__all__ = [
    "ACCEPT",
    "AuthenticationFailure",
    "DROP",
    "EXPANSION",
    "PayloadTooLarge",
    "PersistenceFailure",
    "QueueRule",
    "RemoteShield",
    "ReplayFilterState",
    "Shield",
    "ShieldConfig",
    "ShieldService",
    "TunnelConfig",
    "classify",
    "default_rules",
    "load_shield_config",
    "new_key_hex",
    "parse_counters",
    "replay_filter",
    "shield_serve",
    "tunnel_decrypt",
    "tunnel_encrypt",
    "validate_rules",
]
