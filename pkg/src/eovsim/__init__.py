"""Deterministic simulator of an execute-order-validate permissioned ledger.

Subpackages: ``ordering`` (solo and replicated orderers), ``lottery``
(permissionless block production), ``script`` (spending conditions),
``contracts`` (built-in chaincodes) and ``harness`` (scenarios, metrics, CLI).
"""

from .ledger import Block, BlockStore, TransactionEnvelope, verify_chain
from .local import LocalChannel, make_channel
from .state import StateStore, Version
from .validation import PeerLedger, replay_ledger

__version__ = "0.1.0"

__all__ = [
    "Block",
    "BlockStore",
    "LocalChannel",
    "PeerLedger",
    "StateStore",
    "TransactionEnvelope",
    "Version",
    "make_channel",
    "replay_ledger",
    "verify_chain",
]
