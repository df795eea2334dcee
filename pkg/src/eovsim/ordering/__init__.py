"""Total-order broadcast: block cutting, solo sequencer, CFT replicated log."""

from .base import (
    AppendAck,
    AppendEntries,
    Broadcast,
    DeliverBlock,
    Forward,
    OrderedBatch,
    OrderingConfig,
    PendingPool,
    VoteGrant,
    VoteRequest,
    cut_block,
    may_broadcast,
)
from .cft import CANDIDATE, FOLLOWER, LEADER, CFTOrderer, committed_prefix_agrees
from .solo import SoloOrderer


def make_orderers(genesis, subscribers=(), **cft_kwargs):
    """Build the orderer nodes named by the genesis config's consensus section."""
    config = OrderingConfig.from_channel(genesis.config)
    if config.backend == "solo":
        return [SoloOrderer(config.orderer_nodes[0], genesis, subscribers, config)]
    return [CFTOrderer(n, genesis, config, subscribers, **cft_kwargs) for n in config.orderer_nodes]


__all__ = [
    "AppendAck",
    "AppendEntries",
    "Broadcast",
    "CANDIDATE",
    "CFTOrderer",
    "DeliverBlock",
    "FOLLOWER",
    "Forward",
    "LEADER",
    "OrderedBatch",
    "OrderingConfig",
    "PendingPool",
    "SoloOrderer",
    "VoteGrant",
    "VoteRequest",
    "committed_prefix_agrees",
    "cut_block",
    "make_orderers",
    "may_broadcast",
]
