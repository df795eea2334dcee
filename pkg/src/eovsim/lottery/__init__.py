"""Permissionless block production: PoW, PoS, DPoS, PoI and the fork tree."""

from .dpos import Candidate, WitnessRoster, elect_witnesses, vote_witness_count
from .forktree import ChainBlock, ForkTree, fork_choice
from .poi import Importance, ImportanceParams, Transfer, importance_score, select_harvester, vested_coins
from .pos import (
    COIN_AGE,
    RELATIVE_VALUE,
    NoEligibleValidator,
    SignedHeader,
    StakeLedger,
    ValidatorStake,
    coin_age,
    select_validator_pos,
    sign_header,
    slash,
)
from .pow import PowParams, leading_zero_bits, mine, pow_attempt, pow_hash, retarget_difficulty, simulate_pow_chain

__all__ = [
    "COIN_AGE",
    "Candidate",
    "ChainBlock",
    "ForkTree",
    "Importance",
    "ImportanceParams",
    "NoEligibleValidator",
    "PowParams",
    "RELATIVE_VALUE",
    "SignedHeader",
    "StakeLedger",
    "Transfer",
    "ValidatorStake",
    "WitnessRoster",
    "coin_age",
    "elect_witnesses",
    "fork_choice",
    "importance_score",
    "leading_zero_bits",
    "mine",
    "pow_attempt",
    "pow_hash",
    "retarget_difficulty",
    "select_harvester",
    "select_validator_pos",
    "sign_header",
    "simulate_pow_chain",
    "slash",
    "vested_coins",
    "vote_witness_count",
]
