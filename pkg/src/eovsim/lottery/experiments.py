"""Seeded lottery experiments: PoW interval convergence and nothing-at-stake fork persistence."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from statistics import mean

from ..crypto import H
from ..ledger import IdentityRegistry, make_signer
from .forktree import ChainBlock, ForkTree
from .pos import RELATIVE_VALUE, SignedHeader, StakeLedger, select_validator_pos, sign_header, slash
from .pow import PowParams, simulate_pow_chain


def pow_convergence(
    target_interval: int = 10,
    window: int = 32,
    start_difficulty: int = 6,
    hashrate: int = 100,
    settle_windows: int = 3,
    measure_windows: int = 5,
    seed: int = 7,
) -> tuple[float, list[int]]:
    """Mean block interval over the windows after ``settle_windows`` retargets."""
    params = PowParams(start_difficulty, target_interval, window, clamp=4.0, max_difficulty=16)
    run = simulate_pow_chain(params, hashrate, window * (settle_windows + measure_windows), seed)
    tail = run.intervals()[window * settle_windows :]
    return mean(tail), run.difficulties


@dataclass
class NothingAtStakeResult:
    persistence: int  # blocks added after the partition heals until one tip remains
    resolved: bool
    slashed: list[str] = field(default_factory=list)
    blocks: int = 0


def nothing_at_stake_run(
    seed: int,
    slashing: bool,
    n_validators: int = 12,
    hedger_fraction: float = 0.5,
    partition_slots: int = 6,
    lead: int = 3,
    horizon: int = 200,
    deposit: int = 10,
) -> NothingAtStakeResult:
    """Two branches grow during a partition; afterwards validators keep producing.

    Honest validators extend the fork-choice tip. Hedgers extend every tip
    still within ``lead`` of the main tip, because nothing stops them. With
    ``slashing`` on, two blocks by one producer at equal height on different
    parents are submitted as evidence and the producer is excluded.
    The fork is resolved once a single tip remains within ``lead``.
    """
    rng = random.Random(seed)
    ids = [f"v{i:02d}" for i in range(n_validators)]
    signers = {v: make_signer(v, "stakers", "validator") for v in ids}
    registry = IdentityRegistry(s.identity for s in signers.values())
    stake = StakeLedger()
    for v in ids:
        stake.lock(v, rng.randint(50, 150), deposit)
    order = ids[:]
    rng.shuffle(order)
    hedgers = set(order[: round(n_validators * hedger_fraction)])
    side_a = set(order[::2])

    genesis = ChainBlock(H(b"genesis"), None, 0)
    tree = ForkTree(genesis)
    signed: dict[str, list[SignedHeader]] = {v: [] for v in ids}

    def produce(v: str, parent: bytes, slot: int) -> bytes:
        height = tree.height(parent) + 1
        header = sign_header(signers[v], height, parent, slot.to_bytes(4, "big"))
        tree.add(ChainBlock(header.block_hash, parent, height, 1, v, slot))
        if slashing and not stake.validators[v].slashed:
            for other in signed[v]:
                if other.height == height and other.parent != parent:
                    slash(stake, registry, v, (other, header))
                    break
        signed[v].append(header)
        return header.block_hash

    # Partition: each side sees only its own branch.
    tips = {"a": tree.genesis, "b": tree.genesis}
    for slot in range(partition_slots):
        for side, members in (("a", side_a), ("b", set(ids) - side_a)):
            sub = StakeLedger({v: stake.validators[v] for v in members})
            v = select_validator_pos(sub, RELATIVE_VALUE, rng)
            tips[side] = produce(v, tips[side], slot)

    before = len(tree)
    for slot in range(partition_slots, partition_slots + horizon):
        if len(tree.competing_tips(lead)) == 1:
            return NothingAtStakeResult(len(tree) - before, True, sorted(v for v in ids if stake.validators[v].slashed), len(tree))
        v = select_validator_pos(stake, RELATIVE_VALUE, rng)
        if v in hedgers:
            for tip in sorted(tree.competing_tips(lead)):
                produce(v, tip, slot)
        else:
            produce(v, tree.main_tip, slot)
    resolved = len(tree.competing_tips(lead)) == 1
    return NothingAtStakeResult(len(tree) - before, resolved, sorted(v for v in ids if stake.validators[v].slashed), len(tree))


def nothing_at_stake_experiment(seeds: range | list[int], **kwargs) -> tuple[float, float]:
    """Mean fork persistence with slashing off and on over paired seeds."""
    off = [nothing_at_stake_run(s, False, **kwargs).persistence for s in seeds]
    on = [nothing_at_stake_run(s, True, **kwargs).persistence for s in seeds]
    return mean(off), mean(on)
