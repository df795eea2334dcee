"""Delegated proof of stake: stake-weighted witness election with reputation."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Candidate:
    id: str
    approval_stake: int = 0
    reputation: int = 0


@dataclass
class WitnessRoster:
    candidates: dict[str, Candidate] = field(default_factory=dict)
    n_witnesses: int = 3
    epoch_length: int = 10
    reputation_floor: int = -2
    active: list[str] = field(default_factory=list)
    votes: set[tuple[str, str]] = field(default_factory=set)
    warnings: int = 0

    def add_candidate(self, cid: str) -> None:
        self.candidates.setdefault(cid, Candidate(cid))

    def vote(self, stakeholder: str, witness: str, stake: int) -> bool:
        """Approve ``witness`` with ``stake``; a second vote for the same witness is rejected."""
        if witness not in self.candidates or (stakeholder, witness) in self.votes or stake <= 0:
            return False
        self.votes.add((stakeholder, witness))
        self.candidates[witness].approval_stake += stake
        return True

    def scheduled(self, slot: int) -> str:
        if not self.active:
            raise LookupError("no active witnesses")
        return self.active[slot % len(self.active)]

    def record_slot(self, witness: str, produced: bool) -> None:
        if not produced:
            self.candidates[witness].reputation -= 1


def elect_witnesses(roster: WitnessRoster) -> list[str]:
    """Top ``n_witnesses`` by approval stake among candidates at or above the reputation floor."""
    standing = [c for c in roster.candidates.values() if c.reputation >= roster.reputation_floor]
    ranked = sorted(standing, key=lambda c: (-c.approval_stake, c.id))
    if len(ranked) < roster.n_witnesses:
        roster.warnings += 1
    roster.active = [c.id for c in ranked[: roster.n_witnesses]]
    return list(roster.active)


def vote_witness_count(roster: WitnessRoster, proposed: int, approving_stake: int, total_stake: int) -> bool:
    """Change N only when strictly more than half of all stake approves."""
    if proposed >= 1 and total_stake > 0 and 2 * approving_stake > total_stake:
        roster.n_witnesses = proposed
        return True
    return False
