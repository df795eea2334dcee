"""Proof of importance: vested coins, net transaction partners, qualifying volume."""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .pos import NoEligibleValidator


@dataclass(frozen=True)
class ImportanceParams:
    min_vested: int
    min_vest_days: int
    min_tx_size: int
    window_days: int
    weights: tuple[float, float, float] = (0.5, 0.25, 0.25)

    def __post_init__(self):
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("weights must be non-negative with a positive sum")


@dataclass(frozen=True)
class Transfer:
    sender: str
    recipient: str
    amount: int
    day: int


@dataclass(frozen=True)
class Importance:
    score: float
    eligible: bool
    vested: int
    partners: int
    volume: int
    qualifying_txs: int


def vested_coins(lots: Iterable[tuple[int, int]], now: int, min_vest_days: int) -> int:
    """Coins from ``(amount, acquired_day)`` lots held at least ``min_vest_days``."""
    return sum(amount for amount, day in lots if now - day >= min_vest_days)


def importance_score(
    account: str,
    params: ImportanceParams,
    holdings: Mapping[str, Sequence[tuple[int, int]]],
    transfers: Iterable[Transfer],
    now: int,
) -> Importance:
    vested = vested_coins(holdings.get(account, ()), now, params.min_vest_days)
    window = [
        t for t in transfers
        if now - params.window_days <= t.day <= now and t.amount >= params.min_tx_size
    ]
    net: dict[str, int] = defaultdict(int)
    volume = count = 0
    for t in window:
        if t.sender == account and t.recipient != account:
            net[t.recipient] += t.amount
            volume += t.amount
            count += 1
        elif t.recipient == account and t.sender != account:
            net[t.sender] -= t.amount
    partners = sum(1 for v in net.values() if v > 0)
    if vested < params.min_vested:
        return Importance(0.0, False, vested, partners, volume, count)
    wv, wp, wt = params.weights
    score = wv * (vested - params.min_vested) + wp * partners + wt * volume
    return Importance(score, True, vested, partners, volume, count)


def select_harvester(scores: Mapping[str, Importance], rng: random.Random) -> str:
    """Weighted draw over eligible accounts with positive score."""
    ids = sorted(a for a, s in scores.items() if s.eligible and s.score > 0)
    if not ids:
        raise NoEligibleValidator("no eligible harvester")
    total = sum(scores[a].score for a in ids)
    r = rng.random() * total
    acc = 0.0
    for a in ids:
        acc += scores[a].score
        if r < acc:
            return a
    return ids[-1]
