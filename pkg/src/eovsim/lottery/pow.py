"""Proof of work: leading-zero-bit puzzle and log-ratio difficulty retargeting."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

NONCE_BYTES = 8


@dataclass(frozen=True)
class PowParams:
    difficulty: int
    target_interval: int
    retarget_window: int
    clamp: float = 4.0
    max_difficulty: int = 256

    def __post_init__(self):
        if self.difficulty < 1:
            raise ValueError("difficulty must be >= 1")
        if self.clamp <= 1:
            raise ValueError("clamp must exceed 1")
        if self.target_interval <= 0 or self.retarget_window < 1:
            raise ValueError("target interval and window must be positive")


def pow_hash(header: bytes, nonce: int) -> bytes:
    return hashlib.sha256(header + nonce.to_bytes(NONCE_BYTES, "big")).digest()


def leading_zero_bits(digest: bytes) -> int:
    n = int.from_bytes(digest, "big")
    return len(digest) * 8 - n.bit_length()


def pow_attempt(header: bytes, nonce: int, difficulty: int) -> bool:
    """One hash; solved iff it has at least ``difficulty`` leading zero bits."""
    return leading_zero_bits(pow_hash(header, nonce)) >= difficulty


def retarget_difficulty(params: PowParams, timestamps: Sequence[int], difficulty: int | None = None) -> int:
    """New difficulty from the timestamps of one complete window.

    ``timestamps`` holds ``retarget_window + 1`` block times (the block that
    opened the window and each block in it). The difficulty moves by
    ``round(log2(target / actual))`` bits with the ratio clamped to
    ``[1/clamp, clamp]``, and never drops below 1.
    """
    d = params.difficulty if difficulty is None else difficulty
    if len(timestamps) != params.retarget_window + 1:
        raise ValueError(f"window needs {params.retarget_window + 1} timestamps, got {len(timestamps)}")
    target = params.target_interval * params.retarget_window
    actual = timestamps[-1] - timestamps[0]
    ratio = params.clamp if actual <= 0 else target / actual
    ratio = min(max(ratio, 1 / params.clamp), params.clamp)
    step = math.floor(math.log2(ratio) + 0.5)
    return min(max(1, d + step), params.max_difficulty)


def mine(header: bytes, difficulty: int, start: int = 0, attempts: int = 1 << 32) -> tuple[int | None, int]:
    """Scan nonces from ``start``; returns ``(nonce or None, attempts used)``."""
    for i in range(attempts):
        if pow_attempt(header, start + i, difficulty):
            return start + i, i + 1
    return None, attempts


@dataclass
class PowRun:
    timestamps: list[int] = field(default_factory=list)
    difficulties: list[int] = field(default_factory=list)
    attempts: int = 0

    def intervals(self) -> list[int]:
        t = self.timestamps
        return [b - a for a, b in zip(t, t[1:])]


def simulate_pow_chain(params: PowParams, hashrate: int, n_blocks: int, seed: int) -> PowRun:
    """Mine ``n_blocks`` on one chain with ``hashrate`` real hash attempts per tick.

    Block ``i`` gets the tick in which its puzzle was solved; several blocks
    may land in one tick. Difficulty is retargeted after every full window.
    """
    rng = random.Random(seed)
    run = PowRun(timestamps=[0], difficulties=[])
    difficulty = params.difficulty
    tick, budget = 0, hashrate
    prev = b"\x00" * 32
    while len(run.timestamps) <= n_blocks:
        header = prev + rng.getrandbits(64).to_bytes(8, "big") + difficulty.to_bytes(2, "big")
        nonce = 0
        while True:
            if budget == 0:
                tick += 1
                budget = hashrate
            budget -= 1
            run.attempts += 1
            if pow_attempt(header, nonce, difficulty):
                break
            nonce += 1
        prev = pow_hash(header, nonce)
        run.timestamps.append(tick)
        run.difficulties.append(difficulty)
        height = len(run.timestamps) - 1
        if height % params.retarget_window == 0:
            window = run.timestamps[-params.retarget_window - 1 :]
            difficulty = retarget_difficulty(params, window, difficulty)
    return run
