"""Seeded transaction workloads shared by every pipeline.

The same scenario and seed produce the same per-client request stream no
matter which pipeline consumes it, which is what the cross-pipeline state
comparison relies on.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .config import ScenarioConfig

SETUP_GAP = 20  # ticks between setup phases; covers a commit round trip under jitter
DOUBLE_SPEND_BALANCE = 10


@dataclass(frozen=True)
class TxSpec:
    chaincode: str
    operation: str
    args: tuple

    def describe(self) -> str:
        return f"{self.chaincode}.{self.operation}"


class Workload:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.w = cfg.workload
        self.clients = list(cfg.channel.clients)
        self._rngs = {c: random.Random(f"{cfg.seed}/workload/{c}") for c in self.clients}
        self._counter = {c: 0 for c in self.clients}
        ops, weights = zip(*self.w.mix)
        self._ops, self._weights = list(ops), list(weights)

    @property
    def last_tick(self) -> int:
        return self.w.until if self.w.until is not None else self.cfg.duration

    def requests(self, client: str, tick: int) -> list[TxSpec]:
        """Requests ``client`` issues at ``tick``; call once per (client, tick) in tick order."""
        out: list[TxSpec] = []
        if self.w.loop_tx_at == tick and client == self.clients[0]:
            out.append(TxSpec("loop", "spin", ()))
        if tick < self.w.start or tick > self.last_tick:
            return out
        if self.w.double_spend:
            return out + self._double_spend(client, tick)
        if self.w.chaincode == "token":
            return out + self._token(client, tick)
        if (tick - self.w.start) % self.w.period:
            return out
        return out + [self._kv(client) for _ in range(self.w.rate)]

    def _double_spend(self, client: str, tick: int) -> list[TxSpec]:
        racers = self.clients[:2]
        if tick == self.w.start and client == racers[0]:
            return [TxSpec("kv", "put", ("acct", str(DOUBLE_SPEND_BALANCE)))]
        if tick == self.w.start + SETUP_GAP and client in racers:
            return [TxSpec("kv", "move", ("acct", f"wallet/{client}", str(DOUBLE_SPEND_BALANCE)))]
        return []

    def _kv(self, client: str) -> TxSpec:
        rng = self._rngs[client]
        op = rng.choices(self._ops, self._weights)[0]
        n = self._counter[client]
        self._counter[client] += 1
        if op == "put":
            return TxSpec("kv", "put", (f"{client}/{n}", str(n)))
        if op == "incr":
            return TxSpec("kv", "incr", (f"k{rng.randrange(self.w.keys)}", "1"))
        src, dst = rng.sample(range(self.w.keys), 2)
        return TxSpec("kv", "move", (f"k{src}", f"k{dst}", "1"))

    def _token(self, client: str, tick: int) -> list[TxSpec]:
        """Owner mints, funds every other client one phase apart, then everyone pays.

        ``pay`` goes to the client's own sink account, so honest clients never
        contend; ``transfer`` picks a random peer and does.
        """
        owner = self.clients[0]
        start = self.w.start
        if tick == start:
            return [TxSpec("token", "init", (owner, "1000000"))] if client == owner else []
        paying_from = start + SETUP_GAP * len(self.clients)
        if tick < paying_from:
            phase, rem = divmod(tick - start, SETUP_GAP)
            if client == owner and not rem and 1 <= phase < len(self.clients):
                return [TxSpec("token", "transfer", (self.clients[phase], "1000"))]
            return []
        if (tick - paying_from) % self.w.period:
            return []
        rng = self._rngs[client]
        others = [c for c in self.clients if c != client]
        out = []
        for _ in range(self.w.rate):
            op = rng.choices(self._ops, self._weights)[0]
            if op == "transfer" and others:
                out.append(TxSpec("token", "transfer", (rng.choice(others), str(rng.randint(1, 3)))))
            else:
                out.append(TxSpec("token", "transfer", (f"sink/{client}", str(rng.randint(1, 3)))))
        return out
