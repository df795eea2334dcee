"""Seeded discrete-event network simulation.

Events are processed strictly in ``(at, seq)`` order, where ``seq`` is the
insertion counter, so a run is a pure function of its inputs and seed. Node
handlers return actions (:class:`Send`, :class:`Timer`) instead of touching
the network directly.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Protocol

DELIVER, TIMER, FAULT_INJECT, FAULT_HEAL = "deliver-message", "timer", "fault-inject", "fault-heal"
FAULT_KINDS = ("crash", "partition", "byzantine-endorser", "dos-client")


@dataclass(order=True)
class SimEvent:
    at: int
    seq: int
    kind: str = field(compare=False)
    target: str = field(compare=False)
    payload: Any = field(compare=False, default=None)
    source: str = field(compare=False, default="")


@dataclass(frozen=True)
class FaultSpec:
    kind: str
    target: str = ""
    from_tick: int = 0
    until_tick: int | None = None
    groups: tuple[tuple[str, ...], tuple[str, ...]] | None = None  # partition only
    strategy: str = ""  # byzantine-endorser: forge-writeset | wrong-signature
    rate: int = 0  # dos-client: loop txs per window

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.from_tick < 0 or (self.until_tick is not None and self.until_tick < self.from_tick):
            raise ValueError(f"fault interval [{self.from_tick}, {self.until_tick}) is malformed")
        if self.kind == "partition":
            if not self.groups or len(self.groups) != 2 or set(self.groups[0]) & set(self.groups[1]):
                raise ValueError("partition needs two disjoint groups")
        elif not self.target:
            raise ValueError(f"{self.kind} fault needs a target")
        if self.kind == "byzantine-endorser" and self.strategy not in ("forge-writeset", "wrong-signature"):
            raise ValueError(f"unknown byzantine strategy {self.strategy!r}")

    def describe(self) -> str:
        if self.kind == "partition":
            a, b = self.groups
            return f"partition {'+'.join(a)}|{'+'.join(b)}"
        return f"{self.kind} {self.target}" + (f" {self.strategy}" if self.strategy else "")


@dataclass(frozen=True)
class Send:
    dst: str
    msg: Any


@dataclass(frozen=True)
class Timer:
    delay: int
    payload: Any


Action = Send | Timer


class Node(Protocol):
    node_id: str

    def on_message(self, now: int, src: str, msg: Any) -> Iterable[Action]: ...

    def on_timer(self, now: int, payload: Any) -> Iterable[Action]: ...


def describe_message(msg: Any) -> str:
    describe = getattr(msg, "describe", None)
    if describe is not None:
        return describe()
    return type(msg).__name__


class Network:
    """Single logical event loop over a set of nodes.

    ``latency`` is the per-link base delay (overridable per ordered pair via
    ``link_latency``); each message adds ``rng.randint(0, jitter)``. A node may
    emit at most ``msg_cap`` messages per tick; excess sends queue up and
    leave on later ticks, which is the only bandwidth model.
    """

    def __init__(
        self,
        seed: int,
        latency: int = 1,
        jitter: int = 0,
        link_latency: dict[tuple[str, str], int] | None = None,
        msg_cap: int | None = None,
        keep_log: bool = True,
    ):
        if latency < 0 or jitter < 0:
            raise ValueError("latency and jitter must be non-negative")
        self.seed = seed
        self.rng = random.Random(seed)
        self.latency = latency
        self.jitter = jitter
        self.link_latency = dict(link_latency or {})
        self.msg_cap = msg_cap
        self.keep_log = keep_log
        self.now = 0
        self.nodes: dict[str, Any] = {}
        self.crashed: set[str] = set()
        self._cut: dict[int, tuple[frozenset, frozenset]] = {}
        self._queue: list[SimEvent] = []
        self._seq = 0
        self._sent_at: dict[str, tuple[int, int]] = {}  # node -> (tick, count)
        self._digest = hashlib.sha256()
        self.log: list[str] = []
        self.dropped = 0
        self.delivered = 0

    # -- wiring ------------------------------------------------------------

    def add_node(self, node) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"duplicate node id {node.node_id!r}")
        self.nodes[node.node_id] = node

    def start(self) -> None:
        """Call ``start()`` on every node that has one, in id order."""
        for node_id in sorted(self.nodes):
            start = getattr(self.nodes[node_id], "start", None)
            if start is not None:
                self._apply(node_id, start())

    def node_rng(self, node_id: str) -> random.Random:
        """Per-node RNG derived from the run seed (independent of event order)."""
        return random.Random(f"{self.seed}/{node_id}")

    # -- scheduling --------------------------------------------------------

    def schedule(self, at: int, kind: str, target: str, payload: Any = None, source: str = "") -> SimEvent:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        ev = SimEvent(at, self._seq, kind, target, payload, source)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_fault(self, spec: FaultSpec) -> None:
        target = spec.target or "*"
        self.schedule(spec.from_tick, FAULT_INJECT, target, spec)
        if spec.until_tick is not None:
            self.schedule(spec.until_tick, FAULT_HEAL, target, spec)

    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> int | None:
        return self._queue[0].at if self._queue else None

    # -- link state --------------------------------------------------------

    def partitioned(self, a: str, b: str) -> bool:
        for ga, gb in self._cut.values():
            if (a in ga and b in gb) or (a in gb and b in ga):
                return True
        return False

    def _link_delay(self, src: str, dst: str) -> int:
        base = self.link_latency.get((src, dst), self.latency)
        return base + (self.rng.randint(0, self.jitter) if self.jitter else 0)

    def _departure(self, src: str) -> int:
        if self.msg_cap is None:
            return self.now
        tick, count = self._sent_at.get(src, (self.now, 0))
        if tick < self.now:
            tick, count = self.now, 0
        if count >= self.msg_cap:
            tick, count = tick + 1, 0
        self._sent_at[src] = (tick, count + 1)
        return tick

    def send(self, src: str, dst: str, msg: Any) -> None:
        if src in self.crashed:
            return
        at = self._departure(src) + self._link_delay(src, dst)
        self.schedule(at, DELIVER, dst, msg, source=src)

    def _apply(self, node_id: str, actions: Iterable[Action] | None) -> None:
        for act in actions or ():
            if isinstance(act, Send):
                self.send(node_id, act.dst, act.msg)
            else:
                self.schedule(self.now + max(act.delay, 0), TIMER, node_id, act.payload)

    # -- tracing -----------------------------------------------------------

    def trace(self, node: str, kind: str, detail: str) -> None:
        line = f"{self.now},{node},{kind},{detail}"
        self._digest.update(line.encode() + b"\n")
        if self.keep_log:
            self.log.append(line)

    def digest(self) -> str:
        return self._digest.hexdigest()

    # -- processing --------------------------------------------------------

    def _fault(self, ev: SimEvent, inject: bool) -> None:
        spec: FaultSpec = ev.payload
        self.trace(ev.target, ev.kind, spec.describe())
        if spec.kind == "crash":
            node = self.nodes.get(spec.target)
            if inject:
                self.crashed.add(spec.target)
                if node is not None and hasattr(node, "on_crash"):
                    node.on_crash(self.now)
            elif spec.target in self.crashed:
                self.crashed.discard(spec.target)
                if node is not None and hasattr(node, "on_recover"):
                    self._apply(spec.target, node.on_recover(self.now))
        elif spec.kind == "partition":
            if inject:
                self._cut[ev.seq] = (frozenset(spec.groups[0]), frozenset(spec.groups[1]))
            else:
                for key, cut in list(self._cut.items()):
                    if cut == (frozenset(spec.groups[0]), frozenset(spec.groups[1])):
                        del self._cut[key]
                        break
        else:
            node = self.nodes.get(spec.target)
            if node is not None and hasattr(node, "on_fault"):
                self._apply(spec.target, node.on_fault(self.now, spec, inject))

    def step(self) -> SimEvent | None:
        """Process the next event; returns it, or ``None`` when idle."""
        if not self._queue:
            return None
        ev = heapq.heappop(self._queue)
        self.now = ev.at
        if ev.kind == FAULT_INJECT:
            self._fault(ev, True)
        elif ev.kind == FAULT_HEAL:
            self._fault(ev, False)
        elif ev.target in self.crashed:
            self.dropped += 1
            self.trace(ev.target, "drop", f"crashed {describe_message(ev.payload)}")
        elif ev.kind == DELIVER and self.partitioned(ev.source, ev.target):
            self.dropped += 1
            self.trace(ev.target, "drop", f"partition {ev.source} {describe_message(ev.payload)}")
        else:
            node = self.nodes.get(ev.target)
            if node is None:
                self.dropped += 1
                self.trace(ev.target, "drop", "unknown node")
            elif ev.kind == DELIVER:
                self.delivered += 1
                self.trace(ev.target, "recv", f"{ev.source} {describe_message(ev.payload)}")
                self._apply(ev.target, node.on_message(self.now, ev.source, ev.payload))
            else:
                self._apply(ev.target, node.on_timer(self.now, ev.payload))
        return ev

    def run(self, until: int) -> int:
        """Process every event with ``at <= until``; returns the count."""
        n = 0
        while self._queue and self._queue[0].at <= until:
            self.step()
            n += 1
        self.now = max(self.now, until)
        return n


# -- gossip ---------------------------------------------------------------


@dataclass(frozen=True)
class GossipPush:
    item_id: Any
    item: Any
    round: int

    def describe(self) -> str:
        return f"gossip {self.item_id} r{self.round}"


class GossipPeer:
    """Push gossip: forward each held item to ``fanout`` random neighbours on
    arrival and then once per round.

    An item stays hot for ``ttl`` rounds after it is first held, then is no
    longer pushed. ``on_item`` is called once per newly received item.
    """

    def __init__(self, node_id: str, neighbours: Iterable[str], fanout: int, rng: random.Random,
                 round_ticks: int = 1, ttl: int = 8, on_item=None):
        self.node_id = node_id
        self.neighbours = sorted(n for n in neighbours if n != node_id)
        self.fanout = fanout
        self.rng = rng
        self.round_ticks = round_ticks
        self.ttl = ttl
        self.on_item = on_item
        self.items: dict[Any, Any] = {}
        self.received_round: dict[Any, int] = {}
        self._hot: dict[Any, int] = {}
        self._ticking = False

    def _ensure_ticking(self) -> list[Action]:
        if self._ticking:
            return []
        self._ticking = True
        return [Timer(self.round_ticks, "gossip-round")]

    def _push(self, item_id) -> list[Action]:
        k = min(self.fanout, len(self.neighbours))
        rnd = self.received_round[item_id] + self.ttl - self._hot[item_id] + 1
        msg = GossipPush(item_id, self.items[item_id], rnd)
        out: list[Action] = [Send(dst, msg) for dst in self.rng.sample(self.neighbours, k)]
        self._hot[item_id] -= 1
        if self._hot[item_id] <= 0:
            del self._hot[item_id]
        return out

    def hold(self, item_id, item, round_no: int = 0) -> list[Action]:
        """Take a new item and push it on at once; later rounds follow on the timer."""
        if item_id in self.items:
            return []
        self.items[item_id] = item
        self.received_round[item_id] = round_no
        self._hot[item_id] = self.ttl
        out = []
        if self.on_item is not None:
            out.extend(self.on_item(item_id, item) or ())
        out += self._push(item_id)
        return out + (self._ensure_ticking() if self._hot else [])

    def on_message(self, now, src, msg):
        if isinstance(msg, GossipPush):
            return self.hold(msg.item_id, msg.item, msg.round)
        return []

    def on_timer(self, now, payload):
        if payload != "gossip-round":
            return []
        out: list[Action] = []
        for item_id in list(self._hot):
            out += self._push(item_id)
        if self._hot:
            out.append(Timer(self.round_ticks, "gossip-round"))
        else:
            self._ticking = False
        return out

    def on_crash(self, now):
        self._ticking = False

    def on_recover(self, now):
        return self._ensure_ticking() if self._hot else []


@dataclass
class GossipOutcome:
    rounds: int | None  # rounds until every reachable correct peer held the item
    holders: dict[str, int]  # peer -> round in which it first held the item
    digest: str


def gossip_disseminate(
    peer_ids: Iterable[str],
    origin: str,
    fanout: int,
    seed: int,
    *,
    faults: Iterable[FaultSpec] = (),
    max_rounds: int = 64,
    item_id: Any = "block",
    ttl: int | None = None,
) -> GossipOutcome:
    """Disseminate one item from ``origin`` over a full mesh of peers.

    Round r is the tick interval ``(r-1, r]``; every message takes one tick.
    ``rounds`` counts rounds until all peers that are neither crashed nor cut
    off at the end of the run hold the item (``None`` if some never do).
    """
    ids = sorted(peer_ids)
    net = Network(seed, latency=1)
    peers = {
        pid: GossipPeer(pid, ids, fanout, net.node_rng(pid), ttl=ttl or max_rounds)
        for pid in ids
    }
    for p in peers.values():
        net.add_node(p)
    for spec in faults:
        net.schedule_fault(spec)
    net.run(0)
    if origin not in net.crashed:
        net._apply(origin, peers[origin].hold(item_id, None, 0))
    arrival: dict[str, int] = {}
    while net.peek_time() is not None and net.now <= max_rounds:
        ev = net.step()
        if ev is None:
            break
        for pid, p in peers.items():
            if pid not in arrival and item_id in p.items:
                arrival[pid] = 0 if pid == origin else net.now
    expected = [pid for pid in ids if pid not in net.crashed and not net.partitioned(origin, pid)]
    done = all(pid in arrival for pid in expected)
    rounds = max((arrival[pid] for pid in expected), default=0) if done else None
    return GossipOutcome(rounds, arrival, net.digest())
