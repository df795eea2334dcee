import random

import pytest

from eovsim.netsim import FaultSpec, GossipPush, Network, Send, Timer, gossip_disseminate

PEERS = [f"peer{i}" for i in range(10)]


class Recorder:
    """Logs everything it sees; replies to ``("echo", x)`` and fires scripted timers."""

    def __init__(self, node_id, timers=()):
        self.node_id = node_id
        self.timers = list(timers)
        self.seen = []
        self.crashes = 0

    def start(self):
        return [Timer(d, p) for d, p in self.timers]

    def on_message(self, now, src, msg):
        self.seen.append((now, "msg", src, msg))
        if isinstance(msg, tuple) and msg[0] == "echo":
            return [Send(src, ("reply", msg[1]))]
        return []

    def on_timer(self, now, payload):
        self.seen.append((now, "timer", None, payload))
        if isinstance(payload, tuple) and payload[0] == "send":
            return [Send(payload[1], payload[2])]
        return []

    def on_crash(self, now):
        self.crashes += 1

    def on_recover(self, now):
        return [Timer(0, "recovered")]


def net_with(*nodes, **kw):
    net = Network(kw.pop("seed", 0), **kw)
    for n in nodes:
        net.add_node(n)
    return net


# -- event ordering -----------------------------------------------------------------


def test_same_tick_events_keep_insertion_order():
    a = Recorder("a")
    net = net_with(a)
    for label in ["first", "second", "third"]:
        net.schedule(5, "timer", "a", label)
    net.schedule(4, "timer", "a", "earlier")
    net.run(10)
    assert [p for _, _, _, p in a.seen] == ["earlier", "first", "second", "third"]


def test_events_processed_in_at_seq_order():
    rng = random.Random(1)
    a = Recorder("a")
    net = net_with(a)
    expected = []
    for i in range(200):
        at = rng.randrange(50)
        net.schedule(at, "timer", "a", i)
        expected.append((at, i))
    processed = []
    while (ev := net.step()) is not None:
        processed.append((ev.at, ev.seq))
    assert processed == sorted(processed)
    assert [p for _, _, _, p in a.seen] == [i for _, i in sorted(expected)]


def test_run_stops_at_until_inclusive():
    a = Recorder("a")
    net = net_with(a)
    for t in (3, 5, 6):
        net.schedule(t, "timer", "a", t)
    assert net.run(5) == 2
    assert net.now == 5 and net.pending() == 1
    with pytest.raises(ValueError):
        net.schedule(4, "timer", "a")


def test_latency_and_jitter_bounds():
    a, b = Recorder("a", [(0, ("send", "b", f"m{i}")) for i in range(50)]), Recorder("b")
    net = net_with(a, b, latency=3, jitter=2, seed=9)
    net.start()
    net.run(20)
    ticks = [t for t, *_ in b.seen]
    assert len(ticks) == 50 and min(ticks) >= 3 and max(ticks) <= 5
    assert len(set(ticks)) > 1


def test_per_link_latency_override():
    a = Recorder("a", [(0, ("send", "b", "x")), (0, ("send", "c", "y"))])
    b, c = Recorder("b"), Recorder("c")
    net = net_with(a, b, c, latency=1, link_latency={("a", "c"): 7})
    net.start()
    net.run(20)
    assert b.seen[0][0] == 1 and c.seen[0][0] == 7


def test_message_cap_spreads_departures():
    a = Recorder("a", [(0, ("send", "b", i)) for i in range(7)])
    b = Recorder("b")
    net = net_with(a, b, latency=1, msg_cap=3)
    net.start()
    net.run(10)
    assert [t for t, *_ in b.seen] == [1, 1, 1, 2, 2, 2, 3]


def test_negative_latency_rejected():
    with pytest.raises(ValueError):
        Network(0, latency=-1)


def test_duplicate_node_rejected():
    net = net_with(Recorder("a"))
    with pytest.raises(ValueError):
        net.add_node(Recorder("a"))


def test_unknown_destination_is_dropped():
    a = Recorder("a", [(0, ("send", "ghost", "x"))])
    net = net_with(a)
    net.start()
    net.run(5)
    assert net.dropped == 1 and any(line.endswith("drop,unknown node") for line in net.log)


# -- faults -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "spec",
    [
        dict(kind="explode", target="a"),
        dict(kind="crash", target="a", from_tick=5, until_tick=4),
        dict(kind="crash", target="a", from_tick=-1),
        dict(kind="crash"),
        dict(kind="partition", groups=(("a",), ("a", "b"))),
        dict(kind="partition"),
        dict(kind="byzantine-endorser", target="p", strategy="lie"),
    ],
)
def test_malformed_fault_specs(spec):
    with pytest.raises(ValueError):
        FaultSpec(**spec)


def test_message_to_crashed_node_dropped_and_logged():
    a = Recorder("a", [(2, ("send", "b", "lost")), (8, ("send", "b", "kept"))])
    b = Recorder("b")
    net = net_with(a, b)
    net.schedule_fault(FaultSpec("crash", "b", 1, 6))
    net.start()
    net.run(20)
    assert [m for _, kind, _, m in b.seen if kind == "msg"] == ["kept"]
    assert "3,b,drop,crashed str" in net.log
    assert b.crashes == 1
    assert (6, "timer", None, "recovered") in b.seen


def test_crashed_node_emits_nothing():
    a = Recorder("a", [(3, ("send", "b", "x"))])
    b = Recorder("b")
    net = net_with(a, b)
    net.schedule_fault(FaultSpec("crash", "a", 1, None))
    net.start()
    net.run(20)
    assert b.seen == [] and a.seen == []


def test_partition_drops_until_heal():
    a = Recorder("a", [(t, ("send", "b", t)) for t in range(0, 12, 2)])
    b, c = Recorder("b"), Recorder("c")
    net = net_with(a, b, c)
    net.schedule_fault(FaultSpec("partition", "", 3, 7, groups=(("a",), ("b", "c"))))
    net.start()
    net.run(20)
    # Sent at 2 arrives at 3: already cut. Sent at 6 arrives at 7: healed.
    assert [m for _, _, _, m in b.seen] == [0, 6, 8, 10]
    assert net.partitioned("a", "b") is False


def test_overlapping_partitions_heal_independently():
    net = net_with(Recorder("a"), Recorder("b"))
    net.schedule_fault(FaultSpec("partition", "", 1, 5, groups=(("a",), ("b",))))
    net.schedule_fault(FaultSpec("partition", "", 3, 9, groups=(("a",), ("b",))))
    net.run(6)
    assert net.partitioned("a", "b")
    net.run(9)
    assert not net.partitioned("a", "b")


def test_fault_isolation():
    """Injecting a fault leaves every non-target node's state untouched."""

    def snapshot(nodes):
        return {n.node_id: (list(n.seen), n.crashes) for n in nodes}

    nodes = [Recorder(x) for x in "abc"]
    net = net_with(*nodes)
    net.run(4)
    before = snapshot(nodes)
    net.schedule_fault(FaultSpec("crash", "b", 5, None))
    net.run(5)
    after = snapshot(nodes)
    assert after["a"] == before["a"] and after["c"] == before["c"]
    assert after["b"] != before["b"]


def test_byzantine_fault_reaches_only_target():
    class Endorser(Recorder):
        def on_fault(self, now, spec, inject):
            self.seen.append((now, "fault", spec.strategy, inject))
            return []

    e, other = Endorser("p0"), Endorser("p1")
    net = net_with(e, other)
    net.schedule_fault(FaultSpec("byzantine-endorser", "p0", 2, 4, strategy="forge-writeset"))
    net.run(10)
    assert e.seen == [(2, "fault", "forge-writeset", True), (4, "fault", "forge-writeset", False)]
    assert other.seen == []


# -- determinism ----------------------------------------------------------------------


def chatter(seed, jitter=2):
    nodes = [Recorder(f"n{i}", [(t, ("send", f"n{(i + t) % 4}", ("echo", t))) for t in range(1, 30, 3)]) for i in range(4)]
    net = net_with(*nodes, seed=seed, latency=1, jitter=jitter)
    net.schedule_fault(FaultSpec("crash", "n2", 10, 18))
    net.schedule_fault(FaultSpec("partition", "", 5, 12, groups=(("n0",), ("n1", "n3"))))
    net.start()
    net.run(60)
    return net


def test_identical_seed_identical_log():
    a, b = chatter(42), chatter(42)
    assert a.log == b.log and a.digest() == b.digest()


def test_digest_is_a_hash_of_the_log():
    import hashlib

    net = chatter(42)
    oracle = hashlib.sha256("".join(line + "\n" for line in net.log).encode()).hexdigest()
    assert net.digest() == oracle


def test_seed_changes_the_log_under_jitter():
    assert len({chatter(s).digest() for s in range(5)}) == 5


def test_keep_log_off_keeps_digest():
    a = chatter(3)
    nodes = [Recorder(f"n{i}", [(t, ("send", f"n{(i + t) % 4}", ("echo", t))) for t in range(1, 30, 3)]) for i in range(4)]
    b = net_with(*nodes, seed=3, latency=1, jitter=2, keep_log=False)
    b.schedule_fault(FaultSpec("crash", "n2", 10, 18))
    b.schedule_fault(FaultSpec("partition", "", 5, 12, groups=(("n0",), ("n1", "n3"))))
    b.start()
    b.run(60)
    assert b.log == [] and b.digest() == a.digest()


def test_node_rng_independent_of_event_order():
    a = Network(5).node_rng("x").random()
    net = Network(5)
    net.rng.random()
    assert net.node_rng("x").random() == a


# -- gossip ---------------------------------------------------------------------------


def test_gossip_ten_peers_fanout_three_within_six_rounds():
    rounds = [gossip_disseminate(PEERS, "peer0", 3, seed).rounds for seed in range(100)]
    assert None not in rounds
    assert max(rounds) <= 6


def test_gossip_is_deterministic():
    a = gossip_disseminate(PEERS, "peer3", 3, 17)
    b = gossip_disseminate(PEERS, "peer3", 3, 17)
    assert a == b


def test_gossip_partitioned_peer_receives_after_heal():
    cut = FaultSpec("partition", "", 0, 10, groups=(("peer9",), tuple(PEERS[:9])))
    out = gossip_disseminate(PEERS, "peer0", 3, 1, faults=[cut])
    # The heal is the first event of tick 10, so delivery at 10 is already after it.
    assert out.holders["peer9"] >= 10
    assert all(out.holders[p] < 10 for p in PEERS[:9])
    assert out.rounds == out.holders["peer9"]


def test_gossip_crashed_peer_never_receives():
    crash = FaultSpec("crash", "peer5", 0, None)
    out = gossip_disseminate(PEERS, "peer0", 3, 2, faults=[crash])
    assert "peer5" not in out.holders
    assert set(out.holders) == set(PEERS) - {"peer5"}
    assert out.rounds is not None and out.rounds <= 6


def test_gossip_unhealed_partition_reports_never():
    cut = FaultSpec("partition", "", 0, None, groups=(("peer9",), tuple(PEERS[:9])))
    out = gossip_disseminate(PEERS, "peer0", 3, 1, faults=[cut])
    assert "peer9" not in out.holders
    # Cut-off peers are not expected, the rest complete.
    assert out.rounds is not None


def test_gossip_push_describe():
    assert GossipPush("b7", None, 2).describe() == "gossip b7 r2"
