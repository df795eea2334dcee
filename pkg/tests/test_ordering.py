import pytest

from eovsim.harness.experiments import ordering_safety_suite, ordering_throughput
from eovsim.ledger import InvalidConfigError, make_signer, new_envelope
from eovsim.local import make_channel
from eovsim.netsim import FaultSpec, Network, Send, Timer
from eovsim.ordering import (
    LEADER,
    Broadcast,
    CFTOrderer,
    DeliverBlock,
    OrderingConfig,
    SoloOrderer,
    committed_prefix_agrees,
    cut_block,
)


def envs(n, client="alice", start=0, setup=None):
    setup = setup or make_channel()
    return [new_envelope(setup.signer(client), "kv", "put", (b"k%d" % i, b"v"), i) for i in range(start, start + n)]


# -- block cutting and config ------------------------------------------------------


def test_cut_sizes():
    pool, sizes, seq = envs(10), [], 1
    while True:
        batch, pool = cut_block(pool, 4, seq)
        if batch is None:
            break
        sizes.append(len(batch.txs))
        assert batch.seq == seq
        seq += 1
    assert sizes == [4, 4, 2]


def test_empty_pool_cuts_nothing():
    assert cut_block([], 4, 1) == (None, [])
    solo = SoloOrderer("orderer0", make_channel().genesis)
    assert solo.tick(100) == [] and solo.tick(200, force=True) == []
    assert solo.ledger.height == 0


@pytest.mark.parametrize(
    "kw, field",
    [
        (dict(backend="cft-replicated", orderer_nodes=("a", "b"), f_tolerated=1), "orderer_nodes"),
        (dict(backend="solo", orderer_nodes=("a", "b")), "orderer_nodes"),
        (dict(backend="pbft", orderer_nodes=("a",)), "backend"),
        (dict(backend="solo", orderer_nodes=("a",), batch_max_txs=0), "batch_max_txs"),
        (dict(backend="solo", orderer_nodes=("a", "a")), "orderer_nodes"),
    ],
)
def test_ordering_config_rejected(kw, field):
    base = dict(batch_max_txs=4, batch_timeout=2)
    base.update(kw)
    with pytest.raises(InvalidConfigError) as exc:
        OrderingConfig(**base)
    assert exc.value.field == field


def test_cft_sizing_accepted():
    OrderingConfig("cft-replicated", 4, 2, ("a", "b", "c"), 1)
    OrderingConfig("cft-replicated", 4, 2, tuple("abcde"), 2)


# -- solo ------------------------------------------------------------------------------


def test_solo_broadcast_access_and_dedup():
    setup = make_channel()
    solo = SoloOrderer("orderer0", setup.genesis)
    good = envs(3, setup=setup)
    rogue = new_envelope(make_signer("mallory", "outsider", "client"), "kv", "put", (b"x", b"y"), 0)
    assert all(solo.broadcast(tx) for tx in good)
    assert not solo.broadcast(rogue)
    assert solo.broadcast(good[0])  # duplicate accepted but pooled once
    solo.tick(0, force=True)
    assert solo.broadcast(good[1])  # already ordered: not pooled again
    solo.tick(1, force=True)
    ids = [tx.tx_id for b in solo.delivered for tx in b.txs]
    assert sorted(ids) == sorted(tx.tx_id for tx in good)
    assert rogue.tx_id not in ids


def test_solo_orders_txs_with_bogus_endorsements():
    # The orderer never looks inside; validation happens downstream.
    setup = make_channel()
    solo = SoloOrderer("orderer0", setup.genesis)
    tx = envs(1, setup=setup)[0]
    assert tx.endorsements == ()
    solo.broadcast(tx)
    [block] = solo.tick(0, force=True)
    assert block.txs == (tx,)


def test_solo_batch_timeout_and_deferred_deliver():
    setup = make_channel(batch_max_txs=3, batch_timeout=5)
    solo = SoloOrderer("orderer0", setup.genesis)
    for tx in envs(2, setup=setup):
        solo.broadcast(tx, now=10)
    assert solo.tick(14) == []
    assert solo.deliver(1) is None
    [b] = solo.tick(15)
    assert solo.deliver(1) == b and len(b.txs) == 2
    with pytest.raises(ValueError):
        solo.deliver(-1)
    for tx in envs(7, setup=setup, start=2):
        solo.broadcast(tx, now=20)
    assert [len(b.txs) for b in solo.tick(20)] == [3, 3]
    assert solo.deliver(5) is None
    assert [len(b.txs) for b in solo.tick(25)] == [1]
    assert solo.deliver(4).seq == 4


# -- CFT cluster over netsim ----------------------------------------------------------------


class Feeder:
    """Broadcasts each scheduled envelope to every orderer."""

    def __init__(self, orderers, schedule):
        self.node_id = "client"
        self.orderers = orderers
        self.schedule = schedule
        self.blocks = {o: [] for o in orderers}

    def start(self):
        return [Timer(t, t) for t in sorted(self.schedule)]

    def on_timer(self, now, tick):
        return [Send(o, Broadcast(tx)) for tx in self.schedule[tick] for o in self.orderers]

    def on_message(self, now, src, msg):
        if isinstance(msg, DeliverBlock):
            self.blocks[src].append(msg.block)
        return []


def cluster(n, f, schedule, seed=0, batch_max=1):
    orderers = tuple(f"orderer{i}" for i in range(n))
    setup = make_channel(backend="cft-replicated", orderers=orderers, f_tolerated=f, batch_max_txs=batch_max, batch_timeout=2)
    net = Network(seed, latency=1)
    nodes = [CFTOrderer(o, setup.genesis, subscribers=("client",)) for o in orderers]
    feeder = Feeder(orderers, {t: [] for t in schedule})
    for node in [*nodes, feeder]:
        net.add_node(node)
    return setup, net, nodes, feeder


def feed(setup, feeder, ticks, start_nonce=0):
    for i, t in enumerate(ticks):
        feeder.schedule.setdefault(t, []).append(envs(1, setup=setup, start=start_nonce + i)[0])


def heights(nodes):
    return [n.ledger.height for n in nodes]


def test_lowest_id_wins_first_election():
    setup, net, nodes, feeder = cluster(3, 1, [])
    net.start()
    net.run(30)
    assert [n.role for n in nodes] == [LEADER, "follower", "follower"]


def test_leader_crash_failover_keeps_committed_prefix():
    ticks = list(range(20, 30, 2))
    setup, net, nodes, feeder = cluster(3, 1, ticks)
    feed(setup, feeder, ticks)
    net.start()
    net.run(40)
    assert nodes[0].role == LEADER
    assert heights(nodes) == [5, 5, 5]  # seq 0..5 committed everywhere
    before = [b.block_hash for b in nodes[0].ledger.blocks()]
    net.schedule_fault(FaultSpec("crash", "orderer0", 41, None))
    later = list(range(80, 90, 2))
    feed(setup, feeder, later, start_nonce=100)
    for t in later:
        net.schedule(t, "timer", "client", t)
    net.run(150)
    assert nodes[1].role == LEADER
    for n in nodes[1:]:
        assert [b.block_hash for b in n.ledger.blocks()][: len(before)] == before
        assert n.ledger.height == 10
    assert committed_prefix_agrees(nodes)


@pytest.mark.parametrize("n, f, isolated", [(3, 1, ("orderer0",)), (5, 2, ("orderer0", "orderer4"))])
def test_minority_side_with_leader_commits_nothing(n, f, isolated):
    ticks = list(range(20, 120, 3))
    setup, net, nodes, feeder = cluster(n, f, ticks)
    feed(setup, feeder, ticks)
    rest = tuple(o.node_id for o in nodes if o.node_id not in isolated)
    net.schedule_fault(FaultSpec("partition", "", 50, 110, groups=(isolated, rest)))
    net.start()
    net.run(50)
    assert nodes[0].role == LEADER
    frozen = {o.node_id: o.ledger.height for o in nodes if o.node_id in isolated}
    for t in range(51, 110):
        net.run(t)
        assert all(o.ledger.height == frozen[o.node_id] for o in nodes if o.node_id in isolated)
    majority = [o for o in nodes if o.node_id in rest]
    assert all(o.ledger.height > max(frozen.values()) for o in majority)
    net.run(250)
    assert committed_prefix_agrees(nodes)
    assert len(set(heights(nodes))) == 1
    ids = [tx.tx_id for b in nodes[0].ledger.blocks() for tx in b.txs]
    assert len(ids) == len(set(ids)) == len(ticks)


def test_broadcast_to_every_orderer_delivered_once():
    ticks = [5, 5, 6, 30, 31]
    setup, net, nodes, feeder = cluster(3, 1, ticks, batch_max=2)
    feed(setup, feeder, ticks)
    net.start()
    net.run(80)
    for blocks in feeder.blocks.values():
        ids = [tx.tx_id for b in blocks for tx in b.txs]
        assert len(ids) == len(set(ids)) == 5
    # Same seq at two orderers means the same block.
    a, b = feeder.blocks["orderer0"], feeder.blocks["orderer1"]
    assert {x.seq: x.block_hash for x in a} == {x.seq: x.block_hash for x in b}


def test_safety_small_suite():
    reports = ordering_safety_suite(range(25))
    assert [r.seed for r in reports if r.violations] == []
    assert sum(r.validity is True for r in reports) > 15
    assert all(r.delivered > 0 for r in reports)


def test_throughput_does_not_grow_with_cluster_size():
    values = [ordering_throughput(n, duration=200) for n in (3, 5, 7)]
    assert values[0] > 0
    for small, big in zip(values, values[1:]):
        assert big <= small * 1.10
