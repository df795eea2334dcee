"""Scenario configuration: a JSON tree validated into frozen dataclasses.

Validation errors name the offending field by path, for example
``faults[1].until_tick``. ``SCHEMA`` is the published JSON Schema for the
same tree; ``load_scenario`` does not depend on a schema validator.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..netsim import FAULT_KINDS, FaultSpec

ARTIFACT_DIR_ENV = "EOVSIM_ARTIFACT_DIR"
DEFAULT_ARTIFACT_DIR = "artifacts"

PIPELINES = ("execute-order-validate", "order-execute", "lottery")
BACKENDS = {
    "execute-order-validate": ("solo", "cft-replicated"),
    "order-execute": ("solo",),
    "lottery": ("pow", "pos"),
}
CHAINCODES = ("kv", "token", "loop")
WORKLOADS = {
    "kv": ("put", "incr", "move"),
    "token": ("pay", "transfer"),
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def default_artifact_dir() -> Path:
    return Path(os.environ.get(ARTIFACT_DIR_ENV, DEFAULT_ARTIFACT_DIR))


@dataclass(frozen=True)
class ChannelSection:
    orgs: tuple[str, ...] = ("org1", "org2", "org3")
    peers_per_org: int = 1
    clients: tuple[str, ...] = ("alice", "bob")
    endorsement_policy: str | None = None  # default: majority of orgs
    batch_max_txs: int = 10
    batch_timeout: int = 2


@dataclass(frozen=True)
class ConsensusSection:
    backend: str = "solo"
    orderers: int = 1
    f_tolerated: int = 0
    # lottery
    producers: int = 4
    difficulty: int = 8
    hashrate: int = 32
    target_interval: int = 10
    retarget_window: int = 16
    slot_ticks: int = 5


@dataclass(frozen=True)
class NetworkSection:
    latency: int = 1
    jitter: int = 0
    msg_cap: int | None = None
    gossip_fanout: int = 3


@dataclass(frozen=True)
class WorkloadSection:
    chaincode: str = "kv"
    mix: tuple[tuple[str, int], ...] = (("incr", 1),)
    rate: int = 1  # proposals per client per active tick
    period: int = 1  # clients are active every ``period`` ticks
    keys: int = 8
    start: int = 1
    until: int | None = None  # last tick at which clients propose
    loop_tx_at: int | None = None
    double_spend: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    name: str = "scenario"
    pipeline: str = "execute-order-validate"
    duration: int = 100
    chaincodes: tuple[str, ...] = ("kv",)
    channel: ChannelSection = field(default_factory=ChannelSection)
    consensus: ConsensusSection = field(default_factory=ConsensusSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    workload: WorkloadSection = field(default_factory=WorkloadSection)
    faults: tuple[FaultSpec, ...] = ()
    step_budget: int | None = 100_000
    steps_per_tick: int = 1000
    blacklist_threshold: int = 10
    metrics_window: int = 10

    @property
    def orderer_ids(self) -> tuple[str, ...]:
        return tuple(f"orderer{i}" for i in range(self.consensus.orderers))

    @property
    def peer_ids(self) -> tuple[str, ...]:
        return tuple(f"peer{i}.{o}" for o in self.channel.orgs for i in range(self.channel.peers_per_org))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["workload"]["mix"] = {op: w for op, w in self.workload.mix}
        d["faults"] = [_fault_dict(f) for f in self.faults]
        return json.loads(json.dumps(d))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _fault_dict(f: FaultSpec) -> dict:
    d: dict[str, Any] = {"kind": f.kind, "from_tick": f.from_tick, "until_tick": f.until_tick}
    if f.target:
        d["target"] = f.target
    if f.groups:
        d["groups"] = [list(f.groups[0]), list(f.groups[1])]
    if f.strategy:
        d["strategy"] = f.strategy
    if f.rate:
        d["rate"] = f.rate
    return d


# -- validation -------------------------------------------------------------


def _want(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _int(tree: Mapping, key: str, path: str, default, minimum: int | None = 0, nullable: bool = False):
    v = tree.get(key, default)
    p = f"{path}.{key}" if path else key
    if v is None and nullable:
        return None
    _want(isinstance(v, int) and not isinstance(v, bool), p, f"expected an integer, got {v!r}")
    if minimum is not None:
        _want(v >= minimum, p, f"must be >= {minimum}")
    return v


def _str(tree: Mapping, key: str, path: str, default, choices: Sequence[str] | None = None, nullable=False):
    v = tree.get(key, default)
    p = f"{path}.{key}" if path else key
    if v is None and nullable:
        return None
    _want(isinstance(v, str) and v != "", p, f"expected a non-empty string, got {v!r}")
    if choices is not None:
        _want(v in choices, p, f"must be one of {', '.join(choices)}")
    return v


def _strs(tree: Mapping, key: str, path: str, default) -> tuple[str, ...]:
    v = tree.get(key, default)
    p = f"{path}.{key}" if path else key
    _want(isinstance(v, (list, tuple)) and v, p, "expected a non-empty list of strings")
    for i, s in enumerate(v):
        _want(isinstance(s, str) and s != "", f"{p}[{i}]", f"expected a non-empty string, got {s!r}")
    _want(len(set(v)) == len(v), p, "entries must be distinct")
    return tuple(v)


def _section(tree: Mapping, key: str) -> Mapping:
    v = tree.get(key, {})
    _want(isinstance(v, Mapping), key, "expected an object")
    return v


def _unknown(tree: Mapping, allowed: Sequence[str], path: str) -> None:
    for k in tree:
        p = f"{path}.{k}" if path else k
        _want(k in allowed, p, "unknown field")


def _channel(tree: Mapping) -> ChannelSection:
    d = ChannelSection()
    _unknown(tree, list(d.__dataclass_fields__), "channel")
    return ChannelSection(
        orgs=_strs(tree, "orgs", "channel", d.orgs),
        peers_per_org=_int(tree, "peers_per_org", "channel", d.peers_per_org, 1),
        clients=_strs(tree, "clients", "channel", d.clients),
        endorsement_policy=_str(tree, "endorsement_policy", "channel", None, nullable=True),
        batch_max_txs=_int(tree, "batch_max_txs", "channel", d.batch_max_txs, 1),
        batch_timeout=_int(tree, "batch_timeout", "channel", d.batch_timeout, 1),
    )


def _consensus(tree: Mapping, pipeline: str) -> ConsensusSection:
    d = ConsensusSection()
    _unknown(tree, list(d.__dataclass_fields__), "consensus")
    default_backend = BACKENDS[pipeline][0]
    backend = _str(tree, "backend", "consensus", default_backend, BACKENDS[pipeline])
    c = ConsensusSection(
        backend=backend,
        orderers=_int(tree, "orderers", "consensus", 3 if backend == "cft-replicated" else 1, 1),
        f_tolerated=_int(tree, "f_tolerated", "consensus", 1 if backend == "cft-replicated" else 0),
        producers=_int(tree, "producers", "consensus", d.producers, 1),
        difficulty=_int(tree, "difficulty", "consensus", d.difficulty, 1),
        hashrate=_int(tree, "hashrate", "consensus", d.hashrate, 1),
        target_interval=_int(tree, "target_interval", "consensus", d.target_interval, 1),
        retarget_window=_int(tree, "retarget_window", "consensus", d.retarget_window, 1),
        slot_ticks=_int(tree, "slot_ticks", "consensus", d.slot_ticks, 1),
    )
    if backend == "solo":
        _want(c.orderers == 1, "consensus.orderers", "solo ordering runs exactly one orderer")
    if backend == "cft-replicated":
        _want(c.orderers >= 2 * c.f_tolerated + 1, "consensus.orderers",
              f"f_tolerated={c.f_tolerated} needs >= {2 * c.f_tolerated + 1} orderers")
    _want(c.difficulty <= 32, "consensus.difficulty", "must be <= 32 bits in simulation")
    return c


def _network(tree: Mapping) -> NetworkSection:
    d = NetworkSection()
    _unknown(tree, list(d.__dataclass_fields__), "network")
    return NetworkSection(
        latency=_int(tree, "latency", "network", d.latency, 0),
        jitter=_int(tree, "jitter", "network", d.jitter, 0),
        msg_cap=_int(tree, "msg_cap", "network", d.msg_cap, 1, nullable=True),
        gossip_fanout=_int(tree, "gossip_fanout", "network", d.gossip_fanout, 1),
    )


def _workload(tree: Mapping, chaincodes: Sequence[str]) -> WorkloadSection:
    d = WorkloadSection()
    _unknown(tree, list(d.__dataclass_fields__), "workload")
    cc = _str(tree, "chaincode", "workload", d.chaincode, tuple(WORKLOADS))
    _want(cc in chaincodes, "workload.chaincode", f"chaincode {cc!r} is not registered in chaincodes")
    raw_mix = tree.get("mix", {WORKLOADS[cc][0]: 1} if cc != "kv" else dict(d.mix))
    _want(isinstance(raw_mix, Mapping) and raw_mix, "workload.mix", "expected an object of operation weights")
    mix = []
    for op in sorted(raw_mix):
        _want(op in WORKLOADS[cc], f"workload.mix.{op}", f"{cc} workload supports {', '.join(WORKLOADS[cc])}")
        mix.append((op, _int(raw_mix, op, "workload.mix", None, 1)))
    loop_at = _int(tree, "loop_tx_at", "workload", None, 0, nullable=True)
    if loop_at is not None:
        _want("loop" in chaincodes, "workload.loop_tx_at", "needs the loop chaincode registered")
    w = WorkloadSection(
        chaincode=cc,
        mix=tuple(mix),
        rate=_int(tree, "rate", "workload", d.rate, 0),
        period=_int(tree, "period", "workload", d.period, 1),
        keys=_int(tree, "keys", "workload", d.keys, 2),
        start=_int(tree, "start", "workload", d.start, 0),
        until=_int(tree, "until", "workload", None, 0, nullable=True),
        loop_tx_at=loop_at,
        double_spend=bool(tree.get("double_spend", False)),
    )
    if w.double_spend:
        _want(cc == "kv", "workload.double_spend", "the double-spend race runs on the kv chaincode")
    return w


def _fault(tree: Any, i: int, nodes: set[str]) -> FaultSpec:
    path = f"faults[{i}]"
    _want(isinstance(tree, Mapping), path, "expected an object")
    _unknown(tree, ("kind", "target", "from_tick", "until_tick", "groups", "strategy", "rate"), path)
    kind = _str(tree, "kind", path, None, FAULT_KINDS)
    from_tick = _int(tree, "from_tick", path, 0)
    until = _int(tree, "until_tick", path, None, 0, nullable=True)
    if until is not None:
        _want(until >= from_tick, f"{path}.until_tick", "must not precede from_tick")
    groups = None
    target = ""
    if kind == "partition":
        g = tree.get("groups")
        _want(isinstance(g, list) and len(g) == 2, f"{path}.groups", "expected two lists of node ids")
        groups = []
        for j, side in enumerate(g):
            _want(isinstance(side, list) and side, f"{path}.groups[{j}]", "expected a non-empty list")
            for k, n in enumerate(side):
                _want(n in nodes, f"{path}.groups[{j}][{k}]", f"unknown node {n!r}")
            groups.append(tuple(side))
        _want(not set(groups[0]) & set(groups[1]), f"{path}.groups", "groups must be disjoint")
        groups = tuple(groups)
    else:
        target = _str(tree, "target", path, None)
        _want(target in nodes, f"{path}.target", f"unknown node {target!r}")
    strategy = ""
    if kind == "byzantine-endorser":
        strategy = _str(tree, "strategy", path, None, ("forge-writeset", "wrong-signature"))
    rate = _int(tree, "rate", path, 1 if kind == "dos-client" else 0, 0)
    return FaultSpec(kind, target, from_tick, until, groups, strategy, rate)


def validate_scenario(tree: Mapping) -> ScenarioConfig:
    _want(isinstance(tree, Mapping), "<root>", "expected an object")
    _unknown(tree, list(ScenarioConfig.__dataclass_fields__), "")
    _want("seed" in tree, "seed", "is mandatory")
    seed = _int(tree, "seed", "", None, None)
    pipeline = _str(tree, "pipeline", "", "execute-order-validate", PIPELINES)
    chaincodes = _strs(tree, "chaincodes", "", ["kv"])
    for i, cc in enumerate(chaincodes):
        _want(cc in CHAINCODES, f"chaincodes[{i}]", f"unknown chaincode {cc!r}")
    channel = _channel(_section(tree, "channel"))
    consensus = _consensus(_section(tree, "consensus"), pipeline)
    network = _network(_section(tree, "network"))
    workload = _workload(_section(tree, "workload"), chaincodes)
    cfg_partial = ScenarioConfig(seed=seed, channel=channel, consensus=consensus)
    if pipeline == "lottery":
        nodes = {f"producer{i}" for i in range(consensus.producers)}
    else:
        nodes = set(cfg_partial.orderer_ids) | set(cfg_partial.peer_ids) | set(channel.clients)
    raw_faults = tree.get("faults", [])
    _want(isinstance(raw_faults, list), "faults", "expected a list")
    faults = tuple(_fault(f, i, nodes) for i, f in enumerate(raw_faults))
    for i, f in enumerate(faults):
        if f.kind == "dos-client":
            _want(f.target in channel.clients, f"faults[{i}].target", "dos-client must target a client")
            _want("loop" in chaincodes, f"faults[{i}]", "dos-client needs the loop chaincode registered")
        if f.kind == "byzantine-endorser":
            _want(f.target in cfg_partial.peer_ids, f"faults[{i}].target", "byzantine-endorser must target a peer")
    cfg = ScenarioConfig(
        seed=seed,
        name=_str(tree, "name", "", "scenario"),
        pipeline=pipeline,
        duration=_int(tree, "duration", "", 100),
        chaincodes=chaincodes,
        channel=channel,
        consensus=consensus,
        network=network,
        workload=workload,
        faults=faults,
        step_budget=_int(tree, "step_budget", "", 100_000, 1, nullable=True),
        steps_per_tick=_int(tree, "steps_per_tick", "", 1000, 1),
        blacklist_threshold=_int(tree, "blacklist_threshold", "", 10, 0),
        metrics_window=_int(tree, "metrics_window", "", 10, 1),
    )
    return cfg


# -- loading and overrides ----------------------------------------------------


def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(tree: Mapping, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.path=value`` overrides; values parse as JSON scalars when possible."""
    out = copy.deepcopy(dict(tree))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like path=value")
        path, raw = item.split("=", 1)
        value = _parse_scalar(raw)
        if isinstance(value, (dict, list)):
            raise ConfigError(path, "only scalars can be overridden from the command line")
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(path, f"{part} is not an object")
            node = nxt
        node[parts[-1]] = value
    return out


def load_scenario(source: str | os.PathLike | Mapping, overrides: Sequence[str] = ()) -> ScenarioConfig:
    """Load a scenario from a JSON file, a preset name, or an already-parsed tree."""
    from .presets import PRESETS

    if isinstance(source, Mapping):
        tree = dict(source)
    elif str(source) in PRESETS:
        tree = copy.deepcopy(PRESETS[str(source)])
    else:
        path = Path(source)
        try:
            tree = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON ({exc})") from None
    return validate_scenario(apply_overrides(tree, overrides))


_INT = {"type": "integer"}
_NAT = {"type": "integer", "minimum": 0}
_POS = {"type": "integer", "minimum": 1}
_NAME = {"type": "string", "minLength": 1}
_NAMES = {"type": "array", "items": _NAME, "minItems": 1, "uniqueItems": True}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eovsim scenario",
    "type": "object",
    "required": ["seed"],
    "additionalProperties": False,
    "properties": {
        "seed": _INT,
        "name": _NAME,
        "pipeline": {"enum": list(PIPELINES)},
        "duration": _NAT,
        "chaincodes": {"type": "array", "items": {"enum": list(CHAINCODES)}, "minItems": 1},
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "orgs": _NAMES,
                "peers_per_org": _POS,
                "clients": _NAMES,
                "endorsement_policy": {"type": ["string", "null"]},
                "batch_max_txs": _POS,
                "batch_timeout": _POS,
            },
        },
        "consensus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "backend": {"enum": sorted({b for bs in BACKENDS.values() for b in bs})},
                "orderers": _POS,
                "f_tolerated": _NAT,
                "producers": _POS,
                "difficulty": {"type": "integer", "minimum": 1, "maximum": 32},
                "hashrate": _POS,
                "target_interval": _POS,
                "retarget_window": _POS,
                "slot_ticks": _POS,
            },
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "latency": _NAT,
                "jitter": _NAT,
                "msg_cap": {"type": ["integer", "null"], "minimum": 1},
                "gossip_fanout": _POS,
            },
        },
        "workload": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "chaincode": {"enum": list(WORKLOADS)},
                "mix": {"type": "object", "additionalProperties": _POS},
                "rate": _NAT,
                "period": _POS,
                "keys": {"type": "integer", "minimum": 2},
                "start": _NAT,
                "until": {"type": ["integer", "null"], "minimum": 0},
                "loop_tx_at": {"type": ["integer", "null"], "minimum": 0},
                "double_spend": {"type": "boolean"},
            },
        },
        "faults": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": list(FAULT_KINDS)},
                    "target": _NAME,
                    "from_tick": _NAT,
                    "until_tick": {"type": ["integer", "null"], "minimum": 0},
                    "groups": {"type": "array", "items": _NAMES, "minItems": 2, "maxItems": 2},
                    "strategy": {"enum": ["forge-writeset", "wrong-signature"]},
                    "rate": _NAT,
                },
            },
        },
        "step_budget": {"type": ["integer", "null"], "minimum": 1},
        "steps_per_tick": _POS,
        "blacklist_threshold": _NAT,
        "metrics_window": _POS,
    },
}
