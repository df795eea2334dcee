"""Named scenarios runnable as ``eovsim run <name>``."""

from __future__ import annotations

PRESETS: dict[str, dict] = {
    "happy-path": {
        "name": "happy-path",
        "seed": 1,
        "duration": 150,
        "chaincodes": ["token"],
        "channel": {"clients": ["alice", "bob", "carol"]},
        "workload": {"chaincode": "token", "mix": {"pay": 1}, "period": 8, "until": 120},
    },
    "kv-puts": {
        "name": "kv-puts",
        "seed": 1,
        "duration": 80,
        "chaincodes": ["kv"],
        "workload": {"chaincode": "kv", "mix": {"put": 1}, "rate": 1, "until": 60},
    },
    "token-transfers": {
        "name": "token-transfers",
        "seed": 1,
        "duration": 120,
        "chaincodes": ["token"],
        "channel": {"clients": ["alice", "bob", "carol"]},
        "workload": {"chaincode": "token", "mix": {"transfer": 1}, "rate": 1, "until": 90},
    },
    "double-spend": {
        "name": "double-spend",
        "seed": 1,
        "duration": 40,
        "chaincodes": ["kv"],
        "network": {"latency": 1, "jitter": 2},
        "workload": {"chaincode": "kv", "double_spend": True, "start": 1},
    },
    "cft-faults": {
        "name": "cft-faults",
        "seed": 1,
        "duration": 150,
        "chaincodes": ["kv"],
        "consensus": {"backend": "cft-replicated", "orderers": 3, "f_tolerated": 1},
        "network": {"latency": 1, "jitter": 1},
        "workload": {"chaincode": "kv", "mix": {"put": 2, "incr": 1}, "until": 100},
        "faults": [
            {"kind": "crash", "target": "orderer0", "from_tick": 30, "until_tick": 60},
            {"kind": "partition", "groups": [["orderer1"], ["orderer0", "orderer2"]], "from_tick": 70, "until_tick": 90},
        ],
    },
    "byzantine-endorser": {
        "name": "byzantine-endorser",
        "seed": 1,
        "duration": 60,
        "chaincodes": ["kv"],
        "workload": {"chaincode": "kv", "mix": {"put": 1}, "until": 40},
        "faults": [
            {"kind": "byzantine-endorser", "target": "peer0.org3", "strategy": "forge-writeset", "from_tick": 0, "until_tick": 20},
            {"kind": "byzantine-endorser", "target": "peer0.org2", "strategy": "wrong-signature", "from_tick": 20},
        ],
    },
    "dos-blacklist": {
        "name": "dos-blacklist",
        "seed": 1,
        "duration": 60,
        "chaincodes": ["kv", "loop"],
        "channel": {"clients": ["alice", "bob", "mallory"]},
        "workload": {"chaincode": "kv", "mix": {"put": 1}, "until": 40},
        "faults": [{"kind": "dos-client", "target": "mallory", "rate": 5, "from_tick": 10, "until_tick": 20}],
    },
    "dos-execute-order-validate": {
        "name": "dos-execute-order-validate",
        "seed": 1,
        "duration": 200,
        "chaincodes": ["kv", "loop"],
        "workload": {"chaincode": "kv", "mix": {"put": 1}, "loop_tx_at": 100},
    },
    "dos-order-execute": {
        "name": "dos-order-execute",
        "seed": 1,
        "pipeline": "order-execute",
        "duration": 200,
        "chaincodes": ["kv", "loop"],
        "step_budget": None,
        "steps_per_tick": 10000,
        "workload": {"chaincode": "kv", "mix": {"put": 1}, "loop_tx_at": 100},
    },
    "dos-order-execute-budgeted": {
        "name": "dos-order-execute-budgeted",
        "seed": 1,
        "pipeline": "order-execute",
        "duration": 200,
        "chaincodes": ["kv", "loop"],
        "step_budget": 100000,
        "steps_per_tick": 10000,
        "workload": {"chaincode": "kv", "mix": {"put": 1}, "loop_tx_at": 100},
    },
    "pow-forks": {
        "name": "pow-forks",
        "seed": 1,
        "pipeline": "lottery",
        "duration": 400,
        "consensus": {"backend": "pow", "producers": 4, "difficulty": 8, "hashrate": 32, "target_interval": 10},
        "network": {"latency": 3},
    },
    "pos-partition": {
        "name": "pos-partition",
        "seed": 1,
        "pipeline": "lottery",
        "duration": 300,
        "consensus": {"backend": "pos", "producers": 6, "slot_ticks": 5},
        "faults": [
            {"kind": "partition", "groups": [["producer0", "producer1", "producer2"], ["producer3", "producer4", "producer5"]],
             "from_tick": 50, "until_tick": 100},
        ],
    },
}
