"""Metrics derived from run artifacts, and the run-directory layout.

Every number here is computed from the persisted ledger and trace, never
from live node state, so ``report`` can recompute and audit a run
directory after the fact.

Run directory::

    scenario.json      the validated scenario, defaults filled in
    metrics.csv        window,committed_valid,committed_invalid,forks
    throughput.csv     tick,throughput (valid txs per tick, per window)
    reasons.csv        reason,count of committed-invalid transactions
    clients.csv        client,committed,invalid
    blacklist.csv      client,invalid_txs,threshold,flagged_at_block
    summary.txt        key: value lines, including invariant checks
    ledger/            blocks.dat index.dat state.dump verdicts.csv trace.log
                       (lottery runs: forktree.csv and trace.log)
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..ledger import BlockStore, load_store, write_blockfile

METRICS_HEADER = ["window", "committed_valid", "committed_invalid", "forks"]
THROUGHPUT_HEADER = ["tick", "throughput"]
REASONS_HEADER = ["reason", "count"]
CLIENTS_HEADER = ["client", "committed", "invalid"]
BLACKLIST_HEADER = ["client", "invalid_txs", "threshold", "flagged_at_block"]
VERDICTS_HEADER = ["block", "txseq", "txid", "flag", "reason"]
FORKTREE_HEADER = ["hash", "parent", "height", "producer", "tick", "main"]

LEDGER_DIR = "ledger"
STATE_DUMP = "state.dump"
VERDICTS_FILE = "verdicts.csv"
TRACE_FILE = "trace.log"
FORKTREE_FILE = "forktree.csv"


@dataclass(frozen=True)
class BlockEvent:
    """One block as metrics see it: when it landed and what it carried."""

    tick: int
    valid: int
    invalid: int
    fork: int = 0


@dataclass
class Metrics:
    window: int
    windows: list[tuple[int, int, int, int]]
    committed_valid: int
    committed_invalid: int
    invalid_by_reason: dict[str, int]
    per_client: dict[str, tuple[int, int]]  # client -> (committed, invalid)
    blacklist: list[tuple[str, int, int, int]]
    gossip_rounds_max: int | None = None
    gossip_rounds_mean: float | None = None
    fork_persistence: int | None = None
    endorsement_failures: int = 0
    extra: dict[str, str] = field(default_factory=dict)

    def metrics_rows(self) -> list[list]:
        return [list(r) for r in self.windows]

    def throughput_rows(self) -> list[list]:
        return [[w * self.window, f"{v / self.window:.4f}"] for w, v, _, _ in self.windows]


# -- trace parsing ----------------------------------------------------------------


def parse_trace_line(line: str) -> tuple[int, str, str, str]:
    tick, node, kind, detail = line.rstrip("\n").split(",", 3)
    return int(tick), node, kind, detail


def commit_ticks(trace: Iterable[str], node: str) -> dict[int, int]:
    """Block seq -> tick at which ``node`` committed it."""
    out = {}
    for line in trace:
        tick, n, kind, detail = parse_trace_line(line)
        if n == node and kind == "commit":
            out[int(detail.split(" ", 1)[0])] = tick
    return out


def ledger_block_events(store: BlockStore, trace: Sequence[str], node: str) -> list[BlockEvent]:
    ticks = commit_ticks(trace, node)
    events = []
    for seq in range(1, len(store)):
        flags = store.flags(seq) or ()
        valid = sum(1 for f in flags if f.flag == "valid")
        if seq in ticks:
            events.append(BlockEvent(ticks[seq], valid, len(flags) - valid))
    return events


def gossip_spread(trace: Iterable[str]) -> dict[int, int]:
    """Per block: ticks between the first and the last peer commit."""
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    for line in trace:
        tick, node, kind, detail = parse_trace_line(line)
        if kind == "commit" and node.startswith("peer"):
            seq = int(detail.split(" ", 1)[0])
            first.setdefault(seq, tick)
            last[seq] = tick
    return {s: last[s] - first[s] for s in first}


# -- computation ------------------------------------------------------------------


def window_table(events: Iterable[BlockEvent], duration: int, window: int) -> list[tuple[int, int, int, int]]:
    n = math.ceil(duration / window)
    rows = [[w, 0, 0, 0] for w in range(n)]
    for e in events:
        if n == 0:
            break
        w = min(e.tick // window, n - 1)
        rows[w][1] += e.valid
        rows[w][2] += e.invalid
        rows[w][3] += e.fork
    return [tuple(r) for r in rows]


def compute_metrics(
    *,
    duration: int,
    window: int,
    threshold: int,
    trace: Sequence[str],
    store: BlockStore | None,
    reference: str | None,
    forktree_rows: Sequence[dict] | None = None,
) -> Metrics:
    trace = list(trace)
    endorse_fail = sum(1 for line in trace if parse_trace_line(line)[2] == "endorse-fail")
    if store is None:
        return _lottery_metrics(duration, window, trace, forktree_rows or [])
    events = ledger_block_events(store, trace, reference) if reference else []
    committed_seqs = {seq for seq, t in commit_ticks(trace, reference).items()} if reference else set()
    reasons: Counter = Counter()
    per_client: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    blacklist: list[tuple[str, int, int, int]] = []
    flagged: set[str] = set()
    valid_total = invalid_total = 0
    for seq, _, tx, validity in store.transactions():
        if seq not in committed_seqs:
            continue
        per_client[tx.client][0] += 1
        if validity.flag == "valid":
            valid_total += 1
            continue
        invalid_total += 1
        reasons[validity.reason or "unspecified"] += 1
        per_client[tx.client][1] += 1
        count = per_client[tx.client][1]
        # A client is blacklisted once its invalid count exceeds the threshold.
        if count > threshold and tx.client not in flagged:
            flagged.add(tx.client)
            blacklist.append((tx.client, 0, threshold, seq))
    blacklist = [(c, per_client[c][1], t, seq) for c, _, t, seq in blacklist]
    spread = gossip_spread(trace)
    return Metrics(
        window=window,
        windows=window_table(events, duration, window),
        committed_valid=valid_total,
        committed_invalid=invalid_total,
        invalid_by_reason=dict(sorted(reasons.items())),
        per_client={c: tuple(v) for c, v in sorted(per_client.items())},
        blacklist=blacklist,
        gossip_rounds_max=max(spread.values()) if spread else None,
        gossip_rounds_mean=round(sum(spread.values()) / len(spread), 4) if spread else None,
        endorsement_failures=endorse_fail,
    )


def _lottery_metrics(duration: int, window: int, trace: Sequence[str], rows: Sequence[dict]) -> Metrics:
    events = [BlockEvent(int(r["tick"]), int(r["main"]), 0, 1 - int(r["main"])) for r in rows if int(r["height"]) > 0]
    by_hash = {r["hash"]: r for r in rows}
    # Fork persistence: longest run of blocks off the main chain.
    longest = 0
    for r in rows:
        if int(r["main"]):
            continue
        depth, h = 0, r["hash"]
        while h in by_hash and not int(by_hash[h]["main"]):
            depth += 1
            h = by_hash[h]["parent"]
        longest = max(longest, depth)
    producers: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for r in rows:
        if int(r["height"]) > 0:
            producers[r["producer"]][0] += int(r["main"])
    main = sum(e.valid for e in events)
    return Metrics(
        window=window,
        windows=window_table(events, duration, window),
        committed_valid=main,
        committed_invalid=0,
        invalid_by_reason={},
        per_client={p: tuple(v) for p, v in sorted(producers.items())},
        blacklist=[],
        fork_persistence=longest,
    )


# -- export -----------------------------------------------------------------------


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def metric_files(m: Metrics) -> dict[str, str]:
    """File name -> content for every metrics table."""
    return {
        "metrics.csv": _csv_text(METRICS_HEADER, m.metrics_rows()),
        "throughput.csv": _csv_text(THROUGHPUT_HEADER, m.throughput_rows()),
        "reasons.csv": _csv_text(REASONS_HEADER, m.invalid_by_reason.items()),
        "clients.csv": _csv_text(CLIENTS_HEADER, [(c, a, b) for c, (a, b) in m.per_client.items()]),
        "blacklist.csv": _csv_text(BLACKLIST_HEADER, m.blacklist),
    }


def summary_text(m: Metrics, checks: dict[str, bool], info: dict) -> str:
    lines = [
        f"committed_valid: {m.committed_valid}",
        f"committed_invalid: {m.committed_invalid}",
    ]
    for reason, n in m.invalid_by_reason.items():
        lines.append(f"invalid[{reason}]: {n}")
    lines.append(f"endorsement_failures: {m.endorsement_failures}")
    lines.append(f"blacklisted: {len(m.blacklist)}")
    if m.gossip_rounds_max is not None:
        lines.append(f"gossip_spread_max: {m.gossip_rounds_max}")
        lines.append(f"gossip_spread_mean: {m.gossip_rounds_mean}")
    if m.fork_persistence is not None:
        lines.append(f"fork_persistence: {m.fork_persistence}")
    for k in sorted(info):
        lines.append(f"{k}: {json.dumps(info[k], sort_keys=True)}")
    for name in sorted(checks):
        lines.append(f"check[{name}]: {'pass' if checks[name] else 'FAIL'}")
    return "\n".join(lines) + "\n"


def write_ledger_dir(directory: Path, store: BlockStore, state_lines: Sequence[str], trace: Sequence[str]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_blockfile(directory, store.records())
    (directory / STATE_DUMP).write_text("".join(line + "\n" for line in state_lines))
    rows = []
    for seq, i, tx, validity in store.transactions():
        rows.append([seq, i, tx.tx_id.hex(), validity.flag, validity.reason or ""])
    (directory / VERDICTS_FILE).write_text(_csv_text(VERDICTS_HEADER, rows))
    (directory / TRACE_FILE).write_text("".join(line + "\n" for line in trace))


def read_trace(directory: Path) -> list[str]:
    text = (directory / TRACE_FILE).read_text()
    return [line for line in text.split("\n") if line]


def read_forktree(directory: Path) -> list[dict]:
    with open(directory / FORKTREE_FILE, newline="") as fh:
        return list(csv.DictReader(fh))


def write_forktree(directory: Path, rows: Sequence[Sequence]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / FORKTREE_FILE).write_text(_csv_text(FORKTREE_HEADER, rows))


def load_ledger_dir(directory: Path) -> BlockStore:
    return load_store(directory)


def artifact_digest(run_dir: str | os.PathLike) -> str:
    """SHA-256 over every file in a run directory (relative path and bytes)."""
    root = Path(run_dir)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode() + b"\0")
        h.update(path.read_bytes())
        h.update(b"\0")
    return h.hexdigest()
