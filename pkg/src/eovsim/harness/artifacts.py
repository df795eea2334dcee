"""Writing run directories, and auditing them from their artifacts alone."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..codec import DecodeError
from ..ledger import ChainIntegrityError, LedgerError, read_blockfile, verify_records
from ..state import StateStore
from ..validation import replay_ledger
from .config import ScenarioConfig, validate_scenario
from .metrics import (
    LEDGER_DIR,
    STATE_DUMP,
    Metrics,
    compute_metrics,
    load_ledger_dir,
    metric_files,
    read_forktree,
    read_trace,
    summary_text,
    write_forktree,
    write_ledger_dir,
)
from .runner import RunResult, replay_order_execute

SCENARIO_FILE = "scenario.json"
SUMMARY_FILE = "summary.txt"


def reference_node(cfg: ScenarioConfig, info: dict) -> str | None:
    if cfg.pipeline == "order-execute":
        return "executor"
    if cfg.pipeline == "lottery":
        return None
    return info.get("reference_peer")


def metrics_for(result: RunResult) -> Metrics:
    cfg = result.config
    return compute_metrics(
        duration=cfg.duration,
        window=cfg.metrics_window,
        threshold=cfg.blacklist_threshold,
        trace=result.trace,
        store=result.store,
        reference=reference_node(cfg, result.info),
        forktree_rows=[dict(zip(("hash", "parent", "height", "producer", "tick", "main"), map(str, r))) for r in result.forktree or []],
    )


def write_run(result: RunResult, run_dir: str | Path) -> Metrics:
    """Persist ledger, trace and metrics; returns the metrics written."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    (run_dir / SCENARIO_FILE).write_text(cfg.to_json())
    ledger = run_dir / LEDGER_DIR
    if result.store is not None:
        write_ledger_dir(ledger, result.store, result.state.dump_lines(), result.trace)
    else:
        write_forktree(ledger, result.forktree or [])
        (ledger / "trace.log").write_text("".join(line + "\n" for line in result.trace))
    metrics = metrics_for(result)
    for name, text in metric_files(metrics).items():
        (run_dir / name).write_text(text)
    info = dict(result.info)
    info["reference_node"] = reference_node(cfg, result.info)
    info["trace_digest"] = result.trace_digest
    if result.state is not None:
        info["state_hash"] = result.state_hash()
    (run_dir / SUMMARY_FILE).write_text(summary_text(metrics, result.checks, info))
    return metrics


def verify_ledger_dir(ledger_dir: str | Path) -> tuple[bool, str]:
    try:
        n = verify_records(read_blockfile(ledger_dir))
    except (ChainIntegrityError, LedgerError, DecodeError, OSError) as exc:
        return False, str(exc)
    return True, f"{n} blocks verified"


def replay_ledger_dir(ledger_dir: str | Path) -> StateStore:
    """Rebuild state from the block file.

    Transactions carrying endorsements contribute their endorsed write sets;
    order-execute transactions (no endorsements) are executed again.
    """
    store = load_ledger_dir(Path(ledger_dir))
    endorsed = [tx for _, _, tx, _ in store.transactions() if tx.endorsements]
    if len(endorsed) == sum(1 for _ in store.transactions()):
        return replay_ledger(store)
    return replay_order_execute(store, ("kv", "token", "loop"))


def dump_matches(state: StateStore, dump_path: Path) -> bool:
    expected = [line for line in dump_path.read_text().splitlines() if line]
    return state.dump_lines() == expected


@dataclass
class Audit:
    checks: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def audit_run(run_dir: str | Path) -> Audit:
    """Recompute everything from artifacts and compare against the stored tables."""
    run_dir = Path(run_dir)
    audit = Audit()
    cfg = validate_scenario(json.loads((run_dir / SCENARIO_FILE).read_text()))
    ledger = run_dir / LEDGER_DIR
    trace = read_trace(ledger)
    summary = (run_dir / SUMMARY_FILE).read_text()
    info = {}
    for line in summary.splitlines():
        k, _, v = line.partition(": ")
        if k == "reference_node":
            info["reference_peer"] = json.loads(v)
    if cfg.pipeline == "lottery":
        store = None
        rows = read_forktree(ledger)
    else:
        ok, detail = verify_ledger_dir(ledger)
        audit.checks["chain-integrity"] = ok
        audit.notes.append(f"verify-chain: {detail}")
        store = load_ledger_dir(ledger) if ok else None
        rows = None
        if store is not None:
            audit.checks["replay-matches-dump"] = dump_matches(replay_ledger_dir(ledger), ledger / STATE_DUMP)
    if cfg.pipeline != "lottery" and store is None:
        return audit
    metrics = compute_metrics(
        duration=cfg.duration,
        window=cfg.metrics_window,
        threshold=cfg.blacklist_threshold,
        trace=trace,
        store=store,
        reference=reference_node(cfg, info),
        forktree_rows=rows,
    )
    for name, text in metric_files(metrics).items():
        stored = (run_dir / name).read_text() if (run_dir / name).exists() else None
        audit.checks[f"recomputed {name}"] = stored == text
    for line in summary.splitlines():
        if line.startswith("check[") and line.endswith("FAIL"):
            audit.checks[line.split("]", 1)[0][6:]] = False
            audit.notes.append(f"run check failed: {line}")
    return audit
