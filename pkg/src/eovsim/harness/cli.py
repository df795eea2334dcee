"""Command-line entry point: ``eovsim <command> ...``.

Exit codes: 0 when every invariant check passes, 1 when a check fails
(or a script stays locked), 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from ..codec import DecodeError
from ..crypto import use_scheme
from ..script import (
    DurationValue,
    Program,
    ScriptError,
    ScriptTypeError,
    SpendingContext,
    TimeValue,
    compile_contract,
    default_verifier,
    eval_clause,
    instantiate,
    parse_and_typecheck,
    run_program,
)
from ..script.types import HashType, ListType
from .artifacts import SUMMARY_FILE, audit_run, replay_ledger_dir, verify_ledger_dir, write_run
from .config import SCHEMA, ConfigError, default_artifact_dir, load_scenario
from .metrics import STATE_DUMP
from .presets import PRESETS
from .runner import run_scenario

OK, FAILED, USAGE = 0, 1, 2


# -- run ----------------------------------------------------------------------------


def _run_one(job: tuple[str, list[str], str]) -> tuple[str, bool, str]:
    source, overrides, out_root = job
    cfg = load_scenario(source, overrides)
    run_dir = Path(out_root) / f"{cfg.name}-seed{cfg.seed}"
    result = run_scenario(cfg)
    write_run(result, run_dir)
    return str(run_dir), result.ok, (run_dir / SUMMARY_FILE).read_text()


def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.duration is not None:
        overrides.append(f"duration={args.duration}")
    seeds = args.seed or [None]
    out_root = Path(args.out) if args.out else default_artifact_dir()
    jobs = []
    for scenario in args.scenario:
        for seed in seeds:
            extra = [f"seed={seed}"] if seed is not None else []
            # Validate up front so config errors surface before any work starts.
            load_scenario(scenario, overrides + extra)
            jobs.append((scenario, overrides + extra, str(out_root)))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    all_ok = True
    for run_dir, ok, summary in results:
        all_ok &= ok
        print(f"== {run_dir} [{'ok' if ok else 'CHECK FAILED'}]")
        if not args.quiet:
            print(summary, end="")
    return OK if all_ok else FAILED


def cmd_verify_chain(args) -> int:
    ok, detail = verify_ledger_dir(args.ledger_dir)
    print(("ok: " if ok else "FAIL: ") + detail)
    return OK if ok else FAILED


def cmd_replay(args) -> int:
    ledger = Path(args.ledger_dir)
    ok, detail = verify_ledger_dir(ledger)
    if not ok:
        print(f"FAIL: {detail}")
        return FAILED
    state = replay_ledger_dir(ledger)
    if args.dump:
        for line in state.dump_lines():
            print(line)
    print(f"state_hash: {state.state_hash().hex()}")
    dump = ledger / STATE_DUMP
    if dump.exists():
        expected = [line for line in dump.read_text().splitlines() if line]
        same = expected == state.dump_lines()
        print(f"matches {STATE_DUMP}: {'yes' if same else 'NO'}")
        return OK if same else FAILED
    return OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    print((run_dir / SUMMARY_FILE).read_text(), end="")
    audit = audit_run(run_dir)
    for note in audit.notes:
        print(f"note: {note}")
    for name, ok in sorted(audit.checks.items()):
        print(f"audit[{name}]: {'pass' if ok else 'FAIL'}")
    return OK if audit.ok else FAILED


def cmd_schema(args) -> int:
    print(json.dumps(SCHEMA, indent=2, sort_keys=True))
    return OK


def cmd_presets(args) -> int:
    for name in PRESETS:
        print(name)
    return OK


# -- script -------------------------------------------------------------------------


def parse_value(text: str, ty) -> Any:
    """Command-line text to a runtime value of script type ``ty``.

    Byte-like values are hex (``0x`` optional), lists are comma separated,
    durations take an ``s`` suffix for seconds.
    """
    if isinstance(ty, ListType):
        return [parse_value(part, ty.elem) for part in text.split(",") if part]
    if ty in ("Bytes", "PublicKey", "Signature") or isinstance(ty, HashType):
        return bytes.fromhex(text.removeprefix("0x"))
    if ty in ("Number", "Value"):
        return int(text)
    if ty == "Boolean":
        if text not in ("true", "false"):
            raise ValueError(f"expected true or false, got {text!r}")
        return text == "true"
    if ty == "Time":
        return TimeValue(int(text))
    if ty == "Duration":
        if text.endswith("s"):
            return DurationValue(int(text[:-1]), "seconds")
        return DurationValue(int(text))
    raise ValueError(f"unsupported type {ty}")


def _load_contract(path: str):
    return parse_and_typecheck(Path(path).read_text())


def _instance(contract, raw_params: Sequence[str]):
    if len(raw_params) != len(contract.params):
        raise ScriptTypeError(f"{contract.name} takes {len(contract.params)} parameters, got {len(raw_params)}")
    return instantiate(contract, [parse_value(t, p.type) for t, p in zip(raw_params, contract.params)])


def cmd_script_compile(args) -> int:
    contract = _load_contract(args.file)
    target = _instance(contract, args.params) if args.params else contract
    program = compile_contract(target)
    print(program.disassemble() if args.disassemble else program.to_hex())
    return OK


def cmd_script_eval(args) -> int:
    use_scheme(args.scheme)
    contract = _load_contract(args.file)
    instance = _instance(contract, args.params or [])
    clause = contract.clause(args.clause)
    raw = args.args or []
    if len(raw) != len(clause.params):
        raise ScriptTypeError(f"clause {args.clause!r} takes {len(clause.params)} arguments, got {len(raw)}")
    values = [parse_value(t, p.type) for t, p in zip(raw, clause.params)]
    ctx = SpendingContext(
        current_height=args.height,
        current_time=args.time,
        utxo_age_blocks=args.age_blocks,
        utxo_age_seconds=args.age_seconds,
        tx_digest=bytes.fromhex(args.digest.removeprefix("0x")),
        verifier=default_verifier,
    )
    direct = eval_clause(instance, args.clause, values, ctx)
    index = [c.name for c in contract.clauses].index(args.clause)
    if args.program:
        # A template compiled without --params still carries PARAM slots.
        program = Program.from_hex(args.program).bind([instance.args[p.name] for p in contract.params])
    else:
        program = compile_contract(instance)
    vm = run_program(program, [index, *values], ctx)
    for label, r in (("eval", direct), ("vm", vm)):
        print(f"{label}: " + ("unlocked" if r.unlocked else f"locked ({r.reason})"))
    if direct.unlocked != vm.unlocked:
        print("DIVERGENCE between evaluator and VM")
        return FAILED
    return OK if direct.unlocked else FAILED


def cmd_script_sign(args) -> int:
    s = use_scheme(args.scheme)
    secret, public = s.keygen(args.seed.encode())
    print(f"public_key: {public.hex()}")
    if args.digest is not None:
        print(f"signature: {s.sign(secret, bytes.fromhex(args.digest.removeprefix('0x'))).hex()}")
    return OK


# -- experiments ----------------------------------------------------------------------


def cmd_experiment(args) -> int:
    from . import experiments as ex

    if args.name == "ordering-safety":
        reports = ex.ordering_safety_suite(range(args.seed, args.seed + args.runs))
        bad = [r for r in reports if r.violations]
        print(f"runs: {len(reports)} violations: {len(bad)} validity-checked: {sum(r.validity is not None for r in reports)}")
        for r in bad:
            print(f"seed {r.seed}: {', '.join(r.violations)}")
        return OK if not bad else FAILED
    if args.name == "double-spend":
        outs = [ex.double_spend_trial(s) for s in range(args.seed, args.seed + args.runs)]
        good = sum(o.ok for o in outs)
        print(f"seeds: {len(outs)} exactly-one-valid: {good}")
        return OK if good == len(outs) else FAILED
    if args.name == "dos":
        d = ex.dos_contrast(args.seed)
        for run in d.heights:
            print(f"{run}: final_height={d.final_height(run)} progressed={d.progressed(run)} frozen={d.frozen(run)}")
        ok = d.frozen("order-execute") and d.progressed("execute-order-validate") and d.progressed("order-execute-budgeted")
        return OK if ok else FAILED
    if args.name == "throughput":
        rates = {n: ex.ordering_throughput(n, seed=args.seed) for n in (3, 5, 7)}
        for n, r in rates.items():
            print(f"orderers={n}: {r:.3f} tx/tick")
        return OK
    raise AssertionError(args.name)


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eovsim", description="Deterministic permissioned-ledger simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenario files or presets and write run directories")
    r.add_argument("scenario", nargs="+", help="scenario JSON file or preset name")
    r.add_argument("--set", action="append", metavar="PATH=VALUE", help="override a scalar, e.g. network.latency=2")
    r.add_argument("--seed", type=int, action="append", help="seed override; repeat to run several seeds")
    r.add_argument("--duration", type=int)
    r.add_argument("--out", help="artifact root (default: $EOVSIM_ARTIFACT_DIR or ./artifacts)")
    r.add_argument("--jobs", type=int, default=1, help="run independent scenarios in parallel")
    r.add_argument("--quiet", action="store_true", help="print only run directories and verdicts")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify-chain", help="check hash links of a ledger directory")
    v.add_argument("ledger_dir")
    v.set_defaults(fn=cmd_verify_chain)

    rp = sub.add_parser("replay", help="rebuild state from a ledger directory")
    rp.add_argument("ledger_dir")
    rp.add_argument("--dump", action="store_true", help="print the rebuilt state")
    rp.set_defaults(fn=cmd_replay)

    rep = sub.add_parser("report", help="print a run summary and audit it from its artifacts")
    rep.add_argument("run_dir")
    rep.set_defaults(fn=cmd_report)

    sub.add_parser("schema", help="print the scenario JSON Schema").set_defaults(fn=cmd_schema)
    sub.add_parser("presets", help="list preset scenarios").set_defaults(fn=cmd_presets)

    s = sub.add_parser("script", help="compile and evaluate spending-condition contracts")
    ssub = s.add_subparsers(dest="script_command", required=True)
    sc = ssub.add_parser("compile", help="print the compiled program as hex")
    sc.add_argument("file")
    sc.add_argument("--params", nargs="*", help="bind contract parameters")
    sc.add_argument("--disassemble", action="store_true")
    sc.set_defaults(fn=cmd_script_compile)
    se = ssub.add_parser("eval", help="evaluate a clause directly and through the VM")
    se.add_argument("file")
    se.add_argument("--clause", required=True)
    se.add_argument("--params", nargs="*", help="contract parameter values")
    se.add_argument("--args", nargs="*", help="clause argument values")
    se.add_argument("--height", type=int, default=0)
    se.add_argument("--time", type=int, default=0)
    se.add_argument("--age-blocks", type=int, default=0)
    se.add_argument("--age-seconds", type=int, default=0)
    se.add_argument("--digest", default="00" * 32, help="hex digest that signatures cover")
    se.add_argument("--program", help="run this hex program instead of compiling the file")
    se.add_argument("--scheme", default="ed25519", choices=("ed25519", "keyed-digest"))
    se.set_defaults(fn=cmd_script_eval)
    ss = ssub.add_parser("sign", help="derive a key from a seed and optionally sign a digest")
    ss.add_argument("--seed", required=True)
    ss.add_argument("--digest")
    ss.add_argument("--scheme", default="ed25519", choices=("ed25519", "keyed-digest"))
    ss.set_defaults(fn=cmd_script_sign)

    e = sub.add_parser("experiment", help="run a built-in multi-seed experiment")
    e.add_argument("name", choices=("ordering-safety", "double-spend", "dos", "throughput"))
    e.add_argument("--runs", type=int, default=100)
    e.add_argument("--seed", type=int, default=0, help="first seed")
    e.set_defaults(fn=cmd_experiment)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except ScriptError as exc:
        for d in exc.diagnostics:
            print(f"{args.file}:{d}", file=sys.stderr)
    except (ScriptTypeError, ValueError, KeyError, DecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return USAGE


if __name__ == "__main__":
    sys.exit(main())
