import csv
import json
from collections import Counter

import pytest

from eovsim.crypto import use_scheme
from eovsim.harness.artifacts import audit_run, write_run
from eovsim.harness.cli import main
from eovsim.harness.config import SCHEMA, ConfigError, load_scenario, validate_scenario
from eovsim.harness.experiments import cross_pipeline_states, dos_contrast, double_spend_trial
from eovsim.harness.metrics import BLACKLIST_HEADER, METRICS_HEADER, BlockEvent, artifact_digest, window_table
from eovsim.harness.presets import PRESETS
from eovsim.harness.runner import run_scenario
from eovsim.script import CORPUS


@pytest.fixture(autouse=True)
def keyed_digest_scheme():
    # The script CLI switches the process-wide scheme; restore the default after each test.
    yield
    use_scheme("keyed-digest")


def run_to(tmp_path, source, overrides=(), name="run"):
    result = run_scenario(load_scenario(source, list(overrides)))
    write_run(result, tmp_path / name)
    return result, tmp_path / name


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ------------------------------------------------------------------


@pytest.mark.parametrize(
    "tree, path",
    [
        ({}, "seed"),
        ({"seed": 1, "duration": -1}, "duration"),
        ({"seed": 1, "bogus": 1}, "bogus"),
        ({"seed": 1, "chaincodes": ["nope"]}, "chaincodes[0]"),
        ({"seed": 1, "workload": {"chaincode": "token"}}, "workload.chaincode"),
        ({"seed": 1, "workload": {"mix": {"fly": 1}}}, "workload.mix.fly"),
        ({"seed": 1, "network": {"latency": "x"}}, "network.latency"),
        ({"seed": 1, "consensus": {"backend": "pow"}}, "consensus.backend"),
        ({"seed": 1, "faults": [{"kind": "crash", "target": "ghost"}]}, "faults[0].target"),
        ({"seed": 1, "faults": [{"kind": "crash", "target": "peer0.org1", "from_tick": 5, "until_tick": 2}]}, "faults[0].until_tick"),
    ],
)
def test_config_errors_carry_field_paths(tree, path):
    with pytest.raises(ConfigError) as exc:
        validate_scenario(tree)
    assert exc.value.path == path
    assert str(exc.value).startswith(path + ": ")


def test_overrides_apply_to_scalars():
    cfg = load_scenario("happy-path", ["network.latency=3", "seed=9", "duration=10"])
    assert (cfg.network.latency, cfg.seed, cfg.duration) == (3, 9, 10)
    with pytest.raises(ConfigError) as exc:
        load_scenario("happy-path", ["network.latency=abc"])
    assert exc.value.path == "network.latency"
    with pytest.raises(ConfigError):
        load_scenario("happy-path", ["nokey"])


def test_scenario_json_roundtrip():
    for name in PRESETS:
        cfg = load_scenario(name)
        assert validate_scenario(json.loads(cfg.to_json())) == cfg


def test_scenario_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(PRESETS["kv-puts"]))
    assert load_scenario(str(path)) == load_scenario("kv-puts")


def test_schema_lists_top_level_fields():
    assert "seed" in SCHEMA["required"]
    assert {"pipeline", "workload", "faults", "channel"} <= set(SCHEMA["properties"])


# -- scenario runs --------------------------------------------------------------------


def test_happy_path_has_no_invalid_transactions(tmp_path):
    result, run_dir = run_to(tmp_path, "happy-path")
    assert result.ok
    rows = read_csv(run_dir / "metrics.csv")
    assert rows[0] == METRICS_HEADER
    assert sum(int(r[2]) for r in rows[1:]) == 0
    assert sum(int(r[1]) for r in rows[1:]) > 0


def test_double_spend_exactly_one_valid():
    out = double_spend_trial(1)
    assert out.ok and out.in_ledger == 2
    assert sorted(out.flags) == ["invalid:mvcc-conflict", "valid"]


def test_same_config_same_seed_same_state():
    a = run_scenario(load_scenario("token-transfers"))
    b = run_scenario(load_scenario("token-transfers"))
    assert a.state_hash() == b.state_hash() and a.trace_digest == b.trace_digest


def test_seed_changes_the_run():
    a = run_scenario(load_scenario("double-spend", ["seed=1"]))
    b = run_scenario(load_scenario("double-spend", ["seed=2"]))
    assert a.trace_digest != b.trace_digest


def test_duration_zero_writes_headered_empty_files(tmp_path):
    result, run_dir = run_to(tmp_path, "kv-puts", ["duration=0"])
    assert result.height == 0
    for name, header in [
        ("metrics.csv", METRICS_HEADER),
        ("throughput.csv", ["tick", "throughput"]),
        ("reasons.csv", ["reason", "count"]),
        ("clients.csv", ["client", "committed", "invalid"]),
        ("blacklist.csv", BLACKLIST_HEADER),
    ]:
        assert read_csv(run_dir / name) == [header], name
    assert read_csv(run_dir / "ledger" / "verdicts.csv") == [["block", "txseq", "txid", "flag", "reason"]]
    assert audit_run(run_dir).ok


def test_blacklist_matches_verdict_log(tmp_path):
    result, run_dir = run_to(tmp_path, "dos-blacklist")
    # Independent count: invalid transactions per client straight from the ledger.
    invalid = Counter(tx.client for _, _, tx, v in result.store.transactions() if v.flag != "valid")
    assert invalid["mallory"] == 50
    expected = [c for c, n in invalid.items() if n > result.config.blacklist_threshold]
    rows = read_csv(run_dir / "blacklist.csv")
    assert rows[0] == BLACKLIST_HEADER
    assert [r[0] for r in rows[1:]] == expected == ["mallory"]
    assert rows[1][1:3] == ["50", "10"]


def test_blacklist_threshold_is_strict(tmp_path):
    _, run_dir = run_to(tmp_path, "dos-blacklist", ["blacklist_threshold=50"])
    assert read_csv(run_dir / "blacklist.csv") == [BLACKLIST_HEADER]
    _, run_dir = run_to(tmp_path, "dos-blacklist", ["blacklist_threshold=49"], name="run49")
    assert len(read_csv(run_dir / "blacklist.csv")) == 2


def test_window_table_oracle():
    events = [BlockEvent(0, 1, 0), BlockEvent(9, 2, 1), BlockEvent(10, 4, 0), BlockEvent(25, 0, 3, 1)]
    assert window_table(events, 25, 10) == [(0, 3, 1, 0), (1, 4, 0, 0), (2, 0, 3, 1)]
    assert window_table(events, 0, 10) == []


def test_order_execute_freeze_and_budget():
    d = dos_contrast(1)
    assert d.frozen("order-execute") and not d.progressed("order-execute")
    assert d.progressed("execute-order-validate")
    assert d.progressed("order-execute-budgeted")


def test_budgeted_loop_is_marked_failed():
    result = run_scenario(load_scenario("dos-order-execute-budgeted"))
    reasons = [v.reason for _, _, tx, v in result.store.transactions() if tx.chaincode_id == "loop"]
    assert reasons == ["execution-failed"]


def test_cross_pipeline_states_match():
    eov, oe = cross_pipeline_states(3)
    assert eov == oe


def test_byzantine_endorsers_do_not_corrupt_state():
    result = run_scenario(load_scenario("byzantine-endorser"))
    assert result.ok
    assert all(v.flag == "valid" for _, _, _, v in result.store.transactions())


@pytest.mark.parametrize("name", ["cft-faults", "pow-forks", "pos-partition"])
def test_fault_and_lottery_presets_audit_clean(tmp_path, name):
    result, run_dir = run_to(tmp_path, name)
    assert result.ok
    audit = audit_run(run_dir)
    assert audit.ok, audit.checks


def test_audit_detects_tampered_metrics(tmp_path):
    _, run_dir = run_to(tmp_path, "kv-puts")
    assert audit_run(run_dir).ok
    path = run_dir / "metrics.csv"
    rows = read_csv(path)
    rows[1][1] = str(int(rows[1][1]) + 1)
    path.write_text("".join(",".join(r) + "\n" for r in rows))
    audit = audit_run(run_dir)
    assert not audit.ok and audit.checks["recomputed metrics.csv"] is False


def test_audit_detects_tampered_state_dump(tmp_path):
    _, run_dir = run_to(tmp_path, "kv-puts")
    dump = run_dir / "ledger" / "state.dump"
    dump.write_text(dump.read_text() + "kv/extra 1:0 00\n")
    assert audit_run(run_dir).checks["replay-matches-dump"] is False


def test_artifact_digest_is_deterministic(tmp_path):
    run_to(tmp_path, "cft-faults", name="a")
    run_to(tmp_path, "cft-faults", name="b")
    assert artifact_digest(tmp_path / "a") == artifact_digest(tmp_path / "b")
    run_to(tmp_path, "cft-faults", ["seed=2"], name="c")
    assert artifact_digest(tmp_path / "a") != artifact_digest(tmp_path / "c")


# -- command line ---------------------------------------------------------------------


def test_cli_run_and_follow_up_commands(tmp_path, capsys):
    assert main(["run", "kv-puts", "--out", str(tmp_path), "--quiet"]) == 0
    run_dir = tmp_path / "kv-puts-seed1"
    assert (run_dir / "ledger" / "blocks.dat").exists()
    assert main(["verify-chain", str(run_dir / "ledger")]) == 0
    assert main(["replay", str(run_dir / "ledger")]) == 0
    assert main(["report", str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert "matches state.dump: yes" in out and "audit[chain-integrity]: pass" in out


def test_cli_verify_chain_fails_on_corruption(tmp_path):
    assert main(["run", "kv-puts", "--out", str(tmp_path), "--quiet"]) == 0
    blocks = tmp_path / "kv-puts-seed1" / "ledger" / "blocks.dat"
    data = bytearray(blocks.read_bytes())
    data[len(data) // 2] ^= 0xFF
    blocks.write_bytes(bytes(data))
    assert main(["verify-chain", str(blocks.parent)]) == 1
    assert main(["replay", str(blocks.parent)]) == 1


def test_cli_seeds_jobs_and_env_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EOVSIM_ARTIFACT_DIR", str(tmp_path))
    assert main(["run", "double-spend", "--seed", "1", "--seed", "2", "--jobs", "2", "--quiet"]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"double-spend-seed1", "double-spend-seed2"}


def test_cli_bad_input_exit_codes(tmp_path, capsys):
    assert main(["run", "kv-puts", "--set", "network.latency=x", "--out", str(tmp_path)]) == 2
    assert "config error: network.latency" in capsys.readouterr().err
    assert main(["run", "no-such-preset", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_cli_schema_and_presets(capsys):
    assert main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out) == SCHEMA
    assert main(["presets"]) == 0
    assert capsys.readouterr().out.split() == list(PRESETS)


def test_cli_script_roundtrip(tmp_path, capsys):
    src = tmp_path / "p2k.ivy"
    src.write_text(CORPUS["LockWithPublicKey"])
    digest = "11" * 32
    assert main(["script", "sign", "--seed", "alice", "--digest", digest]) == 0
    lines = dict(line.split(": ") for line in capsys.readouterr().out.splitlines())
    pk, sig = lines["public_key"], lines["signature"]
    assert main(["script", "compile", str(src)]) == 0
    template = capsys.readouterr().out.strip()
    base = ["script", "eval", str(src), "--clause", "spend", "--params", pk, "5", "--digest", digest]
    assert main(base + ["--args", sig]) == 0
    assert capsys.readouterr().out == "eval: unlocked\nvm: unlocked\n"
    assert main(base + ["--args", sig, "--program", template]) == 0
    capsys.readouterr()
    bad = sig[:-2] + ("00" if sig[-2:] != "00" else "01")
    assert main(base + ["--args", bad]) == 1


def test_cli_script_diagnostics(tmp_path, capsys):
    src = tmp_path / "bad.ivy"
    src.write_text("contract C(n: Number, val: Value) {\n  clause c() {\n    verify n == 2147483648\n    unlock val\n  }\n}\n")
    assert main(["script", "compile", str(src)]) == 2
    assert f"{src}:3:17:" in capsys.readouterr().err


def test_cli_script_disassemble(tmp_path, capsys):
    src = tmp_path / "p2k.ivy"
    src.write_text(CORPUS["LockWithPublicKey"])
    assert main(["script", "compile", str(src), "--disassemble"]) == 0
    text = capsys.readouterr().out
    assert "CHECKSIG" in text and "PARAM 0" in text


def test_cli_experiment(capsys):
    assert main(["experiment", "double-spend", "--runs", "3"]) == 0
    assert "exactly-one-valid: 3" in capsys.readouterr().out
    assert main(["experiment", "ordering-safety", "--runs", "3"]) == 0
    assert "violations: 0" in capsys.readouterr().out
