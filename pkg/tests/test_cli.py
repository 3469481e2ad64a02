from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import FIXTURES, fixture_text, small_instance
from signalopt.cli import main
from signalopt.ingest import emit_facts, parse_baseline, parse_instance
from signalopt.timeline import SignalPlan

SWITCH = str(FIXTURES / "switch_instance.lp")
CHAIN = str(FIXTURES / "chain3.lp")
PLAN = str(FIXTURES / "switch_plan.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "check", "--instance", SWITCH)
    assert code == 0 and out.startswith("ok: 1 junctions, 2 links")
    bad = tmp_path / "bad.lp"
    bad.write_text(fixture_text("switch_instance.lp").replace("phase_limit(stage(j1,2),j1_c2,11)", "phase_limit(stage(j1,2),j1_c2,10)"))
    code, out, _ = run(capsys, "check", "--instance", str(bad))
    assert code == 1 and "cycle lengths differ: 25 vs 24" in out
    code, _, err = run(capsys, "check", "--instance", str(tmp_path / "missing.lp"))
    assert code == 2 and "cannot read" in err
    syntax = tmp_path / "syntax.lp"
    syntax.write_text("controllable(j1\n")
    code, _, err = run(capsys, "check", "--instance", str(syntax))
    assert code == 2 and "line 2, column 1" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2
    code, _, err = run(capsys, "solve", "--instance", CHAIN, "--timeout", "0")
    assert code == 2 and "timeout" in err
    code, _, _ = run(capsys, "simulate", "--instance", CHAIN, "--horizon", "-1")
    assert code == 2
    code, _, err = run(capsys, "solve", "--instance", CHAIN, "--objective", "max_speed")
    assert code == 2 and "unknown objective" in err


def test_simulate_zero_rate_instance(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    timeline = tmp_path / "timeline.csv"
    code, out, _ = run(capsys, "simulate", "--instance", SWITCH, "--plan", PLAN, "--trace-out", str(trace), "--timeline-out", str(timeline))
    assert code == 0
    assert "counter link(j1,b,e): 0 (0.00000)" in out
    assert timeline.read_text() == fixture_text("switch_timeline.csv")
    assert trace.read_text().startswith("time,link,occ,occ_pcu,counter,counter_pcu\n")


def test_simulate_chain_summary(capsys):
    code, out, _ = run(capsys, "simulate", "--instance", CHAIN)
    assert code == 0
    assert out.splitlines() == [
        "horizon: 4",
        "counter link(j1,m,j2): 200000 (2.00000)",
        "objective: 200000 (2.00000)",
    ]


def test_simulate_horizon_900(capsys):
    code, out, _ = run(capsys, "simulate", "--instance", CHAIN, "--horizon", "900")
    assert code == 0 and "horizon: 900" in out


def test_simulate_illegal_plan(capsys, tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"junctions": {"j1": [{"cycle_index": 1, "time": 21, "config": "j1_c2"}, {"cycle_index": 2, "time": 46, "config": "j1_c1"}]}}))
    code, _, err = run(capsys, "simulate", "--instance", SWITCH, "--plan", str(plan))
    assert code == 1 and "illegal: junction j1" in err and "cycle 2" in err
    plan.write_text(json.dumps({"junctions": {"j1": [{"cycle_index": 1, "time": 22, "config": "j1_c2"}]}}))
    code, _, err = run(capsys, "simulate", "--instance", SWITCH, "--plan", str(plan))
    assert code == 1 and "malformed plan" in err
    plan.write_text("not json")
    code, _, _ = run(capsys, "simulate", "--instance", SWITCH, "--plan", str(plan))
    assert code == 2


def test_solve_decision_bound_zero(capsys):
    code, out, _ = run(capsys, "solve", "--instance", SWITCH, "--mode", "decision", "--bound", "0")
    assert code == 0
    doc = json.loads(out[out.index("{"):])
    assert doc["status"] == "satisfied"
    assert [e["config"] for e in doc["plan"]["junctions"]["j1"]] == ["j1_c1", "j1_c1"]


def test_solve_unsatisfiable(capsys):
    code, out, _ = run(capsys, "solve", "--instance", CHAIN, "--mode", "decision", "--bound", "200001")
    assert code == 1 and '"status": "unsatisfiable"' in out
    code, out, _ = run(capsys, "solve", "--instance", CHAIN, "--mode", "decision", "--bound", "2.0", "--decimal-input")
    assert code == 0


def test_solve_engines_agree(capsys, tmp_path):
    inst = small_instance(5)
    path = tmp_path / "inst.lp"
    path.write_text(emit_facts(inst))
    docs = {}
    for engine in ("exhaustive", "bnb", "beam"):
        plan_out = tmp_path / f"{engine}.json"
        code, out, _ = run(capsys, "solve", "--instance", str(path), "--engine", engine, "--beam-width", "500", "--plan-out", str(plan_out))
        assert code == 0
        doc = json.loads(out[out.index("{\n"):])
        docs[engine] = doc
        assert SignalPlan.from_json(plan_out.read_text()).to_json() == json.dumps(doc["plan"], indent=2, sort_keys=True) + "\n"
        assert all(line.startswith("incumbent: ") for line in out[: out.index("{\n")].splitlines())
    values = {e: d["value"] for e, d in docs.items()}
    assert values["bnb"] == values["exhaustive"] == values["beam"]
    assert docs["bnb"]["plan"] == docs["exhaustive"]["plan"]
    assert docs["exhaustive"]["status"] == "optimal"


def test_solve_with_baseline(capsys, tmp_path):
    baseline = str(FIXTURES / "baseline_chain3.lp")
    code, out, _ = run(capsys, "solve", "--instance", CHAIN, "--baseline", baseline)
    assert code == 0 and '"scaled": 200000' in out
    tight = tmp_path / "tight.lp"
    tight.write_text("pddl_solution(link(j1,m,j2),200000).\n")
    code, out, _ = run(capsys, "solve", "--instance", CHAIN, "--baseline", str(tight))
    assert code == 1 and "unsatisfiable" in out


def test_solve_timeout_exit_code(capsys, tmp_path):
    path = tmp_path / "big.lp"
    assert run(capsys, "generate", "--full-scale", "--out", str(path))[0] == 0
    code, out, _ = run(capsys, "solve", "--instance", str(path), "--timeout", "0.000001")
    assert code == 3 and "timeout-no-solution" in out
    code, out, _ = run(capsys, "solve", "--instance", str(path), "--engine", "exhaustive")
    assert code == 2


def test_emit_facts_round_trip_and_stability(capsys, tmp_path):
    out1 = tmp_path / "a.lp"
    out2 = tmp_path / "b.lp"
    assert run(capsys, "emit-facts", "--instance", CHAIN, "--out", str(out1))[0] == 0
    assert run(capsys, "emit-facts", "--instance", str(out1), "--out", str(out2))[0] == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert parse_instance(out1.read_text()) == parse_instance(fixture_text("chain3.lp"))
    assert run(capsys, "check", "--instance", str(out1))[0] == 0
    _, a, _ = run(capsys, "emit-facts", "--instance", SWITCH)
    _, b, _ = run(capsys, "emit-facts", "--instance", SWITCH)
    assert a == b


def test_emitted_baseline_matches_simulate(capsys, tmp_path):
    inst = small_instance(8)
    path = tmp_path / "inst.lp"
    path.write_text(emit_facts(inst))
    base = tmp_path / "base.lp"
    plan = tmp_path / "plan.json"
    assert run(capsys, "solve", "--instance", str(path), "--plan-out", str(plan))[0] == 0
    assert run(capsys, "emit-facts", "--instance", str(path), "--plan", str(plan), "--baseline-out", str(base))[0] == 0
    baseline = parse_baseline(base.read_text(), inst)
    code, out, _ = run(capsys, "simulate", "--instance", str(path), "--plan", str(plan))
    assert code == 0
    summary = {line.split(": ")[0][len("counter "):]: int(line.split(": ")[1].split()[0]) for line in out.splitlines() if line.startswith("counter ")}
    assert {str(k): v for k, v in baseline.items()} == summary
    _, combined, _ = run(capsys, "emit-facts", "--instance", str(path), "--plan", str(plan))
    assert "pddl_solution(" in combined


def test_plot_data(capsys, tmp_path):
    out = tmp_path / "plot.csv"
    code, _, _ = run(capsys, "plot-data", "--instance", CHAIN, "--engines", "identity,bnb,beam,exhaustive", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "time,engine,link,counter,counter_pcu"
    assert len(lines) == 1 + 4 * 5
    assert '4,bnb,"link(j1,m,j2)",200000,2.00000' in lines
    code, text, _ = run(capsys, "plot-data", "--instance", SWITCH, "--engines", "plan", "--plan", PLAN)
    assert code == 0 and text.count("\n") == 1 + 49


def test_generate_is_deterministic(capsys):
    _, a, _ = run(capsys, "generate", "--seed", "3", "--junctions", "2")
    _, b, _ = run(capsys, "generate", "--seed", "3", "--junctions", "2")
    assert a == b and parse_instance(a)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "signalopt", "check", "--instance", CHAIN], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ok:")
