from __future__ import annotations

import random

import pytest

import oracle
from conftest import fixture_text, legal_plan_count, small_instance
from signalopt.generate import full_scale_corridor
from signalopt.ingest import parse_baseline
from signalopt.model import LinkId, TurnRateTable
from signalopt.objective import parse_objective
from signalopt.search import (
    BEST_FOUND,
    DECISION,
    OPTIMAL,
    SATISFIED,
    TIMEOUT_NO_SOLUTION,
    UNSATISFIABLE,
    PlanSpaceTooLarge,
    SearchProblem,
    admissible_bound,
    beam_search,
    branch_and_bound,
    check_plan,
    enumerate_all,
    legal_sequences,
    plan_space_size,
    solve,
)
from signalopt.timeline import SignalPlan, identity_plan, plan_from_sequence

M = LinkId("j1", "m", "j2")


def _value_key(result):
    return (0,) if result.value is None else (1, result.value)


def test_single_config_has_one_plan(chain3):
    result = enumerate_all(SearchProblem(chain3))
    assert result.nodes_explored == 1
    assert result.plan == identity_plan(chain3)
    assert result.status == OPTIMAL and result.value == (200000,)


def test_two_configs_two_points_k1(switch48):
    inst = switch48.replace(k=1)
    result = enumerate_all(SearchProblem(inst))
    assert result.nodes_explored == 4
    assert len(list(legal_sequences(inst))) == 4
    assert plan_space_size(inst) == 4


def test_plan_cap(switch48):
    with pytest.raises(PlanSpaceTooLarge):
        enumerate_all(SearchProblem(switch48.replace(horizon=900, k=1), plan_cap=1000))


def test_two_junctions_match_scripted_enumeration():
    found = 0
    for seed in range(200):
        inst = small_instance(seed, max_plans=64)
        shape = [p[1] for p in oracle.points(inst)]
        if sorted(set(shape)) != sorted({j.id for j in inst.junctions if j.controllable}) or len(shape) < 4:
            continue
        found += 1
        value, seq = oracle.best(inst)
        result = enumerate_all(SearchProblem(inst))
        assert result.value == (value,)
        assert result.plan.sequence() == seq
        if found == 15:
            break
    assert found >= 5


def test_engines_agree_with_oracle():
    for seed in range(40):
        inst = small_instance(seed)
        value, seq = oracle.best(inst)
        problem = SearchProblem(inst)
        for result in (
            enumerate_all(problem),
            branch_and_bound(problem),
            beam_search(problem, legal_plan_count(inst)),
        ):
            assert result.status == OPTIMAL
            assert result.value == (value,)
            assert result.plan.sequence() == seq
        assert branch_and_bound(problem).nodes_explored <= oracle.prefix_tree_size(inst)


def test_bound_above_root_is_unsatisfiable(chain3):
    root = admissible_bound(SearchProblem(chain3))
    problem = SearchProblem(chain3, bound=root[0] + 1)
    result = branch_and_bound(problem)
    assert result.status == UNSATISFIABLE
    assert result.nodes_explored == 1
    assert result.plan is None and result.value is None
    for seed in range(10):
        inst = small_instance(seed)
        # counters are non-negative, so no single goal link can exceed the summed bound
        (top,) = admissible_bound(SearchProblem(inst))
        result = branch_and_bound(SearchProblem(inst, bound=top + 1))
        assert result.status == UNSATISFIABLE and result.nodes_explored == 1


def test_admissible_bound():
    for seed in range(40):
        inst = small_instance(seed)
        problem = SearchProblem(inst)
        best = enumerate_all(problem)
        assert admissible_bound(problem) >= best.value
        # every prefix of the optimum bounds the optimum
        seq = best.plan.sequence()
        for i in range(len(seq) + 1):
            assert admissible_bound(problem, seq[:i]) >= best.value
        # full plan: the bound is exact
        assert admissible_bound(problem, seq) == best.value
        rng = random.Random(seed)
        for other, _ in list(legal_sequences(inst))[:10]:
            exact = check_plan(problem, plan_from_sequence(inst, other)).value
            assert admissible_bound(problem, other) == exact
            cut = rng.randint(0, len(other))
            assert admissible_bound(problem, other[:cut]) >= exact


def test_zero_rates_bound_is_initial_counters():
    inst = small_instance(3)
    inst = inst.replace(turn_rates=TurnRateTable(tuple((k, 0) for k, _ in inst.turn_rates)))
    initial = sum(l.initial_counter for l in inst.links if l.is_goal)
    assert admissible_bound(SearchProblem(inst)) == (initial,)


def test_decision_mode():
    for seed in range(30):
        inst = small_instance(seed)
        b = oracle.max_min_goal(inst)
        sat = branch_and_bound(SearchProblem(inst, bound=b, mode=DECISION))
        assert sat.status == SATISFIED
        report = check_plan(SearchProblem(inst, bound=b), sat.plan)
        assert report.ok
        unsat = branch_and_bound(SearchProblem(inst, bound=b + 1, mode=DECISION))
        assert unsat.status == UNSATISFIABLE and unsat.plan is None
        assert enumerate_all(SearchProblem(inst, bound=b, mode=DECISION)).status == SATISFIED
        assert enumerate_all(SearchProblem(inst, bound=b + 1, mode=DECISION)).status == UNSATISFIABLE
        assert beam_search(SearchProblem(inst, bound=b, mode=DECISION), legal_plan_count(inst)).status == SATISFIED
        assert beam_search(SearchProblem(inst, bound=b + 1, mode=DECISION), legal_plan_count(inst)).status == UNSATISFIABLE


def test_decision_bound_zero_identity_satisfies(chain3):
    result = solve(SearchProblem(chain3, bound=0, mode=DECISION))
    assert result.status == SATISFIED
    assert result.plan == identity_plan(chain3)


def test_optimal_respects_bound():
    for seed in range(20):
        inst = small_instance(seed)
        b = oracle.max_min_goal(inst)
        expected = oracle.best(inst, bound=b)
        for result in (
            enumerate_all(SearchProblem(inst, bound=b)),
            branch_and_bound(SearchProblem(inst, bound=b)),
            beam_search(SearchProblem(inst, bound=b), legal_plan_count(inst)),
        ):
            assert result.value == (expected[0],)
            assert result.plan.sequence() == expected[1]


def test_beam_width_one_is_legal():
    for seed in range(30):
        inst = small_instance(seed)
        result = beam_search(SearchProblem(inst), 1)
        assert result.plan is not None
        assert check_plan(SearchProblem(inst), result.plan).legal


def test_beam_width_monotone():
    for seed in range(30):
        inst = small_instance(seed)
        n = legal_plan_count(inst)
        for bound in (0, oracle.max_min_goal(inst)):
            problem = SearchProblem(inst, bound=bound)
            values = [_value_key(beam_search(problem, w)) for w in range(1, min(n, 12) + 1)]
            assert values == sorted(values)
        with pytest.raises(ValueError):
            beam_search(SearchProblem(inst), 0)


def test_soundness_and_anytime_monotonicity():
    for seed in range(30):
        inst = small_instance(seed)
        b = oracle.max_min_goal(inst) // 2
        problem = SearchProblem(inst, bound=b, objective=parse_objective("max_counter + max_occupancy(link(w,f,j1))", inst))
        for engine in ("exhaustive", "bnb", "beam"):
            seen = []
            result = solve(problem, engine, beam_width=3, on_improve=lambda v, p: seen.append(v))
            if result.plan is None:
                continue
            report = check_plan(problem, result.plan)
            assert report.ok
            assert report.value == result.value
            assert [v for _, v in result.history] == sorted(v for _, v in result.history)
            if engine != "exhaustive":
                assert seen == sorted(seen) and seen[-1] == result.value


def test_baseline_strictness(chain3):
    baseline = parse_baseline(fixture_text("baseline_chain3.lp"), chain3)
    problem = SearchProblem(chain3, baseline=baseline)
    report = check_plan(problem, identity_plan(chain3))
    assert report.baseline_ok is True and "baseline: strictly better" in report.lines()
    equal = SearchProblem(chain3, baseline={M: 200000})
    report = check_plan(equal, identity_plan(chain3))
    assert report.baseline_ok is False and "baseline: not strictly better" in report.lines()
    for engine in ("exhaustive", "bnb", "beam"):
        assert solve(equal, engine).status == UNSATISFIABLE
        assert solve(problem, engine).status == OPTIMAL


def test_baseline_on_random_instances():
    for seed in range(15):
        inst = small_instance(seed)
        value, _ = oracle.best(inst)
        goals = inst.goal_links
        base = {goals[0]: 0}
        tight = oracle.best(inst, baseline=base)
        for engine in ("exhaustive", "bnb", "beam"):
            result = solve(SearchProblem(inst, baseline=base), engine, beam_width=legal_plan_count(inst))
            if tight is None:
                assert result.status == UNSATISFIABLE
            else:
                assert result.value == (tight[0],)


def test_check_plan_names_k_violation(switch48):
    inst = switch48.replace(horizon=200)
    jc = inst.junction("j1")
    fresh = inst.replace(junctions=(jc.__class__(jc.id, jc.controllable, jc.configs, jc.available, jc.initial.__class__(jc.initial.phase, jc.initial.elapsed, jc.initial.config, 0), jc.k),))
    seq = ["j1_c2", "j1_c2", "j1_c1"] + ["j1_c1"] * 5
    plan = plan_from_sequence(fresh, seq)
    report = check_plan(SearchProblem(fresh), plan)
    assert not report.legal
    assert any("junction j1" in v and "cycle 1" in v for v in report.k_violations)
    assert check_plan(SearchProblem(fresh), identity_plan(fresh)).legal


def test_timeouts():
    inst = full_scale_corridor()
    quick = branch_and_bound(SearchProblem(inst, timeout=1e-6))
    assert quick.status == TIMEOUT_NO_SOLUTION and quick.plan is None
    some = branch_and_bound(SearchProblem(inst, timeout=2.0))
    assert some.status == BEST_FOUND and some.plan is not None
    assert some.elapsed < 10
    assert check_plan(SearchProblem(inst), some.plan).ok
    beam = beam_search(SearchProblem(inst, timeout=3.0), 4)
    assert beam.status in (BEST_FOUND, OPTIMAL) and beam.plan is not None


def test_result_serialisation(chain3):
    result = enumerate_all(SearchProblem(chain3))
    doc = result.to_dict()
    assert doc["status"] == "optimal"
    assert doc["value"] == [{"scaled": 200000, "pcu": "2.00000"}]
    assert SignalPlan.from_json(result.plan.to_json()) == result.plan
    assert result.to_json().startswith("{")


def test_problem_validation(chain3):
    with pytest.raises(ValueError):
        SearchProblem(chain3, baseline={LinkId("a", "b", "c"): 1})
    with pytest.raises(ValueError):
        SearchProblem(chain3, mode="guess")
    with pytest.raises(ValueError):
        SearchProblem(chain3, timeout=0)
    with pytest.raises(ValueError):
        solve(SearchProblem(chain3), "annealing")
