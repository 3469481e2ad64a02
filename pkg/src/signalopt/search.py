"""Search over signal plans.

Three engines share one problem definition:

* :func:`enumerate_all` simulates every k-legal plan independently. It is
  the ground truth for small instances.
* :func:`branch_and_bound` walks decision points depth-first, reusing the
  simulated prefix, and prunes with an admissible upper bound.
* :func:`beam_search` keeps the best ``w`` prefixes per decision point and
  widens ``w = 1, 2, ...`` up to the requested width, keeping the best plan
  seen, so a larger width never returns a worse value.

Ties between equally good plans go to the lexicographically smallest
sequence of configuration ids (decision points ordered by time, then
junction).
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .flow import Network
from .model import Instance, LinkId
from .objective import COUNTER, MAX, Objective, evaluate
from .pcu import Pcu, pcu_to_decimal
from .timeline import (
    DecisionPoint,
    SignalPlan,
    all_decision_points,
    check_plan_shape,
    elapsed_in_cycle,
    k_violations,
    legal_plans_filter,
    plan_from_sequence,
)

OPTIMISE = "optimise"
DECISION = "decision"

SATISFIED = "satisfied"
OPTIMAL = "optimal"
BEST_FOUND = "best-found"
UNSATISFIABLE = "unsatisfiable"
TIMEOUT_NO_SOLUTION = "timeout-no-solution"

DEFAULT_PLAN_CAP = 100_000


class PlanSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SearchProblem:
    instance: Instance
    objective: Optional[Objective] = None  # None: maximise the goal counters
    bound: Optional[Pcu] = None  # None: the instance's bound
    baseline: Mapping[LinkId, Pcu] = field(default_factory=dict)
    mode: str = OPTIMISE
    timeout: Optional[float] = None  # wall-clock seconds
    plan_cap: int = DEFAULT_PLAN_CAP

    def __post_init__(self) -> None:
        if self.objective is None:
            object.__setattr__(self, "objective", Objective.default(self.instance))
        if self.bound is None:
            object.__setattr__(self, "bound", self.instance.bound)
        if self.mode not in (OPTIMISE, DECISION):
            raise ValueError(f"mode must be {OPTIMISE!r} or {DECISION!r}")
        if self.timeout is not None and self.timeout <= 0:
            raise ValueError("timeout must be positive")
        for lid in list(self.baseline) + sorted(self.objective.links):
            if not self.instance.has_link(lid):
                raise ValueError(f"{lid} is not a link of the instance")


@dataclass
class SearchResult:
    status: str
    plan: Optional[SignalPlan]
    value: Optional[tuple[Pcu, ...]]
    nodes_explored: int
    elapsed: float
    history: list[tuple[float, tuple[Pcu, ...]]] = field(default_factory=list)

    @property
    def has_plan(self) -> bool:
        return self.plan is not None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "value": None
            if self.value is None
            else [{"scaled": v, "pcu": pcu_to_decimal(v)} for v in self.value],
            "plan": None if self.plan is None else json.loads(self.plan.to_json()),
            "nodes_explored": self.nodes_explored,
            "elapsed_ms": round(self.elapsed * 1000, 3),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class PlanReport:
    legal: bool
    k_violations: list[str]
    bound_ok: bool
    below_bound: list[LinkId]
    baseline_ok: Optional[bool]  # None when no baseline was given
    value: tuple[Pcu, ...]
    counters: dict[LinkId, Pcu]

    @property
    def ok(self) -> bool:
        return self.legal and self.bound_ok and self.baseline_ok is not False

    def lines(self) -> list[str]:
        out = [f"k-legal: {'yes' if self.legal else 'no'}"]
        out.extend(f"  {v}" for v in self.k_violations)
        out.append(f"bound met: {'yes' if self.bound_ok else 'no'}")
        out.extend(f"  below bound: {lid}" for lid in self.below_bound)
        if self.baseline_ok is not None:
            out.append(f"baseline: {'strictly better' if self.baseline_ok else 'not strictly better'}")
        out.append("value: " + ", ".join(f"{v} ({pcu_to_decimal(v)})" for v in self.value))
        for lid, c in sorted(self.counters.items()):
            out.append(f"counter {lid}: {c} ({pcu_to_decimal(c)})")
        return out


def _better(value, seq, best_value, best_seq) -> bool:
    if best_value is None:
        return True
    return value > best_value or (value == best_value and seq < best_seq)


class _Timeout(Exception):
    pass


class _Found(Exception):
    pass


class _Node:
    __slots__ = ("prefix", "t", "occ", "inflow", "segs", "last")

    def __init__(self, prefix, t, occ, inflow, segs, last):
        self.prefix = prefix  # chosen config ids, aligned with decision points
        self.t = t  # state is exact up to and including tick t
        self.occ = occ
        self.inflow = inflow
        self.segs = segs  # per junction: (config id, start, offset)
        self.last = last  # per junction: (current config, cycle of last change)


class _Core:
    """Incremental prefix simulation, legality and bounds shared by the engines."""

    def __init__(self, problem: SearchProblem):
        inst = problem.instance
        self.problem = problem
        self.instance = inst
        self.horizon = inst.horizon
        self.net = Network(inst)
        self.points: list[DecisionPoint] = all_decision_points(inst)
        self.times = [p.time for p in self.points] + [self.horizon + 1]
        self.jpos = {j.id: i for i, j in enumerate(inst.junctions)}
        self.point_j = [self.jpos[p.junction] for p in self.points]
        self.options = [inst.junction(p.junction).available for p in self.points]
        self.k = [inst.k_for(j.id) for j in inst.junctions]
        self.deadline = None if problem.timeout is None else time.monotonic() + problem.timeout
        self.nodes = 0

        index = self.net.index
        self.goal_idx = [index[lid] for lid in inst.goal_links]
        self.base_idx = [index[lid] for lid in sorted(problem.baseline)]
        self.base_total = sum(problem.baseline.values())
        self.objective = problem.objective
        # per junction, the next undecided point's time for every prefix length
        n = len(self.points)
        self.next_time = [[self.horizon + 1] * len(inst.junctions) for _ in range(n + 1)]
        for i in range(n - 1, -1, -1):
            row = list(self.next_time[i + 1])
            row[self.point_j[i]] = self.times[i]
            self.next_time[i] = row
        self._prepare_bounds()

    # -- bounds -------------------------------------------------------------

    def _prepare_bounds(self) -> None:
        obj = self.objective
        index = self.net.index
        watch_in = set(self.goal_idx) | set(self.base_idx)
        watch_out = set()
        for tier in obj.tiers:
            for term in tier:
                idx = {index[l] for l in term.links}
                if term.quantity == COUNTER and term.sense == MAX:
                    watch_in |= idx
                elif term.quantity != COUNTER:
                    (watch_in if term.sense == MAX else watch_out).update(idx)
        self.watch_in = sorted(watch_in)
        self.watch_out = sorted(watch_out)
        # per junction: config id -> {link: prefix sums over cycle positions}
        self.cum_in: list[dict] = []
        self.cum_out: list[dict] = []
        self.max_in: list[dict] = []
        self.max_out: list[dict] = []
        for j in self.instance.junctions:
            cin, cout, min_, mout = {}, {}, {}, {}
            for c in j.configs:
                table = self.net.tables[(j.id, c.id)]
                per_in = {l: [0] * len(table) for l in self.watch_in}
                per_out = {l: [0] * len(table) for l in self.watch_out}
                for pos, moves in enumerate(table):
                    for a, b, r in moves:
                        if b in per_in:
                            per_in[b][pos] += r
                        if a in per_out:
                            per_out[a][pos] += r
                cin[c.id] = {l: list(itertools.accumulate(v, initial=0)) for l, v in per_in.items() if any(v)}
                cout[c.id] = {l: list(itertools.accumulate(v, initial=0)) for l, v in per_out.items() if any(v)}
                for l, v in per_in.items():
                    min_[l] = max(min_.get(l, 0), max(v, default=0))
                for l, v in per_out.items():
                    mout[l] = max(mout.get(l, 0), max(v, default=0))
            self.cum_in.append(cin)
            self.cum_out.append(cout)
            self.max_in.append({l: v for l, v in min_.items() if v})
            self.max_out.append({l: v for l, v in mout.items() if v})

    @staticmethod
    def _window(cum: list[int], pos: int, length: int) -> int:
        d = len(cum) - 1
        full, rem = divmod(length, d)
        total = full * cum[d]
        end = pos + rem
        if end <= d:
            return total + cum[end] - cum[pos]
        return total + cum[d] - cum[pos] + cum[end - d]

    def _flow_bounds(self, node: _Node):
        """Ungated inflow/outflow upper bounds for ticks ``node.t+1 .. horizon``."""
        h, t = self.horizon, node.t
        ub_in = dict.fromkeys(self.watch_in, 0)
        ub_out = dict.fromkeys(self.watch_out, 0)
        if t >= h:
            return ub_in, ub_out
        nxt = self.next_time[len(node.prefix)]
        for j, (cid, start, offset) in enumerate(node.segs):
            known_end = min(nxt[j] - 1, h)
            known = max(0, known_end - t)
            unknown = h - max(t, known_end)
            for cum, mx, ub in (
                (self.cum_in[j][cid], self.max_in[j], ub_in),
                (self.cum_out[j][cid], self.max_out[j], ub_out),
            ):
                if known:
                    for l, c in cum.items():
                        d = len(c) - 1
                        ub[l] += self._window(c, (offset + t + 1 - start) % d, known)
                if unknown:
                    for l, m in mx.items():
                        ub[l] += unknown * m
        return ub_in, ub_out

    def counters(self, node: _Node) -> list[int]:
        c0 = self.net.counter0
        return [a + b for a, b in zip(c0, node.inflow)]

    def value(self, node: _Node) -> tuple[Pcu, ...]:
        return evaluate(self.objective, self.net.index, self.net.occ0, node.occ, self.counters(node))

    def bound(self, node: _Node) -> tuple[Optional[tuple[Pcu, ...]], bool]:
        """Objective upper bound and whether constraints can still be met."""
        ub_in, ub_out = self._flow_bounds(node)
        c0, occ0, index = self.net.counter0, self.net.occ0, self.net.index
        feasible = True
        bound = self.problem.bound
        for i in self.goal_idx:
            if c0[i] + node.inflow[i] + ub_in[i] < bound:
                feasible = False
                break
        if feasible and self.problem.baseline:
            best = sum(c0[i] + node.inflow[i] + ub_in[i] for i in self.base_idx)
            feasible = best > self.base_total
        values = []
        for tier in self.objective.tiers:
            total = 0
            for term in tier:
                for lid in term.links:
                    i = index[lid]
                    if term.quantity == COUNTER:
                        now = c0[i] + node.inflow[i]
                        total += now + ub_in[i] if term.sense == MAX else -now
                    else:
                        now = node.occ[i] - occ0[i]
                        total += now + ub_in[i] if term.sense == MAX else -now + ub_out[i]
            values.append(total)
        return tuple(values), feasible

    def feasible_leaf(self, node: _Node) -> bool:
        counters = self.counters(node)
        if any(counters[i] < self.problem.bound for i in self.goal_idx):
            return False
        if self.problem.baseline:
            return sum(counters[i] for i in self.base_idx) > self.base_total
        return True

    # -- nodes --------------------------------------------------------------

    def _advance(self, occ, inflow, t_from, t_to, segs) -> None:
        if t_to <= t_from:
            return
        net = self.net
        current = [
            (net.tables[(j.id, cid)], start, offset)
            for j, (cid, start, offset) in zip(self.instance.junctions, segs)
        ]
        net.advance(occ, inflow, t_from, t_to, current)

    def root(self) -> _Node:
        segs, last = [], []
        for j in self.instance.junctions:
            segs.append((j.initial.config, 0, elapsed_in_cycle(j)))
            last.append((j.initial.config, -j.initial.completed_cycles))
        occ, inflow = list(self.net.occ0), [0] * len(self.net.occ0)
        t = self.times[0] - 1
        self._advance(occ, inflow, 0, t, segs)
        self.nodes += 1
        return _Node((), t, occ, inflow, tuple(segs), tuple(last))

    def choices(self, node: _Node) -> list[str]:
        """Legal configurations at the next point, current configuration first."""
        i = len(node.prefix)
        j = self.point_j[i]
        current, last_change = node.last[j]
        cycle = self.points[i].cycle_index
        out = [current]
        if cycle - last_change >= self.k[j]:
            out.extend(c for c in self.options[i] if c != current)
        return out

    def child(self, node: _Node, config: str) -> _Node:
        self.tick()
        i = len(node.prefix)
        j = self.point_j[i]
        p = self.points[i]
        segs = list(node.segs)
        segs[j] = (config, p.time, 0)
        last = list(node.last)
        if config != last[j][0]:
            last[j] = (config, p.cycle_index)
        occ, inflow = list(node.occ), list(node.inflow)
        t = self.times[i + 1] - 1
        self._advance(occ, inflow, node.t, t, segs)
        self.nodes += 1
        return _Node(node.prefix + (config,), t, occ, inflow, tuple(segs), tuple(last))

    def tick(self) -> None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Timeout

    def plan(self, prefix: Sequence[str]) -> SignalPlan:
        return plan_from_sequence(self.instance, prefix)


def _finish(status, core, best, started, history) -> SearchResult:
    plan = value = None
    if best is not None:
        value, seq = best
        plan = core.plan(seq)
    return SearchResult(status, plan, value, core.nodes, time.monotonic() - started, history)


def branch_and_bound(
    problem: SearchProblem,
    on_improve: Optional[Callable[[tuple[Pcu, ...], SignalPlan], None]] = None,
) -> SearchResult:
    started = time.monotonic()
    core = _Core(problem)
    decision = problem.mode == DECISION
    n = len(core.points)
    best: list = [None, None]  # value, sequence
    history: list = []

    def offer(node: _Node) -> None:
        if not core.feasible_leaf(node):
            return
        value = core.value(node)
        if _better(value, node.prefix, best[0], best[1]):
            best[0], best[1] = value, node.prefix
            history.append((time.monotonic() - started, value))
            if on_improve:
                on_improve(value, core.plan(node.prefix))
        if decision:
            raise _Found

    def prunable(node: _Node) -> bool:
        ub, feasible = core.bound(node)
        if not feasible:
            return True
        if decision or best[0] is None:
            return False
        if ub < best[0]:
            return True
        return ub == best[0] and node.prefix > best[1][: len(node.prefix)]

    def expand(node: _Node) -> None:
        if len(node.prefix) == n:
            offer(node)
            return
        for config in core.choices(node):
            child = core.child(node, config)
            if not prunable(child):
                expand(child)

    status = None
    try:
        root = core.root()
        if not prunable(root):
            expand(root)
    except _Found:
        status = SATISFIED
    except _Timeout:
        status = BEST_FOUND if best[0] is not None else TIMEOUT_NO_SOLUTION
    if status is None:
        status = OPTIMAL if best[0] is not None else UNSATISFIABLE
        if decision and best[0] is not None:
            status = SATISFIED
    found = None if best[0] is None else (best[0], best[1])
    return _finish(status, core, found, started, history)


def beam_search(
    problem: SearchProblem,
    width: int,
    on_improve: Optional[Callable[[tuple[Pcu, ...], SignalPlan], None]] = None,
) -> SearchResult:
    """Anytime beam search, widening the beam from 1 to ``width``.

    Prefixes at each decision point are ranked by their objective value so
    far, then by their admissible bound, then by configuration sequence.
    Once a pass keeps every prefix the search was exhaustive and the result
    is reported as optimal.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    started = time.monotonic()
    core = _Core(problem)
    decision = problem.mode == DECISION
    n = len(core.points)
    cache: dict[tuple, tuple] = {}  # prefix -> (node, rank key, feasible, value, leaf ok)
    kids: dict[tuple, list] = {}
    best = None
    history: list = []
    exhaustive = False

    def scored(node: _Node):
        hit = cache.get(node.prefix)
        if hit is None:
            ub, feasible = core.bound(node)
            value = core.value(node)
            key = (tuple(-v for v in value), tuple(-v for v in ub), node.prefix)
            leaf_ok = len(node.prefix) == n and core.feasible_leaf(node)
            hit = cache[node.prefix] = (node, key, feasible, value, leaf_ok)
        return hit

    def expansions(node: _Node):
        out = kids.get(node.prefix)
        if out is None:
            out = kids[node.prefix] = [node.prefix + (c,) for c in core.choices(node)]
        return out

    try:
        root = core.root()
        root_entry = scored(root)
        for w in range(1, width + 1):
            truncated = False
            beam = [root_entry] if root_entry[2] else []
            for i in range(n):
                children = []
                for entry in beam:
                    node = entry[0]
                    for key in expansions(node):
                        child = cache.get(key) or scored(core.child(node, key[-1]))
                        if child[2]:
                            children.append(child)
                if len(children) > w:
                    children.sort(key=lambda e: e[1])
                    children = children[:w]
                    truncated = True
                beam = children
                if not beam:
                    break
            for node, _, _, value, leaf_ok in beam:
                if leaf_ok and (best is None or _better(value, node.prefix, best[0], best[1])):
                    best = (value, node.prefix)
                    history.append((time.monotonic() - started, value))
                    if on_improve:
                        on_improve(value, core.plan(node.prefix))
            if decision and best is not None:
                return _finish(SATISFIED, core, best, started, history)
            if not truncated:
                exhaustive = True
                break
            core.tick()
    except _Timeout:
        return _finish(BEST_FOUND if best else TIMEOUT_NO_SOLUTION, core, best, started, history)
    if exhaustive:
        status = (SATISFIED if decision else OPTIMAL) if best else UNSATISFIABLE
    else:
        status = BEST_FOUND if best else TIMEOUT_NO_SOLUTION
    return _finish(status, core, best, started, history)


def admissible_bound(problem: SearchProblem, prefix: Sequence[str] = ()) -> tuple[Pcu, ...]:
    """Upper bound on the objective of every completion of ``prefix``.

    ``prefix`` lists configurations for the first decision points in
    (time, junction) order. The prefix is simulated exactly; after that every
    goal link is assumed to receive, each tick, the largest inflow any
    configuration could give it with all gates open. A complete plan gets its
    exact value.
    """
    core = _Core(problem)
    if len(prefix) > len(core.points):
        raise ValueError(f"prefix has {len(prefix)} choices but there are {len(core.points)} decision points")
    node = core.root()
    for i, config in enumerate(prefix):
        if config not in core.options[i]:
            raise ValueError(f"{config} is not available at {core.points[i]}")
        node = core.child(node, config)
    return core.bound(node)[0]


def plan_space_size(instance: Instance) -> int:
    """Number of unconstrained plans (before k-legality)."""
    return math.prod(len(instance.junction(p.junction).available) for p in all_decision_points(instance))


def legal_sequences(instance: Instance, cap: int = DEFAULT_PLAN_CAP):
    """Yield every k-legal plan in lexicographic order of configuration ids."""
    points = all_decision_points(instance)
    size = plan_space_size(instance)
    if size > cap:
        raise PlanSpaceTooLarge(f"{size} candidate plans exceed the cap of {cap}")
    options = [instance.junction(p.junction).available for p in points]
    for seq in itertools.product(*options):
        plan = plan_from_sequence(instance, seq)
        if legal_plans_filter(instance, plan):
            yield seq, plan


def enumerate_all(problem: SearchProblem) -> SearchResult:
    """Simulate every k-legal plan; exact but exponential."""
    started = time.monotonic()
    inst = problem.instance
    net = Network(inst)
    index = net.index
    goal_idx = [index[l] for l in inst.goal_links]
    base_idx = [index[l] for l in problem.baseline]
    base_total = sum(problem.baseline.values())
    best = None
    count = 0
    for seq, plan in legal_sequences(inst, problem.plan_cap):
        count += 1
        occ, inflow, _ = net.run(plan)
        counters = [a + b for a, b in zip(net.counter0, inflow)]
        if any(counters[i] < problem.bound for i in goal_idx):
            continue
        if problem.baseline and sum(counters[i] for i in base_idx) <= base_total:
            continue
        value = evaluate(problem.objective, index, net.occ0, occ, counters)
        if best is None or value > best[0]:  # sequences arrive in lexicographic order
            best = (value, plan)
            if problem.mode == DECISION:
                break
    elapsed = time.monotonic() - started
    if best is None:
        return SearchResult(UNSATISFIABLE, None, None, count, elapsed)
    status = SATISFIED if problem.mode == DECISION else OPTIMAL
    return SearchResult(status, best[1], best[0], count, elapsed, [(elapsed, best[0])])


def check_plan(problem: SearchProblem, plan: SignalPlan) -> PlanReport:
    """Evaluate legality, constraints and objective value of ``plan``.

    Raises :class:`~signalopt.timeline.PlanError` if the plan does not match
    the instance's decision points or configurations.
    """
    inst = problem.instance
    check_plan_shape(inst, plan)
    violations = k_violations(inst, plan)
    net = Network(inst)
    occ, inflow, _ = net.run(plan)
    counters = [a + b for a, b in zip(net.counter0, inflow)]
    index = net.index
    goal = {lid: counters[index[lid]] for lid in inst.goal_links}
    below = [lid for lid, c in goal.items() if c < problem.bound]
    baseline_ok = None
    if problem.baseline:
        baseline_ok = sum(counters[index[l]] for l in problem.baseline) > sum(problem.baseline.values())
    value = evaluate(problem.objective, index, net.occ0, occ, counters)
    return PlanReport(not violations, violations, not below, below, baseline_ok, value, goal)


def solve(problem: SearchProblem, engine: str = "bnb", beam_width: int = 8, on_improve=None) -> SearchResult:
    if engine == "bnb":
        return branch_and_bound(problem, on_improve)
    if engine == "beam":
        return beam_search(problem, beam_width, on_improve)
    if engine == "exhaustive":
        return enumerate_all(problem)
    raise ValueError(f"unknown engine {engine!r}")
