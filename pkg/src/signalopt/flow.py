"""Second-by-second mesoscopic flow of PCU through the corridor.

At tick ``t`` every stage active at ``t`` moves ``rate`` PCU from each of
its incoming links to each outgoing link, provided the source link was not
empty and the destination not full at ``t - 1``. Occupancy gains inflow and
loses outflow; goal-link counters accumulate inflow only. Nothing is clamped,
so a link may overshoot its bounds by at most one tick of flow.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .model import Instance, LinkId, PhaseId
from .pcu import INT64_MAX, PcuOverflowError, pcu_to_decimal
from .timeline import (
    ActiveState,
    SignalPlan,
    Segment,
    active_state,
    cycle_duration,
    phase_ranges,
    segments,
)


@dataclass(frozen=True)
class CorridorState:
    t: int
    occ: Mapping[LinkId, int]
    counter: Mapping[LinkId, int]
    increments: Mapping[LinkId, int]


@dataclass(frozen=True)
class TickDelta:
    link: LinkId
    delta_in: int
    delta_out: int

    @property
    def delta_total(self) -> int:
        return self.delta_in - self.delta_out


@dataclass(frozen=True)
class Gate:
    not_empty: bool
    not_full: bool


def initial_state(instance: Instance, tracked: Iterable[LinkId] = ()) -> CorridorState:
    return CorridorState(
        t=0,
        occ={l.id: l.initial_occ for l in instance.links},
        counter={l.id: l.initial_counter for l in instance.links if l.is_goal},
        increments={lid: 0 for lid in sorted(set(tracked))},
    )


def gates(instance: Instance, state: CorridorState) -> dict[LinkId, Gate]:
    out = {}
    for link in instance.links:
        occ = state.occ[link.id]
        out[link.id] = Gate(
            not_empty=occ > 0,
            not_full=link.capacity is None or occ < link.capacity,
        )
    return out


def tick_delta(
    instance: Instance,
    active: Mapping[str, PhaseId],
    state: CorridorState,
    link: LinkId,
    gate: Optional[Mapping[LinkId, Gate]] = None,
    neighbours=None,
) -> TickDelta:
    """Flow into and out of ``link`` during the tick after ``state``.

    ``active`` maps junction id to the phase active at the new tick.
    """
    gate = gate if gate is not None else gates(instance, state)
    incoming, outgoing = neighbours or _neighbours(instance)
    d_in = 0
    for source in incoming.get(link, ()):
        stage = active.get(link.source)
        if stage is not None and gate[source].not_empty and gate[link].not_full:
            d_in += instance.turn_rates.rate(stage, source, link)
    d_out = 0
    for target in outgoing.get(link, ()):
        stage = active.get(link.target)
        if stage is not None and gate[link].not_empty and gate[target].not_full:
            d_out += instance.turn_rates.rate(stage, link, target)
    return TickDelta(link, d_in, d_out)


def _neighbours(instance: Instance):
    incoming: dict[LinkId, list[LinkId]] = {}
    outgoing: dict[LinkId, list[LinkId]] = {}
    for (stage, a, b), _ in instance.turn_rates:
        if stage.junction == a.target == b.source:
            incoming.setdefault(b, []).append(a)
            outgoing.setdefault(a, []).append(b)
    for d in (incoming, outgoing):
        for k in d:
            d[k] = sorted(set(d[k]))
    return incoming, outgoing


def step(instance: Instance, plan: SignalPlan, state: CorridorState) -> CorridorState:
    """Advance ``state`` by one tick. Slow and literal; see :func:`simulate`."""
    t = state.t + 1
    if t > instance.horizon:
        raise ValueError(f"cannot step past the horizon ({instance.horizon})")
    active = {j: s.phase for j, s in active_state(instance, plan, t).items()}
    gate = gates(instance, state)
    nb = _neighbours(instance)
    deltas = {l.id: tick_delta(instance, active, state, l.id, gate, nb) for l in instance.links}
    occ = {lid: _checked(v + deltas[lid].delta_total) for lid, v in state.occ.items()}
    counter = {lid: _checked(v + deltas[lid].delta_in) for lid, v in state.counter.items()}
    inc = {lid: _checked(v + deltas[lid].delta_total) for lid, v in state.increments.items()}
    return CorridorState(t, occ, counter, inc)


def _checked(v: int) -> int:
    if abs(v) > INT64_MAX:
        raise PcuOverflowError(f"value {v} overflows signed 64-bit range")
    return v


# --- compiled simulator ----------------------------------------------------


class Network:
    """An instance compiled into index-based tables for fast simulation.

    Links are numbered in sorted order. For every configuration, ``table[pos]``
    lists the ``(source, target, rate)`` movements active at cycle position
    ``pos``.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self.link_ids: list[LinkId] = [l.id for l in instance.links]
        self.index = {lid: i for i, lid in enumerate(self.link_ids)}
        self.caps = [math.inf if l.capacity is None else l.capacity for l in instance.links]
        self.occ0 = [l.initial_occ for l in instance.links]
        self.counter0 = [l.initial_counter if l.is_goal else 0 for l in instance.links]
        self.goal_idx = [i for i, l in enumerate(instance.links) if l.is_goal]
        self.junction_ids = [j.id for j in instance.junctions]

        moves: dict[PhaseId, list[tuple[int, int, int]]] = {}
        for (stage, a, b), rate in instance.turn_rates:
            if rate == 0 or not stage.is_stage:
                continue
            if a not in self.index or b not in self.index:
                continue
            if not stage.junction == a.target == b.source:
                continue
            moves.setdefault(stage, []).append((self.index[a], self.index[b], rate))
        self.moves = {p: tuple(m) for p, m in moves.items()}

        self.tables: dict[tuple[str, str], list[tuple]] = {}
        for j in instance.junctions:
            for c in j.configs:
                table = []
                for r in phase_ranges(c):
                    table.extend([self.moves.get(r.phase, ())] * (r.end - r.begin + 1))
                self.tables[(j.id, c.id)] = table

        total_rate = sum(r for _, r in instance.turn_rates if r > 0)
        worst = max(self.occ0 + self.counter0 + [0], key=abs) if self.link_ids else 0
        self._needs_overflow_check = abs(worst) + instance.horizon * total_rate > INT64_MAX

    def schedules(self, plan: SignalPlan) -> list[list[Segment]]:
        return [
            segments(j, plan.for_junction(j.id)) for j in self.instance.junctions
        ]

    def advance(
        self,
        occ: list[int],
        inflow: list[int],
        t_from: int,
        t_to: int,
        current: Sequence[tuple[list, int, int]],
        history: Optional[list] = None,
    ) -> None:
        """Run ticks ``t_from+1 .. t_to`` in place.

        ``current`` holds, per junction, ``(table, start, offset)`` of the
        segment in force for the whole window. If ``history`` is given, the
        state after every tick is appended to it as a pair of tuples.
        """
        caps = self.caps
        check = self._needs_overflow_check
        active = [(table, offset - start, len(table)) for table, start, offset in current]
        for t in range(t_from + 1, t_to + 1):
            flows = []
            for table, shift, d in active:
                for a, b, r in table[(t + shift) % d]:
                    if occ[a] > 0 and occ[b] < caps[b]:
                        flows.append((a, b, r))
            for a, b, r in flows:
                occ[a] -= r
                occ[b] += r
                inflow[b] += r
            if check:
                for v in occ + inflow:
                    _checked(v)
            if history is not None:
                history.append((tuple(occ), tuple(inflow)))

    def run(
        self,
        plan: SignalPlan,
        record: bool = False,
        horizon: Optional[int] = None,
    ) -> tuple[list[int], list[int], list[tuple[tuple[int, ...], tuple[int, ...]]]]:
        """Simulate ``plan`` to ``horizon``; optionally record every tick."""
        horizon = self.instance.horizon if horizon is None else horizon
        occ = list(self.occ0)
        inflow = [0] * len(occ)
        history = [(tuple(occ), tuple(inflow))] if record else []
        scheds = self.schedules(plan)
        cuts = sorted({s.start for segs in scheds for s in segs if 0 < s.start <= horizon})
        bounds = [0] + cuts + [horizon + 1]
        for lo, hi in zip(bounds, bounds[1:]):
            current = []
            for j, segs in zip(self.instance.junctions, scheds):
                seg = [s for s in segs if s.start <= lo][-1]
                current.append((self.tables[(j.id, seg.config.id)], seg.start, seg.offset))
            t_from, t_to = max(lo, 1) - 1, hi - 1
            self.advance(occ, inflow, t_from, t_to, current, history if record else None)
        return occ, inflow, history


@dataclass(frozen=True)
class Trace:
    """Occupancy and counters of every link for ``t = 0..horizon``."""

    link_ids: tuple[LinkId, ...]
    goal_links: tuple[LinkId, ...]
    tracked: tuple[LinkId, ...]
    occ: tuple[tuple[int, ...], ...]
    counter: tuple[tuple[int, ...], ...]  # counter0 + cumulative inflow, all links

    @property
    def horizon(self) -> int:
        return len(self.occ) - 1

    def state(self, t: int) -> CorridorState:
        idx = {lid: i for i, lid in enumerate(self.link_ids)}
        occ = self.occ[t]
        return CorridorState(
            t=t,
            occ={lid: occ[i] for lid, i in idx.items()},
            counter={lid: self.counter[t][idx[lid]] for lid in self.goal_links},
            increments={lid: occ[idx[lid]] - self.occ[0][idx[lid]] for lid in self.tracked},
        )

    def final_counter(self, link: LinkId) -> int:
        return self.counter[-1][self.link_ids.index(link)]

    def final_increment(self, link: LinkId) -> int:
        i = self.link_ids.index(link)
        return self.occ[-1][i] - self.occ[0][i]

    def to_csv(self) -> str:
        goals = set(self.goal_links)
        lines = ["time,link,occ,occ_pcu,counter,counter_pcu"]
        for t, (occ, counter) in enumerate(zip(self.occ, self.counter)):
            for i, lid in enumerate(self.link_ids):
                c = f"{counter[i]},{pcu_to_decimal(counter[i])}" if lid in goals else ","
                lines.append(f'{t},"{lid}",{occ[i]},{pcu_to_decimal(occ[i])},{c}')
        return "\n".join(lines) + "\n"


def simulate(
    instance: Instance,
    plan: SignalPlan,
    tracked: Iterable[LinkId] = (),
    network: Optional[Network] = None,
) -> Trace:
    """Full trace of ``plan``; a pure function of its arguments."""
    net = network or Network(instance)
    _, _, history = net.run(plan, record=True)
    c0 = net.counter0
    return Trace(
        link_ids=tuple(net.link_ids),
        goal_links=instance.goal_links,
        tracked=tuple(sorted(set(tracked))),
        occ=tuple(o for o, _ in history),
        counter=tuple(tuple(map(operator.add, c0, inflow)) for _, inflow in history),
    )


def epsilon(instance: Instance) -> dict[LinkId, int]:
    """Sum of every turn rate touching a link: an upper bound on one tick's flow."""
    out = {l.id: 0 for l in instance.links}
    for (_, a, b), rate in instance.turn_rates:
        for lid in (a, b):
            if lid in out:
                out[lid] += max(rate, 0)
    return out
