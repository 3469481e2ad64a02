"""Cycle arithmetic: phase ranges, decision points and per-tick junction status."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .model import Configuration, Instance, Junction, PhaseId


@dataclass(frozen=True, order=True)
class DecisionPoint:
    """End of the ``cycle_index``-th cycle of ``junction``, at tick ``time``."""

    time: int
    junction: str
    cycle_index: int


@dataclass(frozen=True)
class PhaseRange:
    phase: PhaseId
    config: str
    begin: int
    end: int  # inclusive


@dataclass(frozen=True)
class ActiveState:
    phase: PhaseId
    elapsed: int
    config: str


@dataclass(frozen=True)
class SignalPlan:
    """Configuration chosen at each decision point of each controllable junction."""

    choices: tuple[tuple[str, tuple[tuple[DecisionPoint, str], ...]], ...] = ()

    @classmethod
    def from_mapping(cls, choices: Mapping[str, Iterable[tuple[DecisionPoint, str]]]) -> "SignalPlan":
        return cls(tuple(sorted((j, tuple(sorted(c))) for j, c in choices.items())))

    def for_junction(self, junction_id: str) -> tuple[tuple[DecisionPoint, str], ...]:
        return dict(self.choices).get(junction_id, ())

    def sequence(self) -> tuple[str, ...]:
        """Chosen configurations ordered by (time, junction)."""
        flat = sorted((dp, c) for _, cs in self.choices for dp, c in cs)
        return tuple(c for _, c in flat)

    def to_json(self) -> str:
        doc = {
            "junctions": {
                j: [{"cycle_index": dp.cycle_index, "time": dp.time, "config": c} for dp, c in cs]
                for j, cs in self.choices
            }
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SignalPlan":
        doc = json.loads(text)
        if not isinstance(doc, dict) or not isinstance(doc.get("junctions"), dict):
            raise ValueError('plan JSON must be an object with a "junctions" object')
        choices = {}
        for j, entries in doc["junctions"].items():
            try:
                choices[j] = [
                    (DecisionPoint(int(e["time"]), j, int(e["cycle_index"])), str(e["config"]))
                    for e in entries
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"malformed plan entry for junction {j}: {exc}") from None
        return cls.from_mapping(choices)


class PlanError(ValueError):
    """A plan does not fit the decision points or configurations of its instance."""


def cycle_duration(config: Configuration) -> int:
    return sum(d for _, d in config.phases)


def phase_ranges(config: Configuration) -> list[PhaseRange]:
    out, begin = [], 0
    for phase, duration in config.phases:
        out.append(PhaseRange(phase, config.id, begin, begin + duration - 1))
        begin += duration
    return out


def elapsed_in_cycle(junction: Junction) -> int:
    """Seconds between the start of the current cycle and time 0."""
    init = junction.initial
    config = junction.initial_config
    for r in phase_ranges(config):
        if r.phase == init.phase:
            length = r.end - r.begin + 1
            if not 0 <= init.elapsed < length:
                raise ValueError(
                    f"junction {junction.id}: elapsed {init.elapsed} not within "
                    f"duration {length} of {init.phase}"
                )
            return r.begin + init.elapsed
    raise ValueError(f"junction {junction.id}: {init.phase} not in configuration {config.id}")


def decision_points(junction: Junction, horizon: int) -> list[DecisionPoint]:
    """Cycle ends strictly inside ``(0, horizon)``; empty for fixed junctions."""
    if not junction.controllable:
        return []
    d = cycle_duration(junction.initial_config)
    s0 = elapsed_in_cycle(junction)
    out, c = [], 1
    while c * d - s0 <= horizon - 1:
        t = c * d - s0
        if t > 0:
            out.append(DecisionPoint(t, junction.id, c))
        c += 1
    return out


def all_decision_points(instance: Instance) -> list[DecisionPoint]:
    """Every decision point of the instance, sorted by time then junction id."""
    return sorted(dp for j in instance.junctions for dp in decision_points(j, instance.horizon))


def identity_plan(instance: Instance) -> SignalPlan:
    """Keep every junction on its initial configuration."""
    return SignalPlan.from_mapping(
        {
            j.id: [(dp, j.initial.config) for dp in decision_points(j, instance.horizon)]
            for j in instance.junctions
            if j.controllable
        }
    )


def plan_from_sequence(instance: Instance, sequence: Sequence[str]) -> SignalPlan:
    points = all_decision_points(instance)
    if len(points) != len(sequence):
        raise PlanError(f"expected {len(points)} choices, got {len(sequence)}")
    choices: dict[str, list] = {j.id: [] for j in instance.junctions if j.controllable}
    for dp, c in zip(points, sequence):
        choices[dp.junction].append((dp, c))
    return SignalPlan.from_mapping(choices)


def check_plan_shape(instance: Instance, plan: SignalPlan) -> None:
    """Raise :class:`PlanError` unless ``plan`` decides exactly the instance's points."""
    controllable = {j.id for j in instance.junctions if j.controllable}
    for jid, _ in plan.choices:
        if jid not in controllable:
            raise PlanError(f"plan names junction {jid}, which is not controllable")
    for j in instance.junctions:
        if not j.controllable:
            continue
        expected = decision_points(j, instance.horizon)
        given = plan.for_junction(j.id)
        got = [dp for dp, _ in given]
        if got != expected:
            missing = sorted(set(expected) - set(got))
            extra = sorted(set(got) - set(expected))
            detail = []
            if missing:
                detail.append("missing " + ", ".join(f"cycle {d.cycle_index} (t={d.time})" for d in missing))
            if extra:
                detail.append("unexpected " + ", ".join(f"cycle {d.cycle_index} (t={d.time})" for d in extra))
            raise PlanError(f"junction {j.id}: {'; '.join(detail) or 'duplicate decisions'}")
        for dp, c in given:
            if c not in j.available:
                raise PlanError(f"junction {j.id}: configuration {c} at cycle {dp.cycle_index} is not available")


def k_violations(instance: Instance, plan: SignalPlan, k: Optional[int] = None) -> list[str]:
    """Describe every configuration change that comes too soon.

    A change at cycle ``c`` needs ``count_c + c >= k`` when it is the first
    one, and at least ``k`` cycles since the previous change otherwise.
    """
    out = []
    for j in instance.junctions:
        kk = instance.k_for(j.id) if k is None else k
        previous = j.initial.config
        last_change = -j.initial.completed_cycles
        for dp, config in plan.for_junction(j.id):
            if config == previous:
                continue
            since = dp.cycle_index - last_change
            if since < kk:
                out.append(
                    f"junction {j.id}: change to {config} at cycle {dp.cycle_index} "
                    f"(t={dp.time}) after {since} cycles, k={kk}"
                )
            previous, last_change = config, dp.cycle_index
    return out


def legal_plans_filter(instance: Instance, plan: SignalPlan, k: Optional[int] = None) -> bool:
    return not k_violations(instance, plan, k)


# --- per-tick status -------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """From tick ``start`` on, ``config`` runs with cycle position ``offset`` at ``start``."""

    start: int
    config: Configuration
    offset: int

    def position(self, t: int) -> int:
        return (self.offset + t - self.start) % cycle_duration(self.config)


def segments(junction: Junction, choices: Sequence[tuple[DecisionPoint, str]]) -> list[Segment]:
    out = [Segment(0, junction.initial_config, elapsed_in_cycle(junction))]
    for dp, config_id in choices:
        out.append(Segment(dp.time, junction.config(config_id), 0))
    return out


def _locate(config: Configuration, position: int) -> tuple[PhaseId, int]:
    for r in phase_ranges(config):
        if r.begin <= position <= r.end:
            return r.phase, position - r.begin
    raise AssertionError("phase ranges do not cover the cycle")


def active_state(instance: Instance, plan: SignalPlan, t: int) -> dict[str, ActiveState]:
    """Phase, time in phase and configuration of every junction at tick ``t``."""
    if not 0 <= t <= instance.horizon:
        raise ValueError(f"t={t} outside [0, {instance.horizon}]")
    out = {}
    for j in instance.junctions:
        seg = [s for s in segments(j, plan.for_junction(j.id)) if s.start <= t][-1]
        phase, elapsed = _locate(seg.config, seg.position(t))
        out[j.id] = ActiveState(phase, elapsed, seg.config.id)
    return out


def timeline(instance: Instance, plan: SignalPlan) -> list[tuple[int, str, ActiveState]]:
    """``(t, junction, state)`` rows for every tick ``0..horizon``."""
    rows = []
    for j in instance.junctions:
        segs = segments(j, plan.for_junction(j.id))
        tables = {}
        for seg in segs:
            if seg.config.id not in tables:
                tables[seg.config.id] = [
                    _locate(seg.config, p) for p in range(cycle_duration(seg.config))
                ]
        i = 0
        for t in range(instance.horizon + 1):
            while i + 1 < len(segs) and segs[i + 1].start <= t:
                i += 1
            phase, elapsed = tables[segs[i].config.id][segs[i].position(t)]
            rows.append((t, j.id, ActiveState(phase, elapsed, segs[i].config.id)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def timeline_csv(instance: Instance, plan: SignalPlan) -> str:
    lines = ["time,junction,active_p,active_t,active_c"]
    for t, jid, s in timeline(instance, plan):
        lines.append(f'{t},{jid},"{s.phase}",{s.elapsed},{s.config}')
    return "\n".join(lines) + "\n"
