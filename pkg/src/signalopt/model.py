"""Domain types for a signalised corridor and their structural validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

from .pcu import Pcu

STAGE = "stage"
INTERGREEN = "inter"

DEFAULT_K = 4
DEFAULT_BOUND = 0
DEFAULT_HORIZON = 900

# Optional per-link markers used by alternative objectives.
TARGET_KINDS = ("max_occupancy", "min_occupancy", "flush_traffic", "slow_traffic")


@dataclass(frozen=True, order=True)
class PhaseId:
    """A stage or intergreen of one junction, rendered as ``stage(j1,1)``."""

    junction: str
    kind: str
    index: int

    def __post_init__(self) -> None:
        if self.kind not in (STAGE, INTERGREEN):
            raise ValueError(f"phase kind must be stage or inter, got {self.kind!r}")

    @property
    def is_stage(self) -> bool:
        return self.kind == STAGE

    def __str__(self) -> str:
        return f"{self.kind}({self.junction},{self.index})"


@dataclass(frozen=True, order=True)
class LinkId:
    """Directed road link from ``source`` to ``target``; ``label`` disambiguates."""

    source: str
    label: str
    target: str

    def __str__(self) -> str:
        return f"link({self.source},{self.label},{self.target})"


@dataclass(frozen=True)
class Configuration:
    id: str
    junction: str
    phases: tuple[tuple[PhaseId, int], ...]

    @property
    def cycle_duration(self) -> int:
        return sum(d for _, d in self.phases)

    def duration_of(self, phase: PhaseId) -> int:
        for p, d in self.phases:
            if p == phase:
                return d
        raise KeyError(f"{phase} is not part of configuration {self.id}")


@dataclass(frozen=True)
class JunctionState:
    """Status of a junction at time 0."""

    phase: PhaseId
    elapsed: int
    config: str
    completed_cycles: int = 0


@dataclass(frozen=True)
class Junction:
    id: str
    controllable: bool
    configs: tuple[Configuration, ...]
    available: tuple[str, ...]
    initial: JunctionState
    k: Optional[int] = None  # None: use the instance-wide value

    def config(self, config_id: str) -> Configuration:
        for c in self.configs:
            if c.id == config_id:
                return c
        raise KeyError(f"junction {self.id} has no configuration {config_id}")

    @property
    def initial_config(self) -> Configuration:
        return self.config(self.initial.config)


@dataclass(frozen=True)
class Link:
    id: LinkId
    capacity: Optional[Pcu] = None  # None means unbounded
    initial_occ: Pcu = 0
    is_goal: bool = False
    initial_counter: Pcu = 0


@dataclass(frozen=True)
class TurnRateTable:
    """Turn rates keyed by (stage, from-link, to-link); absent keys read as 0."""

    entries: tuple[tuple[tuple[PhaseId, LinkId, LinkId], Pcu], ...] = ()

    @classmethod
    def from_mapping(
        cls, rates: Mapping[tuple[PhaseId, LinkId, LinkId], Pcu]
    ) -> "TurnRateTable":
        return cls(tuple(sorted(rates.items())))

    @cached_property
    def _lookup(self) -> dict:
        return dict(self.entries)

    def rate(self, stage: PhaseId, source: LinkId, target: LinkId) -> Pcu:
        if not stage.is_stage:
            return 0
        return self._lookup.get((stage, source, target), 0)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Instance:
    junctions: tuple[Junction, ...] = ()
    links: tuple[Link, ...] = ()
    turn_rates: TurnRateTable = field(default_factory=TurnRateTable)
    horizon: int = DEFAULT_HORIZON
    k: int = DEFAULT_K
    bound: Pcu = DEFAULT_BOUND
    targets: tuple[tuple[str, tuple[LinkId, ...]], ...] = ()
    extra_facts: tuple[str, ...] = ()

    @cached_property
    def _junction_index(self) -> dict[str, Junction]:
        return {j.id: j for j in self.junctions}

    @cached_property
    def _link_index(self) -> dict[LinkId, Link]:
        return {l.id: l for l in self.links}

    def junction(self, junction_id: str) -> Junction:
        return self._junction_index[junction_id]

    def link(self, link_id: LinkId) -> Link:
        return self._link_index[link_id]

    def has_link(self, link_id: LinkId) -> bool:
        return link_id in self._link_index

    def k_for(self, junction_id: str) -> int:
        j = self.junction(junction_id)
        return self.k if j.k is None else j.k

    @property
    def goal_links(self) -> tuple[LinkId, ...]:
        return tuple(l.id for l in self.links if l.is_goal)

    def target_links(self, kind: str) -> tuple[LinkId, ...]:
        return dict(self.targets).get(kind, ())

    def replace(self, **changes) -> "Instance":
        fields = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__  # type: ignore[attr-defined]
        }
        fields.update(changes)
        return Instance(**fields)


def make_instance(
    junctions: Iterable[Junction],
    links: Iterable[Link],
    turn_rates: Mapping[tuple[PhaseId, LinkId, LinkId], Pcu] | TurnRateTable = (),
    **kwargs,
) -> Instance:
    """Build an :class:`Instance` with canonical (sorted) ordering."""
    if not isinstance(turn_rates, TurnRateTable):
        turn_rates = TurnRateTable.from_mapping(dict(turn_rates))
    targets = kwargs.pop("targets", ())
    if isinstance(targets, Mapping):
        targets = targets.items()
    targets = tuple(sorted((k, tuple(sorted(v))) for k, v in targets if v))
    return Instance(
        junctions=tuple(sorted(junctions, key=lambda j: j.id)),
        links=tuple(sorted(links, key=lambda l: l.id)),
        turn_rates=turn_rates,
        targets=targets,
        **kwargs,
    )


def validate(instance: Instance) -> list[str]:
    """Return every structural problem found in ``instance`` (empty if valid).

    The result is sorted so it does not depend on the order facts were given in.
    """
    problems: list[str] = []
    add = problems.append
    junction_ids = {j.id for j in instance.junctions}

    if instance.horizon < 0:
        add(f"horizon must be >= 0, got {instance.horizon}")
    if instance.k < 1:
        add(f"k must be >= 1, got {instance.k}")

    for j in instance.junctions:
        if j.k is not None and j.k < 1:
            add(f"junction {j.id}: k must be >= 1, got {j.k}")
        if not j.available:
            add(f"junction {j.id}: no available configuration")
        config_ids = {c.id for c in j.configs}
        for a in j.available:
            if a not in config_ids:
                add(f"junction {j.id}: available configuration {a} is not defined")
        if j.initial.config not in j.available:
            add(f"junction {j.id}: initial configuration {j.initial.config} is not available")
        for c in j.configs:
            problems.extend(_configuration_problems(c))
        usable = sorted((c for c in j.configs if c.id in j.available), key=lambda c: c.id)
        if usable:
            first = usable[0]
            for other in usable[1:]:
                if other.cycle_duration != first.cycle_duration:
                    add(
                        f"junction {j.id}: cycle lengths differ: "
                        f"{first.cycle_duration} vs {other.cycle_duration} "
                        f"({first.id} vs {other.id})"
                    )
                if [p for p, _ in other.phases] != [p for p, _ in first.phases]:
                    add(f"junction {j.id}: phase order differs between {first.id} and {other.id}")
        if j.initial.config in config_ids:
            init = j.config(j.initial.config)
            phases = dict(init.phases)
            if j.initial.phase not in phases:
                add(
                    f"junction {j.id}: initial phase {j.initial.phase} "
                    f"not in active configuration {init.id}"
                )
            elif not 0 <= j.initial.elapsed < phases[j.initial.phase]:
                add(
                    f"junction {j.id}: initial elapsed {j.initial.elapsed} outside "
                    f"[0, {phases[j.initial.phase]}) for {j.initial.phase}"
                )
        if j.initial.completed_cycles < 0:
            add(f"junction {j.id}: negative completed cycle count")

    for link in instance.links:
        if link.capacity is not None and link.capacity < 0:
            add(f"{link.id}: negative capacity")
        if link.initial_occ < 0:
            add(f"{link.id}: negative initial occupancy")
        if link.capacity is not None and link.initial_occ > link.capacity:
            add(f"{link.id}: initial occupancy exceeds capacity")
        if link.initial_counter < 0:
            add(f"{link.id}: negative initial counter")

    for (stage, source, target), rate in instance.turn_rates:
        where = f"turnrate({stage},{source},{target})"
        if rate < 0:
            add(f"{where}: negative rate {rate}")
        if not stage.is_stage:
            add(f"{where}: turn rate given for an intergreen")
        if stage.junction not in junction_ids:
            add(f"{where}: unknown junction {stage.junction}")
        for lid in (source, target):
            if not instance.has_link(lid):
                add(f"{where}: dangling link {lid}")
        if source.target != stage.junction:
            add(f"{where}: {source} does not end at {stage.junction}")
        if target.source != stage.junction:
            add(f"{where}: {target} does not start at {stage.junction}")

    seen: dict[str, set[LinkId]] = {}
    for kind, links in instance.targets:
        if kind not in TARGET_KINDS:
            add(f"unknown target kind {kind}")
        for lid in links:
            if not instance.has_link(lid):
                add(f"{kind}({lid}): dangling link")
        seen[kind] = set(links)
    for a, b in (("max_occupancy", "min_occupancy"), ("flush_traffic", "slow_traffic")):
        for lid in sorted(seen.get(a, set()) & seen.get(b, set())):
            add(f"{lid}: contrasting targets {a} and {b}")

    return sorted(set(problems))


def _configuration_problems(config: Configuration) -> list[str]:
    out = []
    where = f"configuration {config.id}"
    if not config.phases:
        return [f"{where}: no phases"]
    for i, (phase, duration) in enumerate(config.phases):
        if phase.junction != config.junction:
            out.append(f"{where}: phase {phase} belongs to junction {phase.junction}")
        if duration < 1:
            out.append(f"{where}: phase {phase} has duration {duration} < 1")
        expected = STAGE if i % 2 == 0 else INTERGREEN
        if phase.kind != expected:
            out.append(f"{where}: phase {i + 1} should be a {expected}, got {phase}")
    if config.phases[-1][0].kind != INTERGREEN:
        out.append(f"{where}: cycle must end with an intergreen")
    return out
