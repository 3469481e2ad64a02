"""Declarative objectives over counters and occupancy increments.

An objective is a list of priority tiers compared lexicographically; each
tier sums one or more terms. Minimised terms enter the sum negated, so a
larger tuple is always better.

Textual form (used by the CLI)::

    max_counter                                  # all goal links (the default)
    max_counter(link(a,y,b),link(b,y,c))         # explicit links
    max_counter(flush_traffic);min_counter(slow_traffic)   # two tiers
    max_occupancy + min_counter                  # one tier, two terms

A bare target kind (``flush_traffic``...) expands to the instance's links
marked with that kind. ``max_occupancy``/``min_occupancy`` without links use
the links marked ``max_occupancy``/``min_occupancy``; counter terms without
links use the goal links.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import TARGET_KINDS, Instance, LinkId
from .pcu import Pcu

COUNTER = "counter"
INCREMENTS = "increments"
MAX = "max"
MIN = "min"

_TERM_NAMES = {
    "max_counter": (COUNTER, MAX),
    "min_counter": (COUNTER, MIN),
    "max_occupancy": (INCREMENTS, MAX),
    "min_occupancy": (INCREMENTS, MIN),
}


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    quantity: str  # COUNTER or INCREMENTS
    sense: str  # MAX or MIN
    links: tuple[LinkId, ...]

    def __str__(self) -> str:
        name = {COUNTER: "counter", INCREMENTS: "occupancy"}[self.quantity]
        links = ",".join(map(str, self.links))
        return f"{self.sense}_{name}({links})"


@dataclass(frozen=True)
class Objective:
    tiers: tuple[tuple[Term, ...], ...]

    def __post_init__(self) -> None:
        claimed: dict[tuple[str, LinkId], str] = {}
        for tier in self.tiers:
            for term in tier:
                for lid in term.links:
                    other = claimed.setdefault((term.quantity, lid), term.sense)
                    if other != term.sense:
                        raise ObjectiveError(
                            f"contrasting objectives on {lid}: both max and min {term.quantity}"
                        )

    @classmethod
    def default(cls, instance: Instance) -> "Objective":
        return cls(((Term(COUNTER, MAX, instance.goal_links),),))

    @property
    def links(self) -> set[LinkId]:
        return {lid for tier in self.tiers for term in tier for lid in term.links}

    def increment_links(self) -> list[LinkId]:
        return sorted(
            {lid for tier in self.tiers for t in tier if t.quantity == INCREMENTS for lid in t.links}
        )

    def __str__(self) -> str:
        return ";".join(" + ".join(map(str, tier)) for tier in self.tiers)


def accident_objective(instance: Instance) -> Objective:
    """Flush traffic past an incident first, then hold back traffic before it."""
    flush = instance.target_links("flush_traffic")
    slow = instance.target_links("slow_traffic")
    return Objective(((Term(COUNTER, MAX, flush),), (Term(COUNTER, MIN, slow),)))


def parse_objective(text: str, instance: Instance) -> Objective:
    from .ingest import Function, IngestError, parse_facts

    text = text.strip()
    if text in ("", "default"):
        return Objective.default(instance)
    if text == "accident":
        return accident_objective(instance)
    tiers = []
    for tier_text in text.split(";"):
        terms = []
        for term_text in tier_text.split("+"):
            try:
                facts, consts = parse_facts(term_text.strip() + ".")
            except IngestError as exc:
                raise ObjectiveError(f"cannot parse objective term {term_text!r}: {exc}") from None
            if len(facts) != 1 or consts:
                raise ObjectiveError(f"cannot parse objective term {term_text!r}")
            fact = facts[0]
            if fact.predicate not in _TERM_NAMES:
                raise ObjectiveError(
                    f"unknown objective {fact.predicate!r}; expected one of {', '.join(_TERM_NAMES)}"
                )
            quantity, sense = _TERM_NAMES[fact.predicate]
            links: list[LinkId] = []
            if not fact.args:
                if quantity == COUNTER:
                    links.extend(instance.goal_links)
                else:
                    links.extend(instance.target_links(fact.predicate))
            for arg in fact.args:
                if isinstance(arg, Function) and arg.name in TARGET_KINDS and not arg.args:
                    links.extend(instance.target_links(arg.name))
                elif isinstance(arg, Function) and arg.name == "link" and len(arg.args) == 3:
                    links.append(LinkId(*(str(a) for a in arg.args)))
                else:
                    raise ObjectiveError(f"objective argument {arg} is not a link or target kind")
            for lid in links:
                if not instance.has_link(lid):
                    raise ObjectiveError(f"objective names unknown link {lid}")
            terms.append(Term(quantity, sense, tuple(sorted(set(links)))))
        tiers.append(tuple(terms))
    return Objective(tuple(tiers))


def evaluate(
    objective: Objective,
    link_index: dict[LinkId, int],
    occ0: Sequence[int],
    occ: Sequence[int],
    counter: Sequence[int],
) -> tuple[Pcu, ...]:
    """Objective tuple from final occupancy and counters (indexed like ``link_index``)."""
    values = []
    for tier in objective.tiers:
        total = 0
        for term in tier:
            s = 0
            for lid in term.links:
                i = link_index[lid]
                s += counter[i] if term.quantity == COUNTER else occ[i] - occ0[i]
            total += s if term.sense == MAX else -s
        values.append(total)
    return tuple(values)


def objective_value(trace, objective: Objective) -> tuple[Pcu, ...]:
    """Objective tuple of a completed :class:`~signalopt.flow.Trace`."""
    index = {lid: i for i, lid in enumerate(trace.link_ids)}
    for lid in objective.links:
        if lid not in index:
            raise ObjectiveError(f"objective names unknown link {lid}")
    return evaluate(objective, index, trace.occ[0], trace.occ[-1], trace.counter[-1])
