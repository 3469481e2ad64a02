"""Reading and writing instances in ASP ground-fact syntax.

Only ground facts over the instance vocabulary are understood, plus
``#const name=value.`` directives for ``horizon``, ``k`` and ``bound``.
Numbers are scaled integers (PCU x 10^5) unless ``decimal=True``.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Union

from .model import (
    DEFAULT_BOUND,
    DEFAULT_HORIZON,
    DEFAULT_K,
    INTERGREEN,
    STAGE,
    TARGET_KINDS,
    Configuration,
    Instance,
    Junction,
    JunctionState,
    Link,
    LinkId,
    PhaseId,
    make_instance,
)
from .pcu import Pcu, check_int64, pcu_from_decimal

log = logging.getLogger(__name__)

MAX_DEPTH = 32

ARITIES = {
    "controllable": 1,
    "available_conf": 2,
    "phase_limit": 3,
    "status": 2,
    "next": 2,
    "end": 1,
    "link": 3,
    "precedes": 2,
    "follows": 2,
    "capacity": 2,
    "initial_occ": 2,
    "turnrate": 4,
    "active_p": 2,
    "active_t": 3,
    "active_c": 3,
    "initial_count": 2,
    "count_c": 2,
    "stability": 2,
    **{kind: 1 for kind in TARGET_KINDS},
}
CONSTANTS = ("horizon", "k", "bound")


class IngestError(ValueError):
    """Base class for everything the parser rejects."""


class FactSyntaxError(IngestError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class InstanceError(IngestError):
    """Facts are well formed but do not describe a consistent instance."""


# --- terms -----------------------------------------------------------------


@dataclass(frozen=True)
class Function:
    name: str
    args: tuple = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({','.join(render(a) for a in self.args)})"


@dataclass(frozen=True)
class Decimal:
    """A decimal literal such as ``0.5``; only legal with decimal input."""

    text: str

    def __str__(self) -> str:
        return self.text


Term = Union[int, str, Function, Decimal]


def render(term: Term) -> str:
    if isinstance(term, str):
        return f'"{term}"'
    return str(term)


@dataclass(frozen=True)
class Fact:
    predicate: str
    args: tuple
    line: int = 0

    def __str__(self) -> str:
        if not self.args:
            return f"{self.predicate}."
        return f"{self.predicate}({','.join(render(a) for a in self.args)})."


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<block>%\*.*?\*%)
  | (?P<comment>%[^\n]*)
  | (?P<const>\#const\b)
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<ident>_*[a-z][A-Za-z0-9_']*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[(),.=])
    """,
    re.VERBOSE | re.DOTALL,
)


def _tokens(text: str):
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise FactSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "block", "comment"):
            yield kind, value, line, col
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + value.rindex("\n") + 1
        pos = m.end()
    yield "eof", "", line, pos - line_start + 1


class _Parser:
    def __init__(self, text: str):
        self._toks = list(_tokens(text))
        self._i = 0

    def _peek(self):
        return self._toks[self._i]

    def _take(self, kind=None, value=None):
        tok = self._toks[self._i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise FactSyntaxError(f"expected {want!r}, got {got!r}", tok[2], tok[3])
        self._i += 1
        return tok

    def statements(self):
        facts: list[Fact] = []
        consts: list[tuple[str, Term, int]] = []
        while self._peek()[0] != "eof":
            if self._peek()[0] == "const":
                _, _, line, _ = self._take("const")
                name = self._take("ident")[1]
                self._take("punct", "=")
                value = self._term(0)
                self._take("punct", ".")
                consts.append((name, value, line))
                continue
            tok = self._take("ident")
            args: tuple = ()
            if self._peek()[1] == "(":
                args = self._args(0)
            self._take("punct", ".")
            facts.append(Fact(tok[1], args, tok[2]))
        return facts, consts

    def _args(self, depth: int) -> tuple:
        self._take("punct", "(")
        args = [self._term(depth + 1)]
        while self._peek()[1] == ",":
            self._take("punct", ",")
            args.append(self._term(depth + 1))
        self._take("punct", ")")
        return tuple(args)

    def _term(self, depth: int) -> Term:
        kind, value, line, col = self._peek()
        if depth > MAX_DEPTH:
            raise FactSyntaxError("terms nested too deeply", line, col)
        if kind == "number":
            self._i += 1
            return Decimal(value) if "." in value else int(value)
        if kind == "string":
            self._i += 1
            return value[1:-1]
        if kind == "ident":
            self._i += 1
            if self._peek()[1] == "(":
                return Function(value, self._args(depth))
            return Function(value)
        got = value or "end of input"
        raise FactSyntaxError(f"expected a term, got {got!r}", line, col)


def parse_facts(text: str) -> tuple[list[Fact], list[tuple[str, Term, int]]]:
    """Split fact-file text into facts and ``#const`` definitions."""
    return _Parser(text).statements()


# --- term conversion -------------------------------------------------------


class _Converter:
    def __init__(self, decimal: bool):
        self.decimal = decimal

    def ident(self, term: Term, fact: Fact) -> str:
        if isinstance(term, Function) and not term.args:
            return term.name
        if isinstance(term, int):
            return str(term)
        raise InstanceError(f"line {fact.line}: expected an identifier in {fact}")

    def integer(self, term: Term, fact: Fact) -> int:
        if isinstance(term, int):
            return check_int64(term)
        raise InstanceError(f"line {fact.line}: expected an integer in {fact}")

    def pcu(self, term: Term, fact: Fact) -> Pcu:
        if self.decimal and isinstance(term, (int, Decimal)):
            try:
                return pcu_from_decimal(str(term))
            except ValueError as exc:
                raise InstanceError(f"line {fact.line}: {exc}") from None
        if isinstance(term, Decimal):
            raise InstanceError(
                f"line {fact.line}: decimal literal {term} needs decimal input mode"
            )
        return self.integer(term, fact)

    def phase(self, term: Term, fact: Fact) -> PhaseId:
        if (
            isinstance(term, Function)
            and term.name in (STAGE, INTERGREEN)
            and len(term.args) == 2
            and isinstance(term.args[1], int)
            and term.args[1] >= 1
        ):
            return PhaseId(self.ident(term.args[0], fact), term.name, term.args[1])
        raise InstanceError(f"line {fact.line}: expected stage(J,N) or inter(J,N) in {fact}")

    def link(self, term: Term, fact: Fact) -> LinkId:
        if isinstance(term, Function) and term.name == "link" and len(term.args) == 3:
            return LinkId(*(self.ident(a, fact) for a in term.args))
        raise InstanceError(f"line {fact.line}: expected link(J1,ID,J2) in {fact}")


def _single(store: dict, key, value, what: str, fact: Fact) -> None:
    old = store.get(key)
    if old is not None and old != value:
        raise InstanceError(f"line {fact.line}: contradictory {what} for {key}: {old} vs {value}")
    store[key] = value


def parse_instance(
    text: str,
    *,
    decimal: bool = False,
    horizon: Optional[int] = None,
    k: Optional[int] = None,
    bound: Optional[Pcu] = None,
) -> Instance:
    """Build an :class:`Instance` from fact-file text.

    ``horizon``, ``k`` and ``bound`` override the corresponding ``#const``
    directives. Raises :class:`FactSyntaxError` or :class:`InstanceError`.
    """
    facts, consts = parse_facts(text)
    cv = _Converter(decimal)

    constants = {"horizon": DEFAULT_HORIZON, "k": DEFAULT_K, "bound": DEFAULT_BOUND}
    for name, value, line in consts:
        if name not in CONSTANTS:
            log.warning("line %d: ignoring unknown constant %s", line, name)
            continue
        fake = Fact(name, (value,), line)
        constants[name] = cv.pcu(value, fake) if name == "bound" else cv.integer(value, fake)
    for name, value in (("horizon", horizon), ("k", k), ("bound", bound)):
        if value is not None:
            constants[name] = value

    by_pred: dict[str, list[Fact]] = defaultdict(list)
    extras: list[str] = []
    for fact in facts:
        if ARITIES.get(fact.predicate) != len(fact.args):
            log.warning("line %d: unknown predicate %s/%d", fact.line, fact.predicate, len(fact.args))
            extras.append(str(fact))
            continue
        by_pred[fact.predicate].append(fact)

    junction_ids: set[str] = set()
    controllable: set[str] = set()
    for f in by_pred["controllable"]:
        controllable.add(cv.ident(f.args[0], f))
    junction_ids |= controllable

    available: dict[str, set[str]] = defaultdict(set)
    for f in by_pred["available_conf"]:
        available[cv.ident(f.args[0], f)].add(cv.ident(f.args[1], f))
    junction_ids |= set(available)

    phases: dict[str, set[PhaseId]] = defaultdict(set)
    for f in by_pred["status"]:
        j, p = cv.ident(f.args[0], f), cv.phase(f.args[1], f)
        if p.junction != j:
            raise InstanceError(f"line {f.line}: {p} does not belong to junction {j}")
        phases[j].add(p)

    ends: dict[str, PhaseId] = {}
    for f in by_pred["end"]:
        p = cv.phase(f.args[0], f)
        _single(ends, p.junction, p, "end phase", f)
        phases[p.junction].add(p)

    successor: dict[PhaseId, PhaseId] = {}
    for f in by_pred["next"]:
        a, b = cv.phase(f.args[0], f), cv.phase(f.args[1], f)
        if a.junction != b.junction:
            raise InstanceError(f"line {f.line}: next/2 crosses junctions: {f}")
        phases[a.junction] |= {a, b}
        if ends.get(a.junction) == a:
            continue  # wrap-around from the final intergreen is implied
        _single(successor, a, b, "successor", f)

    durations: dict[str, dict[PhaseId, int]] = defaultdict(dict)
    config_junction: dict[str, str] = {}
    for f in by_pred["phase_limit"]:
        p, c, d = cv.phase(f.args[0], f), cv.ident(f.args[1], f), cv.integer(f.args[2], f)
        _single(config_junction, c, p.junction, "junction of configuration", f)
        _single(durations[c], p, d, "phase duration", f)
        phases[p.junction].add(p)

    junction_ids |= set(phases)

    init_phase: dict[str, PhaseId] = {}
    init_elapsed: dict[str, int] = {}
    init_config: dict[str, str] = {}
    init_cycles: dict[str, int] = {}
    per_k: dict[str, int] = {}
    for f in by_pred["active_p"]:
        _time_zero(cv, f)
        p = cv.phase(f.args[1], f)
        if p.junction in init_phase and init_phase[p.junction] != p:
            raise InstanceError(
                f"line {f.line}: two active_p for junction {p.junction} at time 0"
            )
        init_phase[p.junction] = p
    for f in by_pred["active_t"]:
        _time_zero(cv, f)
        _single(init_elapsed, cv.ident(f.args[1], f), cv.integer(f.args[2], f), "active_t", f)
    for f in by_pred["active_c"]:
        _time_zero(cv, f)
        _single(init_config, cv.ident(f.args[1], f), cv.ident(f.args[2], f), "active_c", f)
    for f in by_pred["count_c"]:
        _single(init_cycles, cv.ident(f.args[0], f), cv.integer(f.args[1], f), "count_c", f)
    for f in by_pred["stability"]:
        _single(per_k, cv.ident(f.args[0], f), cv.integer(f.args[1], f), "stability", f)
    junction_ids |= set(init_phase) | set(init_elapsed) | set(init_config)
    junction_ids |= set(init_cycles) | set(per_k)

    if not junction_ids:
        raise InstanceError("no junctions declared")

    junctions = []
    for jid in sorted(junction_ids):
        order = _phase_chain(jid, phases.get(jid, set()), successor, ends.get(jid))
        configs = []
        for cid in sorted(c for c, j in config_junction.items() if j == jid):
            missing = [p for p in order if p not in durations[cid]]
            if missing:
                raise InstanceError(
                    f"configuration {cid} has no phase_limit for {', '.join(map(str, missing))}"
                )
            configs.append(Configuration(cid, jid, tuple((p, durations[cid][p]) for p in order)))
        for what, store in (("active_p", init_phase), ("active_t", init_elapsed), ("active_c", init_config)):
            if jid not in store:
                raise InstanceError(f"junction {jid}: missing {what} fact")
        avail = available.get(jid) or {c.id for c in configs}
        for cid in avail | {init_config[jid]}:
            if cid not in config_junction:
                raise InstanceError(f"junction {jid}: configuration {cid} has no phase_limit facts")
            if config_junction[cid] != jid:
                raise InstanceError(f"configuration {cid} belongs to junction {config_junction[cid]}, not {jid}")
        junctions.append(
            Junction(
                id=jid,
                controllable=jid in controllable,
                configs=tuple(configs),
                available=tuple(sorted(avail)),
                initial=JunctionState(
                    init_phase[jid], init_elapsed[jid], init_config[jid], init_cycles.get(jid, 0)
                ),
                k=per_k.get(jid),
            )
        )

    link_ids: set[LinkId] = set()
    for f in by_pred["link"]:
        link_ids.add(LinkId(*(cv.ident(a, f) for a in f.args)))

    def known_link(term: Term, f: Fact) -> LinkId:
        lid = cv.link(term, f)
        if lid not in link_ids:
            raise InstanceError(f"line {f.line}: undeclared link {lid}")
        return lid

    for pred, attr in (("precedes", "source"), ("follows", "target")):
        for f in by_pred[pred]:
            j, lid = cv.ident(f.args[0], f), known_link(f.args[1], f)
            if getattr(lid, attr) != j:
                raise InstanceError(f"line {f.line}: {f} contradicts {lid}")

    capacity: dict[LinkId, Pcu] = {}
    occ: dict[LinkId, Pcu] = {}
    count: dict[LinkId, Pcu] = {}
    for pred, store in (("capacity", capacity), ("initial_occ", occ), ("initial_count", count)):
        for f in by_pred[pred]:
            _single(store, known_link(f.args[0], f), cv.pcu(f.args[1], f), pred, f)

    rates: dict[tuple[PhaseId, LinkId, LinkId], Pcu] = {}
    for f in by_pred["turnrate"]:
        key = (cv.phase(f.args[0], f), known_link(f.args[1], f), known_link(f.args[2], f))
        _single(rates, key, cv.pcu(f.args[3], f), "turnrate", f)

    targets: dict[str, set[LinkId]] = defaultdict(set)
    for kind in TARGET_KINDS:
        for f in by_pred[kind]:
            targets[kind].add(known_link(f.args[0], f))

    links = [
        Link(
            id=lid,
            capacity=capacity.get(lid),
            initial_occ=occ.get(lid, 0),
            is_goal=lid in count,
            initial_counter=count.get(lid, 0),
        )
        for lid in link_ids
    ]
    return make_instance(
        junctions,
        links,
        rates,
        horizon=constants["horizon"],
        k=constants["k"],
        bound=constants["bound"],
        targets=targets,
        extra_facts=tuple(sorted(set(extras))),
    )


def _time_zero(cv: _Converter, fact: Fact) -> None:
    if cv.integer(fact.args[0], fact) != 0:
        raise InstanceError(f"line {fact.line}: {fact.predicate} is only accepted at time 0")


def _phase_chain(
    jid: str, members: set[PhaseId], successor: dict[PhaseId, PhaseId], end: Optional[PhaseId]
) -> list[PhaseId]:
    if not members:
        raise InstanceError(f"junction {jid}: no phases declared")
    if end is None:
        raise InstanceError(f"junction {jid}: missing end/1 fact")
    targets = {b for a, b in successor.items() if a.junction == jid}
    starts = sorted(members - targets)
    if len(starts) != 1:
        raise InstanceError(
            f"junction {jid}: cannot determine first phase (candidates: "
            f"{', '.join(map(str, starts)) or 'none'})"
        )
    order = [starts[0]]
    while order[-1] in successor:
        nxt = successor[order[-1]]
        if nxt in order:
            raise InstanceError(f"junction {jid}: phase order loops at {nxt}")
        order.append(nxt)
    if set(order) != members:
        stray = ", ".join(map(str, sorted(members - set(order))))
        raise InstanceError(f"junction {jid}: phases not reachable from {order[0]}: {stray}")
    if order[-1] != end:
        raise InstanceError(f"junction {jid}: chain ends at {order[-1]}, but end/1 names {end}")
    return order


def parse_baseline(text: str, instance: Instance, *, decimal: bool = False) -> dict[LinkId, Pcu]:
    """Read ``pddl_solution(L,C)`` facts into a link -> counter map."""
    facts, _ = parse_facts(text)
    cv = _Converter(decimal)
    out: dict[LinkId, Pcu] = {}
    for f in facts:
        if f.predicate != "pddl_solution" or len(f.args) != 2:
            log.warning("line %d: ignoring %s/%d in baseline", f.line, f.predicate, len(f.args))
            continue
        lid = cv.link(f.args[0], f)
        if not instance.has_link(lid):
            raise InstanceError(f"line {f.line}: baseline link {lid} is not in the instance")
        _single(out, lid, cv.pcu(f.args[1], f), "baseline counter", f)
    return out


# --- emission --------------------------------------------------------------

HEADER = "% traffic signal instance (ASP facts, PCU values scaled by 10^5)"


def emit_facts(instance: Instance) -> str:
    """Render ``instance`` as grounder-compatible facts.

    Output is deterministic: the same instance always yields the same bytes.
    """
    lines = [HEADER]
    consts = [
        (name, getattr(instance, name), default)
        for name, default in (("horizon", DEFAULT_HORIZON), ("k", DEFAULT_K), ("bound", DEFAULT_BOUND))
    ]
    for name, value, default in consts:
        if value != default:
            lines.append(f"#const {name}={value}.")

    for j in instance.junctions:
        lines.append("")
        lines.append(f"% junction {j.id}")
        if j.controllable:
            lines.append(f"controllable({j.id}).")
        lines.extend(f"available_conf({j.id},{c})." for c in j.available)
        order = [p for p, _ in j.configs[0].phases] if j.configs else [j.initial.phase]
        lines.extend(f"status({j.id},{p})." for p in order)
        lines.extend(f"next({a},{b})." for a, b in zip(order, order[1:]))
        lines.append(f"end({order[-1]}).")
        for c in j.configs:
            lines.extend(f"phase_limit({p},{c.id},{d})." for p, d in c.phases)
        lines.append(f"active_p(0,{j.initial.phase}).")
        lines.append(f"active_t(0,{j.id},{j.initial.elapsed}).")
        lines.append(f"active_c(0,{j.id},{j.initial.config}).")
        lines.append(f"count_c({j.id},{j.initial.completed_cycles}).")
        if j.k is not None:
            lines.append(f"stability({j.id},{j.k}).")

    junction_ids = {j.id for j in instance.junctions}
    if instance.links:
        lines.append("")
        lines.append("% links")
    for link in instance.links:
        lid = link.id
        lines.append(f"link({lid.source},{lid.label},{lid.target}).")
        if lid.source in junction_ids:
            lines.append(f"precedes({lid.source},{lid}).")
        if lid.target in junction_ids:
            lines.append(f"follows({lid.target},{lid}).")
        if link.capacity is not None:
            lines.append(f"capacity({lid},{link.capacity}).")
        lines.append(f"initial_occ({lid},{link.initial_occ}).")
        if link.is_goal:
            lines.append(f"initial_count({lid},{link.initial_counter}).")

    if len(instance.turn_rates):
        lines.append("")
        lines.append("% turn rates")
    for (stage, a, b), rate in instance.turn_rates:
        lines.append(f"turnrate({stage},{a},{b},{rate}).")

    for kind, links in instance.targets:
        lines.append("")
        lines.extend(f"{kind}({lid})." for lid in links)

    if instance.extra_facts:
        lines.append("")
        lines.append("% passed through unchanged")
        lines.extend(instance.extra_facts)
    return "\n".join(lines) + "\n"


def emit_baseline(counters: dict[LinkId, Pcu]) -> str:
    lines = ["% reference counters at the horizon"]
    lines.extend(f"pddl_solution({lid},{value})." for lid, value in sorted(counters.items()))
    return "\n".join(lines) + "\n"
