"""Synthetic corridors for tests, benchmarks and demos."""

from __future__ import annotations

import math
import random
from typing import Optional, Sequence

from .model import (
    INTERGREEN,
    STAGE,
    Configuration,
    Instance,
    Junction,
    JunctionState,
    Link,
    LinkId,
    PhaseId,
    make_instance,
)
from .pcu import SCALE


def _configs(rng: random.Random, jid: str, n_configs: int, n_stages: int, cycle: int):
    if cycle < 2 * n_stages:
        raise ValueError(f"a {cycle} s cycle cannot hold {n_stages} stages and intergreens")
    longest = min(4, (cycle - n_stages) // n_stages)
    inters = [rng.randint(1, longest) for _ in range(n_stages)]
    green = cycle - sum(inters)
    configs = []
    seen = set()
    splits = math.comb(green - 1, n_stages - 1)
    while len(configs) < n_configs:
        cuts = sorted(rng.sample(range(1, green), n_stages - 1))
        stages = [b - a for a, b in zip([0] + cuts, cuts + [green])]
        if tuple(stages) in seen and len(seen) < splits:
            continue
        seen.add(tuple(stages))
        phases = []
        for s in range(n_stages):
            phases.append((PhaseId(jid, STAGE, s + 1), stages[s]))
            phases.append((PhaseId(jid, INTERGREEN, s + 1), inters[s]))
        configs.append(Configuration(f"{jid}_c{len(configs) + 1}", jid, tuple(phases)))
    return configs


def random_corridor(
    rng: random.Random,
    n_junctions: int = 2,
    n_configs: int = 2,
    horizon: int = 60,
    side_links: int | Sequence[int] = 1,
    n_stages: int = 2,
    cycle_range: tuple[int, int] = (12, 30),
    k: Optional[int] = None,
    goal_fraction: float = 0.5,
    rate_max: int = SCALE,
    scale: int = SCALE,
) -> Instance:
    """A chain ``b_in - j1 - j2 - ... - b_out`` with side roads at each junction.

    Links between consecutive nodes run in both directions; each junction
    also gets ``side_links`` (per junction, if a sequence) pairs of entry/exit links to its own boundary.
    Turn rates connect every incoming to every outgoing link except U-turns,
    and each movement is green in one randomly chosen stage.
    """
    jids = [f"j{i + 1}" for i in range(n_junctions)]
    nodes = ["w"] + jids + ["e"]
    links: list[LinkId] = []
    for a, b in zip(nodes, nodes[1:]):
        links.append(LinkId(a, "f", b))
        links.append(LinkId(b, "r", a))
    sides = [side_links] * n_junctions if isinstance(side_links, int) else list(side_links)
    for jid, n_side in zip(jids, sides):
        for s in range(n_side):
            side = f"{jid}s{s + 1}"
            links.append(LinkId(side, "i", jid))
            links.append(LinkId(jid, "o", side))

    junctions = []
    rates = {}
    for jid in jids:
        n_cfg = n_configs
        cycle = rng.randint(*cycle_range)
        configs = _configs(rng, jid, n_cfg, n_stages, cycle)
        initial = rng.choice(configs)
        phase, duration = rng.choice(initial.phases)
        junctions.append(
            Junction(
                id=jid,
                controllable=rng.random() < 0.85,
                configs=tuple(configs),
                available=tuple(c.id for c in configs),
                initial=JunctionState(phase, rng.randrange(duration), initial.id, rng.randint(0, 4)),
                k=None if k is None else k,
            )
        )
        incoming = [l for l in links if l.target == jid]
        outgoing = [l for l in links if l.source == jid]
        for a in incoming:
            for b in outgoing:
                if a.source == b.target:
                    continue
                stage = PhaseId(jid, STAGE, rng.randint(1, n_stages))
                rates[(stage, a, b)] = rng.randint(0, rate_max)

    link_objs = []
    for lid in links:
        cap = None if rng.random() < 0.25 else rng.randint(2, 40) * scale
        occ = rng.randint(0, cap if cap is not None else 20 * scale)
        goal = rng.random() < goal_fraction
        link_objs.append(
            Link(lid, cap, occ, goal, rng.randint(0, 3) * scale if goal else 0)
        )
    if not any(l.is_goal for l in link_objs):
        first = link_objs[0]
        link_objs[0] = Link(first.id, first.capacity, first.initial_occ, True, 0)
    return make_instance(
        junctions,
        link_objs,
        rates,
        horizon=horizon,
        k=rng.randint(1, 3) if k is None else k,
    )


def full_scale_corridor(seed: int = 0, horizon: int = 900) -> Instance:
    """Six controllable junctions and 34 links, six configurations each."""
    rng = random.Random(seed)
    inst = random_corridor(
        rng,
        n_junctions=6,
        n_configs=6,
        horizon=horizon,
        side_links=(2, 1, 2, 2, 1, 2),
        n_stages=3,
        cycle_range=(60, 90),
        k=4,
        goal_fraction=0.15,
        rate_max=SCALE // 2,
    )
    junctions = [
        Junction(j.id, True, j.configs, j.available, j.initial, j.k) for j in inst.junctions
    ]
    return inst.replace(junctions=tuple(junctions))
