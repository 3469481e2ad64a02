from __future__ import annotations

import itertools
import random
from pathlib import Path

import pytest

from signalopt.generate import random_corridor
from signalopt.ingest import parse_instance
from signalopt.timeline import decision_points

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text()


def legal_plan_count(instance) -> int:
    """Count k-legal plans junction by junction (legality is per junction)."""
    total = 1
    for j in instance.junctions:
        points = decision_points(j, instance.horizon)
        k = instance.k_for(j.id)
        count = 0
        for seq in itertools.product(j.available, repeat=len(points)):
            prev, last, ok = j.initial.config, -j.initial.completed_cycles, True
            for dp, c in zip(points, seq):
                if c != prev:
                    if dp.cycle_index - last < k:
                        ok = False
                        break
                    prev, last = c, dp.cycle_index
            count += ok
        total *= count
    return total


def small_instance(seed: int, max_plans: int = 200, min_plans: int = 1, **kw):
    """Random 2-3 junction corridor with at most ``max_plans`` legal plans."""
    rng = random.Random(seed)
    while True:
        inst = random_corridor(
            rng,
            n_junctions=rng.randint(2, 3),
            n_configs=2,
            horizon=rng.randint(20, 120),
            cycle_range=(15, 40),
            **kw,
        )
        n = legal_plan_count(inst)
        if min_plans <= n <= max_plans:
            return inst


@pytest.fixture
def switch48():
    return parse_instance(fixture_text("switch_instance.lp"))


@pytest.fixture
def chain3():
    return parse_instance(fixture_text("chain3.lp"))
