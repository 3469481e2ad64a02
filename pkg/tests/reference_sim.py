"""Straightforward re-implementation of the dynamics, used only as a test oracle.

Phases are walked one tick at a time along each configuration's phase list
and flows are recomputed per link from the raw turn-rate entries. Nothing
here imports the simulator or timeline code under test.
"""


def walk(instance, plan):
    """Per tick, per junction: (phase, elapsed, config id)."""
    out = [dict() for _ in range(instance.horizon + 1)]
    for j in instance.junctions:
        configs = {c.id: c for c in j.configs}
        switch = {dp.time: cfg for dp, cfg in plan.for_junction(j.id)}
        config = configs[j.initial.config]
        phase, elapsed = j.initial.phase, j.initial.elapsed
        out[0][j.id] = (phase, elapsed, config.id)
        for t in range(1, instance.horizon + 1):
            order = [p for p, _ in config.phases]
            durations = dict(config.phases)
            if elapsed + 1 < durations[phase]:
                elapsed += 1
            else:
                i = order.index(phase)
                if i + 1 < len(order):
                    phase = order[i + 1]
                else:
                    if t in switch:
                        config = configs[switch.pop(t)]
                    phase = [p for p, _ in config.phases][0]
                elapsed = 0
            out[t][j.id] = (phase, elapsed, config.id)
        assert not switch, f"plan decisions off cycle boundaries: {switch}"
    return out


def run(instance, plan):
    """Occupancy and goal counters (dicts keyed by link id) for every tick."""
    status = walk(instance, plan)
    caps = {l.id: l.capacity for l in instance.links}
    occ = {l.id: l.initial_occ for l in instance.links}
    counter = {l.id: l.initial_counter for l in instance.links if l.is_goal}
    entries = [(s, a, b, r) for (s, a, b), r in instance.turn_rates if s.junction == a.target == b.source]
    touching = {link: [e for e in entries if link in (e[1], e[2])] for link in occ}
    occs, counters = [dict(occ)], [dict(counter)]
    for t in range(1, instance.horizon + 1):
        active = {jid: st[0] for jid, st in status[t].items()}
        new_occ, new_counter = dict(occ), dict(counter)
        for link in occ:
            d_in = d_out = 0
            for stage, a, b, r in touching[link]:
                if active.get(stage.junction) != stage:
                    continue
                if b == link and occ[a] > 0 and (caps[link] is None or occ[link] < caps[link]):
                    d_in += r
                if a == link and occ[link] > 0 and (caps[b] is None or occ[b] < caps[b]):
                    d_out += r
            new_occ[link] = occ[link] + d_in - d_out
            if link in counter:
                new_counter[link] = counter[link] + d_in
        occ, counter = new_occ, new_counter
        occs.append(dict(occ))
        counters.append(dict(counter))
    return occs, counters
