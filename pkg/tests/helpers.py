from __future__ import annotations

import random
from fractions import Fraction

from tsnkit import topologies
from tsnkit.network import Flow, Link, Network, Node, NodeKind, route_all
from tsnkit.workload import GenParams, generate


def direct_link(rate=100) -> Network:
    """Two end-points joined by one full-duplex link."""
    return Network.build(
        [Node("A", NodeKind.END_POINT), Node("B", NodeKind.END_POINT)],
        [Link("A", "B", Fraction(rate))],
    )


def flow(fid, size, priority, *, src="A", dst="B", period=1000, deadline=None, pclass=None) -> Flow:
    period = Fraction(period)
    deadline = period if deadline is None else Fraction(deadline)
    return Flow(fid, src, dst, period, deadline, size, priority, pclass)


def random_scenario(seed: int, period_range=(200, 1500), max_flows=15, max_priorities=4):
    """Small seeded scenario: at most 6 nodes, 100 Mbit/s links."""
    rnd = random.Random(seed)
    net = rnd.choice([
        topologies.star(5), topologies.star(4), topologies.line(2, 2),
        topologies.line(3, 1), topologies.line(1, 3),
    ])
    n = rnd.randint(3, max_flows)
    flows = generate(net, GenParams(n, seed=seed, period_range=period_range, deadline_range=(300, 3000)))
    p = rnd.randint(1, max_priorities)
    flows = [f.with_priority(rnd.randrange(p)) for f in flows]
    return net, flows, route_all(net, flows)


def safety_check(seed: int) -> tuple[int, int, list[str]]:
    """Cross-validate one random scenario at levels 0, 1, 2 and full.

    Returns (flows checked, flows excluded, violation descriptions).  Levels
    above p - 1 do not exist for the scenario and are skipped.
    """
    from tsnkit.network import PreemptionConfig, distinct_priorities
    from tsnkit.simulator import SimConfig
    from tsnkit.synthesis import valid_configs
    from tsnkit.validate import cross_validate

    net, flows, routes = random_scenario(seed)
    p = len(distinct_priorities(flows))
    rnd = random.Random(seed * 7 + 1)
    checked, excluded, bad = 0, 0, []
    for m in (0, 1, 2, "full"):
        if m == "full":
            config = PreemptionConfig.fully_preemptive(p)
        elif m <= p - 1:
            config = rnd.choice(valid_configs(p, m).configs)
        else:
            continue
        for phases in ("zero", "random"):
            report = cross_validate(net, flows, routes, config, SimConfig(seed=seed, phases=phases))
            for fm in report.flows.values():
                checked += 1
                excluded += fm.wctt is None
                if fm.violated:
                    bad.append(f"seed {seed} m={m} {config.entries} {phases} {fm.flow_id}: "
                               f"{fm.mwctt} > {fm.wctt}")
    return checked, excluded, bad
