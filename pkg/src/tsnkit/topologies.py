"""Small topologies used for examples and tests.

The line and star builders are generic.  ``quad_star`` and
``automotive_line`` are approximate reconstructions of topologies that are
only available as figures; they keep the flavour (switch count, end-points
per switch) but their wiring is not ground truth.
"""

from __future__ import annotations

from fractions import Fraction

from .network import Link, Network, Node, NodeKind


def _net(switches, end_points, links, rate) -> Network:
    nodes = [Node(s, NodeKind.SWITCH) for s in switches]
    nodes += [Node(e, NodeKind.END_POINT) for e in end_points]
    return Network.build(nodes, [Link(a, b, Fraction(rate)) for a, b in links])


def line(n_switches: int, eps_per_switch: int = 1, rate=100) -> Network:
    """Switches in a chain, each with its own end-points."""
    sws = [f"SW{i + 1}" for i in range(n_switches)]
    eps, links = [], []
    for i, sw in enumerate(sws):
        if i:
            links.append((sws[i - 1], sw))
        for j in range(eps_per_switch):
            ep = f"EP{i + 1}_{j + 1}"
            eps.append(ep)
            links.append((ep, sw))
    return _net(sws, eps, links, rate)


def star(n_end_points: int, rate=100) -> Network:
    """One switch with every end-point attached to it."""
    eps = [f"EP{i + 1}" for i in range(n_end_points)]
    return _net(["SW1"], eps, [(e, "SW1") for e in eps], rate)


def quad_star(eps_per_switch: int = 3, rate=100) -> Network:
    """Reconstruction: four edge switches hung off one core switch."""
    core = "SW0"
    sws = [core] + [f"SW{i}" for i in range(1, 5)]
    eps, links = [], []
    for sw in sws[1:]:
        links.append((core, sw))
        for j in range(eps_per_switch):
            ep = f"EP{sw[2:]}_{j + 1}"
            eps.append(ep)
            links.append((ep, sw))
    return _net(sws, eps, links, rate)


def automotive_line(rate=100) -> Network:
    """Reconstruction: three switches in a row with two end-points each."""
    return line(3, 2, rate)
