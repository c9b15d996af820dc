import json
import os

import numpy as np

from maropf.grid.network import Bus, IbdgSpec, Line, RadialNetwork, ScenarioHorizon
from maropf.grid.per_unit import to_physical


def pv(id, bus, p_max=0.3, dispatchable=True):
    return IbdgSpec(
        id=id,
        bus=bus,
        dispatchable=dispatchable,
        p_max=p_max,
        q_min=-0.45 * p_max,
        q_max=0.45 * p_max,
        s_max=1.1 * p_max,
        mu_min=0.9,
    )


def _network(edges, loads, r=0.01, x=0.02, i_max=4.0, ibdgs=(), shunts=None, name="toy"):
    n_bus = len(edges) + 1
    shunts = shunts if shunts is not None else [(0.0, 0.0)] * n_bus
    buses = [Bus(0, name="grid")]
    for k in range(1, n_bus):
        p, q = loads[k - 1]
        g, b = shunts[k]
        buses.append(Bus(k, load_p=p, load_q=q, shunt_g=g, shunt_b=b, v_threshold=0.0))
    lines = [Line(to, up, r, x, i_max) for up, to in edges]
    return RadialNetwork(buses, lines, ibdgs, v0=1.0, name=name)


def two_bus(load=(0.5, 0.2), r=0.01, x=0.02, shunt=(0.0, 0.0), ibdgs=()):
    return _network(
        [(0, 1)], [load], r, x, ibdgs=ibdgs, shunts=[(0.0, 0.0), shunt], name="two_bus"
    )


def three_bus_chain(ibdgs=(), shunts=None):
    return _network(
        [(0, 1), (1, 2)],
        [(0.1, 0.05), (0.2, 0.1)],
        ibdgs=ibdgs,
        shunts=shunts,
        name="three_bus_chain",
    )


def three_bus_star(ibdgs=()):
    return _network([(0, 1), (0, 2)], [(0.1, 0.05), (0.2, 0.1)], ibdgs=ibdgs, name="three_bus_star")


def five_bus_chain(droop=True, shunts=None):
    ibdgs = [pv("pv2", 2, dispatchable=droop), pv("pv3", 3, 0.1, dispatchable=False)]
    if droop:
        ibdgs.append(pv("pv4", 4))
    return _network(
        [(0, 1), (1, 2), (2, 3), (3, 4)],
        [(0.1, 0.05), (0.1, 0.04), (0.05, 0.02), (0.1, 0.05)],
        ibdgs=ibdgs,
        shunts=shunts,
        name="five_bus_chain",
    )


def flat_horizon(network, steps=2, load=1.0, availability=0.8):
    return ScenarioHorizon.flat(network, steps=steps, load=load, availability=availability)


def random_small(rng, n_bus, droop=False):
    """
    Random chain or star with up to three buses, small injections and shunts;
    with `droop`, a dispatchable unit on every non-slack bus.
    """
    if n_bus == 2:
        edges = [(0, 1)]
    elif rng.random() < 0.5:
        edges = [(0, 1), (1, 2)]
    else:
        edges = [(0, 1), (0, 2)]
    loads = [(rng.uniform(-0.3, 0.5), rng.uniform(-0.2, 0.3)) for _ in edges]
    shunts = [(0.0, 0.0)] + [(rng.uniform(0, 0.05), rng.uniform(-0.05, 0.05)) for _ in edges]
    ibdgs = [pv(f"pv{k}", k) for k in range(1, n_bus)] if droop else ()
    net = _network(edges, loads, ibdgs=ibdgs, shunts=shunts, name="random")
    for line in net.lines:
        line.r = rng.uniform(0.005, 0.03)
        line.x = rng.uniform(0.005, 0.03)
    return net


def write_case(network, directory):
    """Stores a toy network as a case file the loader reads back."""
    path = os.path.join(directory, f"{network.name}.json")
    with open(path, "w") as f:
        json.dump(to_physical(network), f)
    return path
