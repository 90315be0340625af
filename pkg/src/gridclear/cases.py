"""Small hand-checkable market instances used in tests and walkthroughs.

``ex_b``     six-node network with two zone configurations (non-monotone redispatch)
``ex_2n``    two nodes joined by one congested line
``ex_uc``    one node, one hour, one unit with a fixed cost
``ex_uc3``   ``ex_uc`` plus an expensive peaker without fixed cost
"""
from __future__ import annotations

from .grid import Line, Network, Node, ZoneMap
from .market import DemandSeries, GeneratorOffer, MarketInstance


def ex_b(margin=0.0):
    nodes = [Node(f"v{i}") for i in range(1, 7)]
    lines = [Line("v3", "v5", 1.0, 50.0), Line("v4", "v5", 1.0, 100.0)]
    net = Network(nodes, lines, margin=margin)
    sellers = [
        GeneratorOffer("s1", "v1", 0.0, 200.0, 1, 1.0, 0.0),
        GeneratorOffer("s2", "v2", 0.0, 200.0, 1, 3.0, 0.0),
        GeneratorOffer("s3", "v3", 0.0, 200.0, 1, 2.0, 0.0),
        GeneratorOffer("s4", "v4", 0.0, 200.0, 1, 40.0, 0.0),
    ]
    buyers = [DemandSeries("b1", "v5", (100.0,))]
    return MarketInstance(net, buyers, sellers, (0,), zones=ex_b_zones(2), name="EX-B")


def ex_b_zones(k):
    if k == 2:
        groups = {"Z1": ["v1", "v2", "v3", "v4"], "Z2": ["v5", "v6"]}
    elif k == 3:
        groups = {"Z1": ["v2", "v4", "v5"], "Z2": ["v1", "v3"], "Z3": ["v6"]}
    else:
        raise ValueError("EX-B defines 2- and 3-zone configurations only")
    order = [f"v{i}" for i in range(1, 7)]
    mapping = {n: z for z, members in groups.items() for n in members}
    return ZoneMap({n: mapping[n] for n in order})


def ex_2n(limit=50.0, margin=0.0):
    net = Network([Node("A"), Node("B")], [Line("A", "B", 10.0, limit)], margin=margin)
    sellers = [
        GeneratorOffer("GA", "A", 0.0, 100.0, 1, 10.0, 0.0),
        GeneratorOffer("GB", "B", 0.0, 100.0, 1, 30.0, 0.0),
    ]
    buyers = [DemandSeries("load", "B", (80.0,))]
    return MarketInstance(net, buyers, sellers, (0,), name="EX-2N")


def ex_uc(with_peaker=False):
    net = Network([Node("N")], [], margin=0.0)
    sellers = [
        GeneratorOffer("G1", "N", 0.0, 50.0, 1, 10.0, 0.0),
        GeneratorOffer("G2", "N", 0.0, 50.0, 1, 20.0, 100.0),
    ]
    if with_peaker:
        sellers.append(GeneratorOffer("G3", "N", 0.0, 50.0, 1, 35.0, 0.0))
    buyers = [DemandSeries("load", "N", (60.0,))]
    return MarketInstance(net, buyers, sellers, (0,), name="EX-UC3" if with_peaker else "EX-UC")


def ex_uc3():
    return ex_uc(with_peaker=True)
