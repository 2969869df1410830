import os
from pathlib import Path

import numpy as np
import pytest

from ranmaze.netmodel import load_topology

FIXTURE = Path(__file__).resolve().parents[1] / "src" / "ranmaze" / "data" / "three_subnets.yaml"


def net_doc(nodes, links, gc, entrances=None):
    """Single sub-network document. nodes: (id, cores, du); links: (a, b, km, gbps)."""
    sub = {
        "nodes": [{"id": i, "cores": c, "du_capable": du} for i, c, du in nodes],
        "links": [{"from": a, "to": b, "km": km, "gbps": g} for a, b, km, g in links],
        "gc_node": gc,
    }
    if entrances is not None:
        sub["entrances"] = entrances
    return {"subnetworks": [sub], "seed": 0}


def make_net(nodes, links, gc, entrances=None):
    return load_topology(net_doc(nodes, links, gc, entrances)).subnets[0]


@pytest.fixture(scope="session")
def deployment():
    return load_topology(FIXTURE)


@pytest.fixture
def line3():
    """0 -(10 km)- 1 -(8 km)- 2, node 2 is the core."""
    return make_net([("a", 70, True), ("b", 70, True), ("c", 100, False)],
                    [("a", "b", 10, 30), ("b", "c", 8, 30)], "c", ["a"])
