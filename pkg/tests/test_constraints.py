import numpy as np
import pytest

from ranmaze.constraints import (CONSTRAINT_ORDER, IncompleteRecord, Placement, check_bandwidth,
                                 check_compute, check_du_capability, check_end_to_end,
                                 check_fronthaul, check_midhaul, commit, feasible, stage_mgbps,
                                 steps_needed)
from ranmaze.netmodel import Request, ResourceLedger, load_topology

from conftest import make_net
from naive_validator import all_records, naive_verdict, random_fixture


def req(stype="uRLLC", entrance=0, cores=(10, 10, 10, 10), gbps=2.0, yf=20, ym=40, ye=40):
    return Request(0, stype, entrance, cores, int(round(gbps * 1000)), float(yf), float(ym),
                   float(ye))


def test_fronthaul_examples(line3):
    at_entrance = Placement(req(yf=1), [0], [0, 0, 0, 0])
    assert check_fronthaul(at_entrance, line3) == (True, 1.0, 0.0)
    two_hops = Placement(req(yf=15), [0, 1, 2], [2, 2, 2, 2])
    res = check_fronthaul(two_hops, line3)
    assert not res.ok and res.slack == -3
    one = make_net([("a", 50, True), ("b", 50, True)], [("a", "b", 13, 10)], "b")
    assert check_fronthaul(Placement(req(yf=13), [0, 1], [1, 1, 1, 1]), one) == (True, 0.0, 13.0)
    with pytest.raises(IncompleteRecord):
        check_fronthaul(Placement(req()), line3)


def test_midhaul_examples():
    net = make_net([("a", 50, True), ("b", 50, True), ("c", 50, True)],
                   [("a", "b", 20, 10), ("b", "c", 15, 10)], "c")
    assert check_midhaul(Placement(req(ym=30), [0], [0, 0, 0, 0]), net).ok
    assert not check_midhaul(Placement(req(ym=30), [0, 1, 2], [0, 0, 2, 2]), net).ok
    assert check_midhaul(Placement(req(ym=30), [0, 1, 2], [0, 0, 1, 2]), net).slack == 10
    net30 = make_net([("a", 50, True), ("b", 50, True)], [("a", "b", 30, 10)], "b")
    assert check_midhaul(Placement(req(ym=30), [0, 1], [0, 0, 1, 1]), net30).ok


def test_end_to_end_examples(line3):
    embb = Placement(req("eMBB", ye=100), [0, 1], [0, 0, 0, 1])
    assert not check_end_to_end(embb, line3).ok  # core is node 2
    net = make_net([("a", 50, True), ("b", 50, True)], [("a", "b", 38, 10)], "b")
    assert check_end_to_end(Placement(req(ye=40), [0, 1], [0, 0, 0, 1]), net).ok
    solo = make_net([("g", 100, True), ("x", 10, False)], [("g", "x", 1, 1)], "g", ["g"])
    assert check_end_to_end(Placement(req("eMBB", ye=100), [0], [0, 0, 0, 0]), solo).ok


def test_compute_examples():
    led = ResourceLedger([70], [])
    assert check_compute(led, Placement(req(cores=(25, 25, 0, 0)), [0], [0, 0, 0, 0])).ok
    assert not check_compute(led, Placement(req(cores=(25,) * 4), [0], [0, 0, 0, 0])).ok


def test_bandwidth_examples():
    r = req(gbps=5.0)
    assert [stage_mgbps(r, s, 0.2) for s in range(4)] == [5000, 1000, 1000, 200]
    net = make_net([("a", 100, True), ("b", 100, True)], [("a", "b", 1, 30)], "b")
    full = Placement(req(gbps=30.0), [0, 1], [1, 1, 1, 1])
    assert check_bandwidth(ResourceLedger.full(net), full, net, 0.2).ok
    net7 = make_net([("a", 100, True), ("b", 100, True)], [("a", "b", 1, 7)], "b")
    led = ResourceLedger.full(net7)
    first = Placement(req(gbps=4.0), [0, 1], [1, 1, 1, 1])
    assert feasible(first, led, net7, 0.2).ok
    commit(led, first, net7, 0.2)
    assert not check_bandwidth(led, Placement(req(gbps=4.0), [0, 1], [1, 1, 1, 1]), net7, 0.2).ok


def test_du_capability_examples(line3):
    net = make_net([("a", 100, True), ("b", 100, False)], [("a", "b", 1, 10)], "b")
    assert check_du_capability(Placement(req(), [0, 1], [0, 1, 1, 1]), net).ok
    assert not check_du_capability(Placement(req(), [0, 1], [1, 1, 1, 1]), net).ok


def test_feasible_reports_first_violation(line3):
    ok = Placement(req(), [0], [0, 0, 0, 0])
    assert feasible(ok, ResourceLedger.full(line3), line3, 0.2) == (True, None)
    c1_c4 = Placement(req(yf=5, cores=(80, 1, 1, 1)), [0, 1], [1, 1, 1, 1])
    assert feasible(c1_c4, ResourceLedger.full(line3), line3, 0.2).violated == "C1"
    with pytest.raises(IncompleteRecord):
        feasible(Placement(req(), [0], [0, 0]), ResourceLedger.full(line3), line3, 0.2)


def test_revisits_consume_bandwidth_per_traversal():
    net = make_net([("a", 100, True), ("b", 100, True)], [("a", "b", 1, 5)], "b")
    rec = Placement(req(gbps=3.0), [0, 1, 0, 1], [3, 3, 3, 3])
    assert not check_bandwidth(ResourceLedger.full(net), rec, net, 0.2).ok
    assert steps_needed(rec) == 3 + 4 - 1


def test_matches_naive_validator_on_random_fixtures():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(15):
        sub = random_fixture(rng)
        net = load_topology({"subnetworks": [sub]}).subnets[0]
        led = ResourceLedger.full(net)
        led.compute -= rng.integers(0, net.capacity // 2 + 1)
        led.bandwidth -= (rng.integers(0, 3, size=len(led.bandwidth)) * 500).clip(
            max=led.bandwidth)
        stype = ["uRLLC", "eMBB", "mMTC"][int(rng.integers(3))]
        r = req(stype, int(rng.integers(4)), tuple(int(c) for c in rng.integers(5, 30, 4)),
                float(rng.integers(5, 40)) / 10, *sorted(rng.integers(3, 30, 3).tolist()))
        for route, place_at in all_records(net.neighbors, r.entrance, 2):
            got = feasible(Placement(r, route, place_at), led, net, 0.2)
            want = naive_verdict(sub, r, route, place_at, led.compute, led.bandwidth, 0.2)
            assert tuple(got) == want, (route, place_at)
            checked += 1
    assert checked > 1000


def test_latency_slack_never_grows_when_route_extends(line3):
    r = req(yf=50, ym=50, ye=50)
    short = Placement(r, [0, 1], [1, 1, 1, 1])
    longer = Placement(r, [0, 1, 2], [2, 2, 2, 2])
    for fn in (check_fronthaul, check_midhaul, check_end_to_end):
        assert fn(longer, line3).slack <= fn(short, line3).slack


def test_latency_checks_ignore_the_ledger(line3):
    rec = Placement(req(), [0, 1], [0, 1, 1, 1])
    empty = ResourceLedger.full(line3)
    empty.compute[:] = 0
    empty.bandwidth[:] = 0
    assert feasible(rec, empty, line3, 0.2).violated == "C4"
    for fn in (check_fronthaul, check_midhaul, check_end_to_end):
        assert fn(rec, line3).ok


def test_constraint_order_constant():
    assert CONSTRAINT_ORDER == ("C1", "C2", "C3", "C4", "C5", "DU")
