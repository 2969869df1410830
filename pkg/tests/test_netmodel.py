import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ranmaze.netmodel import (DEFAULT_REQUEST_RANGES, CORE_KEYS, ConfigError, InsufficientResource,
                              ResourceLedger, load_topology, sample_requests, scale_ranges)

from conftest import FIXTURE, make_net, net_doc


def test_fixture_has_three_subnets_sharing_core_label(deployment):
    assert len(deployment.subnets) == 3
    labels = {n.nodes[n.gc_node].id for n in deployment.subnets}
    assert labels == {"5GC"}
    assert deployment.global_max_out_degree == max(n.max_out_degree for n in deployment.subnets)


def test_single_node_without_links_rejected():
    # the only DU node is an entrance that cannot reach the core
    doc = {"subnetworks": [{"nodes": [{"id": "x", "cores": 10, "du_capable": True},
                                      {"id": "gc", "cores": 10}],
                            "links": [], "gc_node": "gc", "entrances": ["x"]}]}
    with pytest.raises(ConfigError) as err:
        load_topology(doc)
    assert "links" in err.value.field


def test_ring_out_degree_is_recomputed():
    ring = make_net([(i, 50, True) for i in range(4)],
                    [(0, 1, 1, 1), (1, 2, 1, 1), (2, 3, 1, 1), (3, 0, 1, 1)], 0)
    assert ring.max_out_degree == 2
    doc = net_doc([(i, 50, True) for i in range(4)],
                  [(0, 1, 1, 1), (1, 2, 1, 1), (2, 3, 1, 1), (3, 0, 1, 1)], 0)
    doc["subnetworks"][0]["max_out_degree"] = 7  # never trusted
    assert load_topology(doc).subnets[0].max_out_degree == 2


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["subnetworks"][0]["nodes"][0].pop("cores"), "nodes[0].cores"),
    (lambda d: d["subnetworks"][0]["nodes"][0].update(cores=-3), "nodes[0].cores"),
    (lambda d: d["subnetworks"][0]["links"][0].update(km=0), "links[0].km"),
    (lambda d: d["subnetworks"][0]["links"][0].update(gbps=0), "links[0].gbps"),
    (lambda d: d["subnetworks"][0]["links"][0].update(to="zz"), "links[0].to"),
    (lambda d: d["subnetworks"][0].update(gc_node="zz"), "gc_node"),
    (lambda d: [n.update(du_capable=False) for n in d["subnetworks"][0]["nodes"]], "nodes"),
    (lambda d: d.pop("subnetworks"), "subnetworks"),
])
def test_schema_errors_name_the_field(mutate, field):
    doc = net_doc([("a", 50, True), ("b", 50, False)], [("a", "b", 5, 10)], "b")
    mutate(doc)
    with pytest.raises(ConfigError) as err:
        load_topology(doc)
    assert field in str(err.value)


def test_load_from_path_and_text_agree():
    a = load_topology(FIXTURE)
    b = load_topology(FIXTURE.read_text())
    assert [n.fingerprint() for n in a.subnets] == [n.fingerprint() for n in b.subnets]


def test_undirected_link_shares_one_pool(line3):
    assert len(line3.links) == 2 and len(line3.arcs) == 4
    fwd, back = line3.arc_of[(0, 1)], line3.arc_of[(1, 0)]
    assert line3.arc_link[fwd] == line3.arc_link[back]


def _in_range(req):
    rg = DEFAULT_REQUEST_RANGES[req.service_type]
    for k, c in zip(CORE_KEYS, req.cores):
        assert rg[k][0] <= c <= rg[k][1]
    assert rg["gbps"][0] <= req.gbps <= rg["gbps"][1]
    assert rg["fronthaul_km"][0] <= req.fronthaul_km <= rg["fronthaul_km"][1]
    assert req.fronthaul_km <= req.midhaul_km <= req.e2e_km
    assert rg["e2e_km"][0] <= req.e2e_km <= rg["e2e_km"][1]


def test_request_ranges_hold_over_ten_thousand_samples(deployment):
    net = deployment.subnets[2]
    rng = np.random.default_rng(0)
    n = 0
    while n < 10_000:
        for req in sample_requests(net, rng, None, 3):
            _in_range(req)
            assert req.entrance in net.entrances
            assert req.mgbps % 100 == 0  # tenth-Gbps grid
            n += 1


def test_urllc_and_embb_examples(deployment):
    rng = np.random.default_rng(3)
    seen = set()
    for _ in range(300):
        for req in sample_requests(deployment.subnets[0], rng, None, 3):
            seen.add(req.service_type)
            if req.service_type == "uRLLC":
                assert 13 <= req.fronthaul_km <= 20 and 30 <= req.e2e_km <= 40
                assert 5 <= req.cores[1] <= 10
            if req.service_type == "eMBB":
                assert 15 <= req.cores[1] <= 25 and 4 <= req.gbps <= 7 and req.e2e_km == 100
    assert seen == {"uRLLC", "eMBB", "mMTC"}


def test_sampling_is_deterministic_and_count_bounded(deployment):
    net = deployment.subnets[1]
    assert sample_requests(net, 42) == sample_requests(net, 42)
    counts = {len(sample_requests(net, s)) for s in range(400)}
    assert counts == set(range(net.n_nodes + 1))


def test_scale_ranges_only_touches_fronthaul_and_gbps():
    out = scale_ranges(DEFAULT_REQUEST_RANGES, 1.5, 2.0)
    assert out["eMBB"]["fronthaul_km"] == [22, 38]  # km draws are integers
    assert out["eMBB"]["gbps"] == [8, 14]
    assert out["eMBB"]["midhaul_km"] == DEFAULT_REQUEST_RANGES["eMBB"]["midhaul_km"]


def test_reserve_examples():
    led = ResourceLedger([70], [30_000])
    led.reserve_node(0, 25)
    assert led.compute[0] == 45
    with pytest.raises(InsufficientResource) as err:
        led.reserve_link(0, 31_000)
    assert err.value.deficit == 1000
    before = led.copy()
    led.reserve_link(0, 5000)
    led.release_link(0, 5000)
    assert led == before
    assert led.compute.tobytes() == before.compute.tobytes()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 2), st.integers(0, 40)), max_size=30),
       st.randoms(use_true_random=False))
def test_ledger_conservation(claims, rnd):
    led = ResourceLedger([100, 80, 60], [50, 40, 30])
    start = led.copy()
    done = []
    for is_node, idx, amount in claims:
        try:
            (led.reserve_node if is_node else led.reserve_link)(idx, amount)
        except InsufficientResource:
            continue
        done.append((is_node, idx, amount))
        assert (led.compute >= 0).all() and (led.bandwidth >= 0).all()
    rnd.shuffle(done)
    for is_node, idx, amount in done:
        (led.release_node if is_node else led.release_link)(idx, amount)
        assert (led.compute <= led.capacity).all() and (led.bandwidth <= led.link_capacity).all()
    assert led == start
