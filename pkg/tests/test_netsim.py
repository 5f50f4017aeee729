import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boros import netsim
from boros.netsim import (Embedding, HubOverlay, InfeasibleRatio, NetsimError, RoutingStuck,
                          Topology, budget, evaluate, gen_topology, hub_count, load_workload,
                          overlay_hubs, pair_distances, route_embedding, route_shortest)


def path(n: int) -> Topology:
    return Topology(n, tuple((i, i + 1) for i in range(n - 1)), 0)


def brute_force(t: Topology, overlay: HubOverlay | None, src: int, dst: int) -> int:
    """BFS over the graph with every hub group materialised as a clique."""
    adj = [set(a) for a in t.adjacency()]
    if overlay is not None:
        for u, v in overlay.extra_edges:
            adj[u].add(v)
            adj[v].add(u)
        for g in overlay.groups():
            for x in g:
                adj[x].update(y for y in g if y != x)
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist[dst]


# -- topology ----------------------------------------------------------------


def test_two_nodes_one_edge():
    assert gen_topology(2, 0.5, 1).edges == ((0, 1),)


def test_generated_graph_has_the_requested_size():
    t = gen_topology(200, 4, 3)
    assert len(t.edges) == 800 and len(set(t.edges)) == 800 and t.connected()
    assert all(u < v for u, v in t.edges)
    assert gen_topology(200, 4, 3) == t and gen_topology(200, 4, 4) != t


@pytest.mark.parametrize("n,ratio", [(1, 1), (10, 0.5), (5, 3)])
def test_infeasible_ratios(n, ratio):
    with pytest.raises(InfeasibleRatio):
        gen_topology(n, ratio, 0)


# -- overlays ----------------------------------------------------------------


def test_hub_counts():
    assert (budget(200, 0.05), hub_count(200, 0.05, 200)) == (10, 1)
    assert hub_count(5000, 0.10, 200) == 3
    assert (budget(10, 0.01), hub_count(10, 0.01, 200)) == (1, 1)
    assert budget(100, 0) == 0


def test_overlays_use_equal_budgets():
    t = gen_topology(300, 4, 1)
    pn, ph, ch = (overlay_hubs(t, kind, 0.1, 12, 1) for kind in netsim.KINDS)
    assert len(pn.extra_edges) == 30 and not set(pn.extra_edges) & set(t.edges)
    assert sorted(len(h) for h in ph.members) == [10, 10, 10]
    assert len({x for h in ph.members for x in h}) == 30
    assert ph.hub_count == ch.hub_count == 3
    assert all(e in set(t.edges) for h in ch.members for e in h)
    with pytest.raises(NetsimError):
        overlay_hubs(t, "xx", 0.1, 12, 1)


# -- shortest paths ----------------------------------------------------------


def test_path_without_hubs():
    assert route_shortest(path(3), None, 0, 2) == 2


def test_payment_hub_shortcut():
    assert route_shortest(path(3), HubOverlay("ph", 0.5, 2, ((0, 2),)), 0, 2) == 1


def test_channel_hub_joins_member_endpoints():
    ov = HubOverlay("ch", 0.4, 2, (((0, 1), (3, 4)),))
    t = path(5)
    # one hub traversal is one hop, as for payment hubs
    assert route_shortest(t, ov, 0, 4) == 1
    assert route_shortest(t, ov, 1, 3) == 1
    assert route_shortest(t, ov, 0, 2) == 2
    assert route_shortest(t, ov, 2, 4) == 2  # node 2 is not a member endpoint


def test_same_endpoint_is_rejected():
    with pytest.raises(NetsimError):
        route_shortest(path(3), None, 1, 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(netsim.KINDS), st.floats(0.02, 0.3))
def test_distances_match_brute_force_and_only_shrink(seed, kind, alpha):
    t = gen_topology(60, 2, seed)
    ov = overlay_hubs(t, kind, alpha, 5, seed)
    rng = np.random.default_rng(seed)
    pairs = netsim.sample_pairs(60, 40, rng)
    with_hubs = pair_distances(t, ov, pairs)
    without = pair_distances(t, None, pairs)
    assert (with_hubs <= without).all()
    for (s, d), got in zip(pairs, with_hubs):
        assert got == brute_force(t, ov, int(s), int(d))


# -- embedding routing -------------------------------------------------------


def test_adjacent_nodes_route_in_one_hop():
    assert route_embedding(path(6), None, 2, 3) == 1


def test_tree_routes_follow_the_unique_path():
    t = gen_topology(40, (40 - 1) / 40, 5)
    emb = Embedding(t)
    for s, d in [(0, 39), (5, 17), (12, 3)]:
        assert emb.route(s, d) == brute_force(t, None, s, d)


def test_embedding_never_beats_shortest_paths():
    t = gen_topology(50, 3, 8)
    rng = np.random.default_rng(8)
    pairs = netsim.sample_pairs(50, 1000, rng)
    shortest = pair_distances(t, None, pairs)
    emb = Embedding(t)
    for (s, d), best in zip(pairs, shortest):
        try:
            assert emb.route(int(s), int(d)) >= best
        except RoutingStuck:
            pass


def test_embedding_needs_a_connected_graph():
    with pytest.raises(NetsimError):
        Embedding(Topology(3, ((0, 1),), 0))


# -- evaluation --------------------------------------------------------------


def test_zero_alpha_gives_identical_arms():
    res = evaluate(100, 3, 0.0, 10, seeds=[1, 2], pairs=500)
    assert res.mean[("pn", "sp")] == res.mean[("ph", "sp")] == res.mean[("ch", "sp")]


def test_deltas_are_consistent_with_averages():
    res = evaluate(200, 4, 0.05, 200, seeds=[0, 1], pairs=2000, routers=("sp", "em"))
    pn, ph, ch = (res.mean[(k, "sp")] for k in netsim.KINDS)
    assert math.isclose(res.delta2(), 100 * (pn - ch) / pn, rel_tol=1e-3)
    assert math.isclose(res.delta1(), 100 * (ph - ch) / ph, rel_tol=1e-3)
    assert ch < pn
    for kind in netsim.KINDS:
        assert res.mean[(kind, "em")] >= res.mean[(kind, "sp")]
    header = netsim.results_csv([res]).splitlines()[0].split(",")
    assert {"PN-FW", "PH-FW", "CH-FW", "Δ1-FW", "Δ2-FW", "PN-SM"} <= set(header)


def test_workload_file(tmp_path):
    f = tmp_path / "pairs.csv"
    f.write_text("src,dst\n0,5\n3,3\n7,99\n2,1\n")
    assert load_workload(str(f), 10).tolist() == [[0, 5], [2, 1]]
    res = evaluate(10, 2, 0.2, 5, seeds=[0], workload=load_workload(str(f), 10))
    assert res.pairs == 2
    f.write_text("src,dst\n")
    with pytest.raises(NetsimError):
        load_workload(str(f), 10)
