import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qwrg import networks as nw


SMALL = [("ring", 3), ("ring", 6), ("dsg", 0), ("dsg", 2), ("hn3", 2), ("hn3", 5),
         ("mk3", 0), ("mk3", 2), ("mk4", 1), ("mk4", 2)]


@pytest.mark.parametrize("kind,g", SMALL)
def test_port_matching_is_involution(kind, g):
    net = nw.build(kind, g)
    p = net.partner
    assert np.array_equal(p[p], np.arange(net.n_ports))


@pytest.mark.parametrize("kind,g", SMALL)
def test_degree_regular(kind, g):
    net = nw.build(kind, g)
    d = {"ring": 2, "dsg": 3, "hn3": 3, "mk3": 3, "mk4": 4}[kind]
    assert set(net.degree) == {d}


@pytest.mark.parametrize("k", range(1, 9))
def test_ring_counts(k):
    net = nw.build_ring(k)
    assert net.n_nodes == 2 ** k
    assert nw.graph_distance(net, 0, 2 ** (k - 1)) == 2 ** (k - 1)


@pytest.mark.parametrize("g", range(0, 6))
def test_dsg_counts(g):
    assert nw.build_dsg(g).n_nodes == 3 ** (g + 1)


@pytest.mark.parametrize("k", range(2, 9))
def test_hn3_counts(k):
    assert nw.build_hn3(k).n_nodes == 2 ** k


def test_hn3_small_examples():
    net = nw.build_hn3(3)
    long = {tuple(sorted((u, v))) for u, _, v, _ in net.edges
            if u != v and (u - v) % 8 not in (1, 7)}
    assert long == {(1, 3), (5, 7), (2, 6)}
    assert {u for u, _ in net.self_loops} == {0, 4}
    net = nw.build_hn3(2)
    assert {u for u, _ in net.self_loops} == {0, 2}
    assert 3 in net.neighbors(1)


def test_mk_golden_counts():
    g0 = nw.build_mk("mk4", 0)
    assert g0.n_nodes == 2
    assert len([e for e in g0.edges if e[0] != e[2]]) == 1
    dia = nw.build_mk("mk4", 1, motif="diamond", close_anchors=False)
    assert dia.n_nodes == 4
    assert len([e for e in dia.edges if e[0] != e[2]]) == 4
    mk3 = nw.build_mk("mk3", 1, close_anchors=False)
    assert mk3.n_nodes == 6
    assert len([e for e in mk3.edges if e[0] != e[2]]) == 7


def test_distance_examples():
    net = nw.build_ring(3)
    assert nw.graph_distance(net, 0, 4) == 4
    assert nw.graph_distance(net, 5, 5) == 0
    dsg = nw.build_dsg(1)
    a, b, _ = dsg.boundary
    assert nw.graph_distance(dsg, a, b) == int(dsg.distances_from(a)[b])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SMALL), st.data())
def test_distance_symmetric_and_matches_bfs(case, data):
    net = nw.build(*case)
    u = data.draw(st.integers(0, net.n_nodes - 1))
    v = data.draw(st.integers(0, net.n_nodes - 1))
    d = nw.graph_distance(net, u, v)
    assert d == nw.graph_distance(net, v, u)
    assert d == int(net.distances_from(u)[v])
    assert (d == 0) == (u == v)


@pytest.mark.parametrize("g", [1, 2, 3])
def test_dsg_self_similarity(g):
    # contracting every 3-node triangle of generation g gives generation g-1
    net, prev = nw.build_dsg(g), nw.build_dsg(g - 1)
    A = net.adjacency().tocoo()
    C = {tuple(sorted((i // 3, j // 3))) for i, j in zip(A.row, A.col) if i // 3 != j // 3}
    P = prev.adjacency().tocoo()
    assert C == {(int(i), int(j)) for i, j in zip(P.row, P.col) if i < j}


def test_round_trip(tmp_path):
    net = nw.build_dsg(2)
    path = tmp_path / "n.json"
    nw.save_network(net, path)
    back = nw.load_network(path)
    assert back == net
    assert back.to_json() == net.to_json()


@pytest.mark.parametrize("call", [
    lambda: nw.build_ring(0), lambda: nw.build_dsg(-1), lambda: nw.build_hn3(1),
    lambda: nw.build_mk("mk5", 1), lambda: nw.build("torus", 2),
])
def test_rejects_bad_arguments(call):
    with pytest.raises(nw.NetworkError):
        call()


def test_malformed_edge_list():
    d = nw.build_ring(2).to_dict()
    d["edges"][0][3] = d["edges"][1][1]
    d["edges"][0][2] = d["edges"][1][0]
    with pytest.raises(nw.NetworkError):
        nw.Network.from_dict(d)
