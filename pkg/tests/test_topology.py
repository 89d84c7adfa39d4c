import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_dmpc import topology as tp


def empty(n):
    return tp.DirectedGraph(np.zeros((n, n), dtype=int), np.zeros(n, dtype=int))


def test_pf_information_matrix():
    expected = np.eye(5) - np.eye(5, k=-1)
    np.testing.assert_array_equal(tp.information_matrix(tp.pf(5)), expected)


def test_lpf_information_matrix():
    expected = np.diag([1, 2, 2, 2, 2]) - np.eye(5, k=-1)
    np.testing.assert_array_equal(tp.information_matrix(tp.lpf(5)), expected)


def test_empty_graph_information_matrix_is_zero():
    assert not tp.information_matrix(empty(4)).any()


def test_neighbor_sets():
    assert tp.in_neighbors(tp.pf(5), 3) == {2}
    assert tp.in_neighbors(empty(5), 2) == set()
    assert tp.in_neighbors(tp.pf_failure(5), 3) == set()
    assert tp.out_neighbors(tp.pf(5), 3) == {4}
    with pytest.raises(tp.TopologyError):
        tp.in_neighbors(tp.pf(5), 6)


def test_union():
    assert tp.union_graph([tp.pf(5), tp.pf(5)]) == tp.pf(5)
    u = tp.union_graph([tp.pf_failure(5), tp.lpf_failure(5)])
    assert all(u.adjacency[i, i - 1] for i in range(1, 5))
    assert u.leader_links[0] == 1
    with pytest.raises(tp.TopologyError):
        tp.union_graph([])
    with pytest.raises(tp.TopologyError):
        tp.union_graph([tp.pf(3), tp.pf(4)])


def test_spanning_tree():
    assert tp.has_leader_spanning_tree(tp.pf(5))
    assert not tp.has_leader_spanning_tree(tp.DirectedGraph(tp.pf(5).adjacency, np.zeros(5, dtype=int)))
    assert tp.has_leader_spanning_tree(tp.lpf_failure(5))
    # PF-failure alone cuts followers 3..5 off the leader
    assert tp.reachable_from_leader(tp.pf_failure(5)) == {1, 2}
    tp.standard_topologies(5).check_spanning_tree()


def test_failure_graphs():
    lf = tp.lpf_failure(5)
    np.testing.assert_array_equal(lf.leader_links, [1, 1, 1, 0, 0])
    np.testing.assert_array_equal(lf.adjacency, tp.lpf(5).adjacency)
    assert tp.pf_failure(5).adjacency.sum() == 3


def test_invariants_rejected():
    with pytest.raises(tp.TopologyError, match="self-loops"):
        tp.DirectedGraph(np.eye(2, dtype=int), [0, 0])
    with pytest.raises(tp.TopologyError):
        tp.DirectedGraph([[0, 2], [0, 0]], [1, 0])
    with pytest.raises(tp.TopologyError):
        tp.DirectedGraph([[0, 1], [0, 0]], [1, 0, 0])
    with pytest.raises(tp.TopologyError):
        tp.builtin("ring", 5)
    with pytest.raises(tp.TopologyError):
        tp.standard_topologies(5).mode(5)


def test_topology_set_union_and_modes():
    ts = tp.standard_topologies(5)
    assert len(ts) == 4 and ts.mode(3) == tp.pf(5)
    assert ts.union == tp.lpf(5)


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 7))
    adj = np.array(draw(st.lists(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                                 min_size=n, max_size=n)))
    np.fill_diagonal(adj, 0)
    lead = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    return tp.DirectedGraph(adj, lead)


@settings(max_examples=100, deadline=None)
@given(graphs())
def test_information_matrix_properties(g):
    m = tp.information_matrix(g)
    # off-diagonal row sums cancel the Laplacian diagonal
    np.testing.assert_array_equal(m.sum(axis=1), g.leader_links)
    assert (m[~np.eye(g.n_followers, dtype=bool)] <= 0).all()


@settings(max_examples=100, deadline=None)
@given(graphs())
def test_spanning_tree_matches_matrix_power_reachability(g):
    n = g.n_followers
    # independent check: leader reaches i iff (I + A)^n W 1 has a nonzero entry i
    reach = np.linalg.matrix_power(np.eye(n, dtype=np.int64) + g.adjacency, n) @ g.leader_links
    assert tp.has_leader_spanning_tree(g) == bool((reach > 0).all())
