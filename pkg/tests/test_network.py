from __future__ import annotations

import numpy as np
import pytest

from rhgame.errors import StructuralError
from rhgame.network import build_network, enumerate_paths, network_from_paths

from conftest import diamond


def test_paths_sorted_by_length_then_links():
    net = diamond()
    assert net.paths == ((0, 3), (1, 4), (2, 5), (0, 6, 4))
    assert [net.path_nodes(p) for p in range(2)] == [["s", "m1", "t"], ["s", "m2", "t"]]
    assert all(net.endpoints(p) == ("s", "t") for p in range(net.n_paths))


def test_incidence_matches_paths():
    net = diamond()
    assert net.incidence.shape == (7, 4)
    for p, links in enumerate(net.paths):
        assert set(np.flatnonzero(net.incidence[:, p])) == set(links)
    np.testing.assert_array_equal(net.path_len, net.incidence.sum(axis=0))


def test_hop_limit_prunes_long_paths():
    links = [("s", "a"), ("a", "b"), ("b", "t"), ("s", "t")]
    assert enumerate_paths(links, "s", "t", hop_limit=1) == [(3,)]
    assert enumerate_paths(links, "s", "t", hop_limit=3) == [(3,), (0, 1, 2)]


def test_pairs_deduplicated_in_first_seen_order():
    links = [("a", "x"), ("b", "x")]
    net = build_network(["a", "b", "x"], links, [("b", "x"), ("a", "x"), ("b", "x")])
    assert net.paths == ((1,), (0,))
    assert net.paths_between("a", "x") == [1]


@pytest.mark.parametrize(
    "nodes, links",
    [
        (["a", "b"], [("a", "c")]),
        (["a", "b"], [("a", "b"), ("a", "b")]),
    ],
)
def test_bad_links_rejected(nodes, links):
    with pytest.raises(StructuralError):
        build_network(nodes, links, [])


def test_non_adjacent_path_rejected():
    with pytest.raises(StructuralError):
        network_from_paths(["a", "b", "c"], [("a", "b"), ("a", "c")], [(0, 1)])
    with pytest.raises(StructuralError):
        network_from_paths(["a", "b"], [("a", "b")], [(3,)])


def test_link_index_lookup():
    net = diamond()
    assert net.link_index("m1", "m2") == 6
    with pytest.raises(StructuralError):
        net.link_index("t", "s")
