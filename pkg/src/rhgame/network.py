"""Directed network, offline path enumeration and the link-path incidence matrix."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import StructuralError

Node = Hashable


@dataclass(frozen=True)
class NetworkModel:
    """Graph plus the global path set used by the routing game.

    Attributes:
        nodes: node identifiers.
        links: directed links as ``(u, v)`` pairs; a link's index is its
            position in this tuple.
        paths: each path is a tuple of link indices, in traversal order.
        incidence: ``(n_links, n_paths)`` 0/1 matrix, 1 iff link on path.
        path_len: number of links per path.
    """

    nodes: tuple[Node, ...]
    links: tuple[tuple[Node, Node], ...]
    paths: tuple[tuple[int, ...], ...]
    incidence: np.ndarray = field(repr=False)
    path_len: np.ndarray = field(repr=False)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def path_nodes(self, p: int) -> list[Node]:
        links = self.paths[p]
        return [self.links[links[0]][0]] + [self.links[l][1] for l in links]

    def endpoints(self, p: int) -> tuple[Node, Node]:
        links = self.paths[p]
        return self.links[links[0]][0], self.links[links[-1]][1]

    def paths_between(self, source: Node, sink: Node) -> list[int]:
        return [p for p in range(self.n_paths) if self.endpoints(p) == (source, sink)]

    def link_index(self, u: Node, v: Node) -> int:
        try:
            return self.links.index((u, v))
        except ValueError:
            raise StructuralError(f"no link {u!r} -> {v!r}") from None

    def validate(self) -> None:
        """Check path contiguity and incidence consistency; raise on mismatch."""
        n_l, n_p = self.n_links, self.n_paths
        if self.incidence.shape != (n_l, n_p):
            raise StructuralError(f"incidence shape {self.incidence.shape} != ({n_l}, {n_p})")
        for p, links in enumerate(self.paths):
            if not links:
                raise StructuralError(f"path {p} is empty")
            for l in links:
                if not 0 <= l < n_l:
                    raise StructuralError(f"path {p} uses unknown link {l}")
            for a, b in zip(links, links[1:]):
                if self.links[a][1] != self.links[b][0]:
                    raise StructuralError(f"path {p}: links {a} and {b} are not adjacent")
            column = np.zeros(n_l)
            column[list(links)] = 1.0
            if not np.array_equal(self.incidence[:, p], column):
                raise StructuralError(f"incidence column {p} does not match path")
            if self.path_len[p] != len(links):
                raise StructuralError(f"path_len[{p}] != {len(links)}")


def enumerate_paths(
    links: Sequence[tuple[Node, Node]], source: Node, sink: Node, hop_limit: int = 6
) -> list[tuple[int, ...]]:
    """All simple directed paths ``source -> sink`` with at most ``hop_limit`` links.

    Paths come back as link-index tuples sorted by (hop count, link indices),
    so the ordering does not depend on networkx's traversal order.
    """
    graph = nx.DiGraph()
    graph.add_edges_from(links)
    if source not in graph or sink not in graph or source == sink:
        return []
    index = {link: k for k, link in enumerate(links)}
    found = []
    for node_path in nx.all_simple_paths(graph, source, sink, cutoff=hop_limit):
        found.append(tuple(index[(a, b)] for a, b in zip(node_path, node_path[1:])))
    return sorted(found, key=lambda ps: (len(ps), ps))


def build_network(
    nodes: Iterable[Node],
    links: Iterable[tuple[Node, Node]],
    pairs: Iterable[tuple[Node, Node]],
    hop_limit: int = 6,
) -> NetworkModel:
    """Build a :class:`NetworkModel` whose path set covers every (source, sink) pair.

    Pairs are processed in first-seen order, so path indices are stable for a
    given input.
    """
    nodes = tuple(nodes)
    links = tuple((u, v) for u, v in links)
    known = set(nodes)
    for u, v in links:
        if u not in known or v not in known:
            raise StructuralError(f"link ({u!r}, {v!r}) references an unknown node")
    if len(set(links)) != len(links):
        raise StructuralError("duplicate link")

    paths: list[tuple[int, ...]] = []
    seen_pairs = []
    for pair in pairs:
        if pair in seen_pairs:
            continue
        seen_pairs.append(pair)
        paths.extend(enumerate_paths(links, pair[0], pair[1], hop_limit))

    return network_from_paths(nodes, links, paths)


def network_from_paths(
    nodes: Iterable[Node], links: Iterable[tuple[Node, Node]], paths: Iterable[Sequence[int]]
) -> NetworkModel:
    """Build a :class:`NetworkModel` from an explicit path set (link-index tuples)."""
    nodes = tuple(nodes)
    links = tuple((u, v) for u, v in links)
    paths = tuple(tuple(int(l) for l in ps) for ps in paths)
    incidence = np.zeros((len(links), len(paths)))
    for p, ps in enumerate(paths):
        if any(not 0 <= l < len(links) for l in ps):
            raise StructuralError(f"path {p} references a missing link")
        incidence[list(ps), p] = 1.0
    path_len = np.array([len(ps) for ps in paths], dtype=np.int64)
    net = NetworkModel(nodes, links, paths, incidence, path_len)
    net.validate()
    return net
