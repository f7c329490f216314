"""Network graph, topology file I/O and k-shortest-path routing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import networkx as nx

DEFAULT_MAX_SPAN_KM = 80.0


class TopologyError(ValueError):
    """Raised for malformed topology files or invalid graph structure."""


@dataclass(frozen=True)
class Route:
    """A simple path through the network.

    ``links`` are indices into the owning topology's link list, and
    ``span_lengths_km`` is the concatenation of the traversed links' span
    layouts, so QoT evaluation needs no further graph access.
    """

    nodes: tuple[int, ...]
    links: tuple[int, ...]
    length_km: float
    span_lengths_km: tuple[float, ...]
    k_index: int = 0

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def dest(self) -> int:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.links)


@dataclass
class NetworkTopology:
    """Undirected weighted graph with a per-link amplifier span layout."""

    n_nodes: int
    link_ends: list[tuple[int, int]]
    link_lengths_km: list[float]
    max_span_km: float = DEFAULT_MAX_SPAN_KM
    spans_km: list[tuple[float, ...]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._validate()
        if not self.spans_km:
            self.spans_km = [
                split_spans(length, self.max_span_km) for length in self.link_lengths_km
            ]
        self._graph = nx.Graph()
        self._graph.add_nodes_from(range(self.n_nodes))
        for idx, ((a, b), length) in enumerate(zip(self.link_ends, self.link_lengths_km)):
            self._graph.add_edge(a, b, length=length, index=idx)
        self._incident: list[tuple[int, ...]] = [() for _ in range(self.n_nodes)]
        incident: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for idx, (a, b) in enumerate(self.link_ends):
            incident[a].append(idx)
            incident[b].append(idx)
        self._incident = [tuple(sorted(l)) for l in incident]

    def _validate(self) -> None:
        if self.n_nodes < 2:
            raise TopologyError("topology needs at least two nodes")
        seen: set[tuple[int, int]] = set()
        for (a, b), length in zip(self.link_ends, self.link_lengths_km):
            if a == b:
                raise TopologyError(f"self-loop at node {a}")
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise TopologyError(f"link ({a},{b}) references unknown node")
            if length <= 0:
                raise TopologyError(f"link ({a},{b}) has non-positive length {length}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise TopologyError(f"duplicate link ({a},{b})")
            seen.add(key)
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        g.add_edges_from((min(a, b), max(a, b)) for a, b in self.link_ends)
        if not nx.is_connected(g):
            raise TopologyError("graph is not connected")

    @property
    def n_links(self) -> int:
        return len(self.link_ends)

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    @property
    def max_degree(self) -> int:
        return max(len(l) for l in self._incident)

    def incident_links(self, node: int) -> tuple[int, ...]:
        return self._incident[node]

    def link_index(self, a: int, b: int) -> int:
        return self._graph[a][b]["index"]

    def adjacent_links(self, route: Route) -> tuple[int, ...]:
        """Links incident to any node of the route but not on the route."""
        on_route = set(route.links)
        adjacent: set[int] = set()
        for node in route.nodes:
            adjacent.update(self._incident[node])
        return tuple(sorted(adjacent - on_route))

    def graph(self) -> nx.Graph:
        return self._graph


def split_spans(length_km: float, max_span_km: float = DEFAULT_MAX_SPAN_KM) -> tuple[float, ...]:
    """Split a link into ceil(length/max_span) equal-length spans."""
    if length_km <= 0:
        raise TopologyError(f"non-positive link length {length_km}")
    n = math.ceil(length_km / max_span_km)
    return tuple([length_km / n] * n)


def load_topology(path, max_span_km: float = DEFAULT_MAX_SPAN_KM) -> NetworkTopology:
    """Parse a topology file.

    Format: optional ``#`` comment lines, a ``nodes <N>`` line, then one
    ``link <a> <b> <length_km>`` line per link (0-based node ids).
    """
    n_nodes = None
    ends: list[tuple[int, int]] = []
    lengths: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "nodes":
                if n_nodes is not None:
                    raise TopologyError(f"{path}:{lineno}: repeated nodes line")
                try:
                    n_nodes = int(parts[1])
                except (IndexError, ValueError) as exc:
                    raise TopologyError(f"{path}:{lineno}: bad nodes line") from exc
            elif parts[0] == "link":
                if n_nodes is None:
                    raise TopologyError(f"{path}:{lineno}: link before nodes line")
                try:
                    a, b = int(parts[1]), int(parts[2])
                    length = float(parts[3])
                except (IndexError, ValueError) as exc:
                    raise TopologyError(f"{path}:{lineno}: bad link line") from exc
                ends.append((a, b))
                lengths.append(length)
            else:
                raise TopologyError(f"{path}:{lineno}: unknown directive {parts[0]!r}")
    if n_nodes is None:
        raise TopologyError(f"{path}: missing nodes line")
    return NetworkTopology(n_nodes, ends, lengths, max_span_km=max_span_km)


def builtin_nsfnet(max_span_km: float = DEFAULT_MAX_SPAN_KM) -> NetworkTopology:
    """The 14-node / 21-link NSFNET instance shipped with the package."""
    ref = resources.files("mbeonsim.data").joinpath("nsfnet.txt")
    with resources.as_file(ref) as path:
        return load_topology(path, max_span_km=max_span_km)


def _route_from_nodes(topo: NetworkTopology, nodes: list[int], k_index: int) -> Route:
    links = tuple(topo.link_index(a, b) for a, b in zip(nodes, nodes[1:]))
    spans: list[float] = []
    for idx in links:
        spans.extend(topo.spans_km[idx])
    length = sum(topo.link_lengths_km[idx] for idx in links)
    return Route(tuple(nodes), links, length, tuple(spans), k_index)


def k_shortest_paths(topo: NetworkTopology, s: int, d: int, k: int) -> list[Route]:
    """K loopless shortest paths by length, ascending.

    Ties are broken by hop count, then by lexicographic node sequence, so
    the result is fully deterministic for a given topology.
    """
    if s == d:
        raise ValueError("source equals destination")
    if not (0 <= s < topo.n_nodes and 0 <= d < topo.n_nodes):
        raise ValueError(f"unknown node in pair ({s},{d})")
    if k < 1:
        raise ValueError("k must be >= 1")

    # shortest_simple_paths yields simple paths in non-decreasing length;
    # keep pulling while paths tie with the current k-th best so the
    # deterministic sort below sees every tying candidate.
    collected: list[tuple[float, int, tuple[int, ...]]] = []
    gen = nx.shortest_simple_paths(topo.graph(), s, d, weight="length")
    for nodes in gen:
        length = sum(
            topo.link_lengths_km[topo.link_index(a, b)] for a, b in zip(nodes, nodes[1:])
        )
        if len(collected) >= k and length > collected[k - 1][0]:
            break
        collected.append((length, len(nodes) - 1, tuple(nodes)))
        collected.sort()
    routes = [
        _route_from_nodes(topo, list(nodes), i)
        for i, (_, _, nodes) in enumerate(collected[:k])
    ]
    return routes
