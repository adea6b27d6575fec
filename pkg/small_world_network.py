"""
Static small-world topology the agents live on, plus the graph diagnostics
used to confirm it has small-world character.

Generation is driven by a caller-supplied numpy Generator so that a network is
fully determined by (spec, seed).
"""

import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from simulation_errors import ParameterError

WATTS_STROGATZ = "watts_strogatz"
ERDOS_RENYI = "erdos_renyi"
GRAPH_MODELS = (WATTS_STROGATZ, ERDOS_RENYI)


@dataclass(frozen=True)
class SmallWorldSpec:
    n: int
    k: int = 10
    beta: float = 0.05
    model: str = WATTS_STROGATZ

    def validate(self):
        if self.model not in GRAPH_MODELS:
            raise ParameterError(f"graph model must be one of {GRAPH_MODELS}, got {self.model!r}", field="graph_model")
        if self.n < 1:
            raise ParameterError(f"network needs at least one node, got n={self.n}", field="n")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"beta must be within [0, 1], got {self.beta}", field="beta")
        if self.model == WATTS_STROGATZ:
            if self.k % 2 != 0:
                raise ParameterError(f"mean degree k must be even, got k={self.k}", field="mean_degree")
            if not 2 <= self.k < self.n:
                raise ParameterError(f"mean degree must satisfy 2 <= k < n, got k={self.k}, n={self.n}", field="mean_degree")


@dataclass(frozen=True)
class Network:
    """Undirected simple graph over dense node ids 0..node_count-1.

    ``adjacency[i]`` is the ascending tuple of neighbours of node i.
    """

    node_count: int
    adjacency: tuple
    rewired_edges: int = field(default=0, compare=False)

    @classmethod
    def from_edges(cls, node_count, edges, rewired_edges=0):
        neighbours = [set() for _ in range(node_count)]
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ParameterError(f"self-loop on node {i}")
            if not (0 <= i < node_count and 0 <= j < node_count):
                raise ParameterError(f"edge ({i}, {j}) outside node range 0..{node_count - 1}")
            neighbours[i].add(j)
            neighbours[j].add(i)
        adjacency = tuple(tuple(sorted(n)) for n in neighbours)
        return cls(node_count=node_count, adjacency=adjacency, rewired_edges=rewired_edges)

    @classmethod
    def from_networkx(cls, graph, node_count=None):
        node_count = graph.number_of_nodes() if node_count is None else node_count
        return cls.from_edges(node_count, graph.edges())

    def degree(self, node):
        return len(self.adjacency[node])

    def degrees(self):
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @property
    def edge_count(self):
        return sum(len(a) for a in self.adjacency) // 2

    def edges(self):
        """Edges as (i, j) pairs with i < j, sorted."""
        return [(i, j) for i, nbrs in enumerate(self.adjacency) for j in nbrs if i < j]

    def to_networkx(self):
        graph = nx.Graph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(self.edges())
        return graph


def _ring_lattice(n, k):
    neighbours = [set() for _ in range(n)]
    for u in range(n):
        for offset in range(1, k // 2 + 1):
            v = (u + offset) % n
            neighbours[u].add(v)
            neighbours[v].add(u)
    return neighbours


def generate_small_world(spec, rng):
    """Build the agent network for ``spec`` using ``rng`` (numpy Generator).

    Watts-Strogatz: ring lattice of degree k, then each lattice edge (u, u+j)
    is rewired with probability beta by replacing its far endpoint with a
    uniform node that is neither u nor already linked to u. A rewire that
    finds no valid target within n draws keeps the original edge.
    """
    spec.validate()
    if spec.model == ERDOS_RENYI:
        graph = nx.gnp_random_graph(spec.n, spec.beta, seed=int(rng.integers(2**32)))
        return Network.from_networkx(graph, node_count=spec.n)

    n, k = spec.n, spec.k
    neighbours = _ring_lattice(n, k)
    rewire = rng.random((k // 2, n)) < spec.beta
    rewired = 0
    for j_index, u in zip(*np.nonzero(rewire)):
        u = int(u)
        v = (u + int(j_index) + 1) % n
        for _ in range(n):
            w = int(rng.integers(n))
            if w != u and w not in neighbours[u]:
                break
        else:
            continue
        neighbours[u].discard(v)
        neighbours[v].discard(u)
        neighbours[u].add(w)
        neighbours[w].add(u)
        rewired += 1

    adjacency = tuple(tuple(sorted(nbrs)) for nbrs in neighbours)
    logging.debug(f"Generated small-world network n={n} k={k} beta={spec.beta}: {rewired} edges rewired")
    return Network(node_count=n, adjacency=adjacency, rewired_edges=rewired)


def clustering_coefficient(net):
    # nodes of degree < 2 count as zero
    if net.node_count == 0:
        return 0.0
    return float(nx.average_clustering(net.to_networkx()))


def largest_component(net):
    if net.node_count == 0:
        return set()
    return max(nx.connected_components(net.to_networkx()), key=len)


def mean_path_length(net):
    """Mean BFS shortest-path length over the largest connected component."""
    if net.node_count == 0:
        raise ParameterError("mean path length of an empty graph is undefined")
    graph = net.to_networkx()
    component = graph.subgraph(largest_component(net))
    if component.number_of_nodes() < 2:
        return 0.0
    return float(nx.average_shortest_path_length(component))


def graph_statistics(net):
    degrees = net.degrees()
    return {
        "nodes": net.node_count,
        "edges": net.edge_count,
        "mean_degree": float(degrees.mean()) if net.node_count else 0.0,
        "clustering_coefficient": clustering_coefficient(net),
        "mean_path_length": mean_path_length(net),
        "largest_component_size": len(largest_component(net)),
        "rewired_edges": net.rewired_edges,
    }


def write_edge_list(net, path):
    with open(path, "w") as f:
        for i, j in net.edges():
            f.write(f"{i} {j}\n")


def read_edge_list(path, node_count=None):
    edges = []
    with open(path, "r") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParameterError(f"line {line_number}: expected 'i j', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
    if node_count is None:
        node_count = 1 + max((max(e) for e in edges), default=-1)
    return Network.from_edges(node_count, edges)
