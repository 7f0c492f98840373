"""Layered network graph and weighted-Laplacian machinery.

A network is a connected graph of three node layers: constant-voltage
sources, capacitive storages, and grounded sinks. Edges carry lumped
resistances; switchable edges toggle between conducting (routed) and open,
so the weighted Laplacian of the conducting subgraph is time-varying.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError


class NodeKind(Enum):
    SOURCE = "source"
    STORAGE = "storage"
    SINK = "sink"


class PowerPhase(Enum):
    """Phase of an active packet on an edge: tag bits carry no power."""

    TAG = "tag"
    PAYLOAD = "payload"


_LAYER_RANK = {NodeKind.SOURCE: 0, NodeKind.STORAGE: 1, NodeKind.SINK: 2}


@dataclass
class Node:
    """One network node. Sources and sinks are voltage-clamped and carry
    no capacitance (``capacitance is None``); storages must have C > 0."""

    id: int
    kind: NodeKind
    capacitance: float | None
    voltage: float = 0.0


@dataclass
class Edge:
    """Undirected transmission path with a lumped series resistance.

    ``line_resistance`` already includes the switching devices (and the
    load on sink paths); the conductance of a conducting edge is its
    reciprocal. Non-switchable edges (sink paths) are always routed.
    """

    a: int
    b: int
    line_resistance: float
    switchable: bool
    routed: bool

    @property
    def weight(self) -> float:
        return 1.0 / self.line_resistance


@dataclass
class TopologySpec:
    """Raw topology input: nodes with kinds, edges with bare line resistance
    (before switch/load folding)."""

    nodes: list[tuple[int, NodeKind]]
    edges: list[tuple[int, int, float]]
    name: str = "custom"


@dataclass
class NetworkGraph:
    """Built network with layer bookkeeping.

    Immutable after construction except the per-edge ``routed`` flags,
    which only the simulation engine's step thread mutates.
    """

    nodes: list[Node]
    edges: list[Edge]
    layer_order: np.ndarray
    name: str = "custom"

    # derived index arrays, filled in __post_init__
    source_ids: np.ndarray = field(init=False)
    storage_ids: np.ndarray = field(init=False)
    sink_ids: np.ndarray = field(init=False)
    edge_up: np.ndarray = field(init=False)
    edge_down: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        kinds = [n.kind for n in self.nodes]
        self.source_ids = np.array(
            [n.id for n in self.nodes if n.kind is NodeKind.SOURCE], dtype=int
        )
        self.storage_ids = np.array(
            [n.id for n in self.nodes if n.kind is NodeKind.STORAGE], dtype=int
        )
        self.sink_ids = np.array(
            [n.id for n in self.nodes if n.kind is NodeKind.SINK], dtype=int
        )
        # canonical edge orientation: lower (layer rank, id) is upstream
        up, down = [], []
        for e in self.edges:
            ka = (_LAYER_RANK[kinds[e.a]], e.a)
            kb = (_LAYER_RANK[kinds[e.b]], e.b)
            if ka <= kb:
                up.append(e.a)
                down.append(e.b)
            else:
                up.append(e.b)
                down.append(e.a)
        self.edge_up = np.array(up, dtype=int)
        self.edge_down = np.array(down, dtype=int)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def kind(self, node_id: int) -> NodeKind:
        return self.nodes[node_id].kind

    def capacitances(self) -> np.ndarray:
        """Storage-layer capacitances in storage id order."""
        return np.array(
            [self.nodes[i].capacitance for i in self.storage_ids], dtype=float
        )

    def switchable_ports(self, node_id: int) -> list[int]:
        """Indices of switchable edges at a node, ordered by peer id."""
        ports = []
        for idx, e in enumerate(self.edges):
            if not e.switchable:
                continue
            if e.a == node_id:
                ports.append((e.b, idx))
            elif e.b == node_id:
                ports.append((e.a, idx))
        return [idx for _, idx in sorted(ports)]

    def peer(self, edge_index: int, node_id: int) -> int:
        e = self.edges[edge_index]
        return e.b if e.a == node_id else e.a

    def set_routed(self, edge_index: int, routed: bool) -> None:
        edge = self.edges[edge_index]
        if not edge.switchable and not routed:
            raise ConfigError(f"edge {edge.a}-{edge.b} is not switchable")
        edge.routed = routed

    def nominal_weights(self) -> np.ndarray:
        """Conductance of every edge as if routed in payload phase."""
        return np.array([e.weight for e in self.edges], dtype=float)

    def effective_weights(self, phases=None) -> np.ndarray:
        """Per-edge conductance under the current switch state and ``phases``
        (sequence of PowerPhase or None per edge; None means payload)."""
        w = np.empty(self.n_edges)
        for i, e in enumerate(self.edges):
            phase = None if phases is None else phases[i]
            w[i] = edge_weight(e, phase)
        return w


def edge_weight(edge: Edge, phase: PowerPhase | None = None) -> float:
    """Conductance contributed by one edge.

    Routed switchable edges conduct only during the payload phase of the
    packet occupying them; tag bits leave the path electrically open.
    Non-switchable edges always conduct.
    """
    if not edge.switchable:
        return edge.weight
    if not edge.routed:
        return 0.0
    if phase is PowerPhase.TAG:
        return 0.0
    return edge.weight


@dataclass
class LaplacianBlocks:
    """Weighted Laplacian in layer order with its 3x3 block partition.

    ``full`` has rows/columns permuted to [sources | storages | sinks];
    ``order`` records the node id of each row. ``edge_weights`` keeps the
    per-edge conductances the matrix was assembled from.
    """

    full: np.ndarray
    order: np.ndarray
    n_sources: int
    n_storages: int
    n_sinks: int
    edge_weights: np.ndarray

    def _sl(self, layer: int):
        bounds = [
            0,
            self.n_sources,
            self.n_sources + self.n_storages,
            self.n_sources + self.n_storages + self.n_sinks,
        ]
        return slice(bounds[layer - 1], bounds[layer])

    def block(self, i: int, j: int) -> np.ndarray:
        return self.full[self._sl(i), self._sl(j)]

    @property
    def L11(self):
        return self.block(1, 1)

    @property
    def L12(self):
        return self.block(1, 2)

    @property
    def L13(self):
        return self.block(1, 3)

    @property
    def L21(self):
        return self.block(2, 1)

    @property
    def L22(self):
        return self.block(2, 2)

    @property
    def L23(self):
        return self.block(2, 3)

    @property
    def L31(self):
        return self.block(3, 1)

    @property
    def L32(self):
        return self.block(3, 2)

    @property
    def L33(self):
        return self.block(3, 3)


def weighted_laplacian(graph: NetworkGraph, phases=None) -> LaplacianBlocks:
    """Assemble the weighted Laplacian of the conducting subgraph.

    Entry (i, j) for i != j is minus the effective edge conductance;
    diagonals hold each node's conductance sum. Recomputed per simulation
    step since routing and packet phases vary in time.
    """
    n = graph.n_nodes
    w = graph.effective_weights(phases)
    L = np.zeros((n, n))
    a = np.array([e.a for e in graph.edges], dtype=int)
    b = np.array([e.b for e in graph.edges], dtype=int)
    np.add.at(L, (a, a), w)
    np.add.at(L, (b, b), w)
    np.add.at(L, (a, b), -w)
    np.add.at(L, (b, a), -w)
    order = graph.layer_order
    full = L[np.ix_(order, order)]
    return LaplacianBlocks(
        full=full,
        order=order.copy(),
        n_sources=len(graph.source_ids),
        n_storages=len(graph.storage_ids),
        n_sinks=len(graph.sink_ids),
        edge_weights=w,
    )


def build_graph(
    spec: TopologySpec,
    switch_resistance: float = 1.0,
    load_resistance: float = 50.0,
    capacitance: float = 1e-3,
) -> NetworkGraph:
    """Build a NetworkGraph from a raw topology description.

    Switch and load resistances are folded into each edge at build time:
    paths between routers (source/storage nodes) carry one switching device
    per endpoint; paths to a sink carry one switching device plus the load.
    Sink paths are permanently routed; all other edges start open. Every
    storage node gets the given capacitance.

    Raises ConfigError for duplicate edges, self-loops, unknown node
    references, missing layers, or a disconnected graph.
    """
    n = len(spec.nodes)
    ids = [i for i, _ in spec.nodes]
    if sorted(ids) != list(range(n)):
        raise ConfigError(f"node ids must be dense 0..{n - 1}, got {sorted(ids)}")
    if capacitance <= 0:
        raise ConfigError("storage capacitance must be positive")
    kind_of = dict(spec.nodes)
    for need in NodeKind:
        if not any(k is need for k in kind_of.values()):
            raise ConfigError(f"graph needs at least one {need.value} node")

    nodes = [
        Node(
            id=i,
            kind=kind_of[i],
            capacitance=capacitance if kind_of[i] is NodeKind.STORAGE else None,
        )
        for i in range(n)
    ]

    edges: list[Edge] = []
    seen: set[tuple[int, int]] = set()
    for a, b, r_line in spec.edges:
        if a == b:
            raise ConfigError(f"self-loop at node {a}")
        if a not in kind_of or b not in kind_of:
            raise ConfigError(f"edge {a}-{b} references an unknown node")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise ConfigError(f"duplicate edge {key[0]}-{key[1]}")
        seen.add(key)
        if r_line < 0:
            raise ConfigError(f"edge {a}-{b} has negative line resistance")
        ka, kb = kind_of[a], kind_of[b]
        if ka is NodeKind.SINK and kb is NodeKind.SINK:
            raise ConfigError(f"edge {a}-{b} joins two sinks")
        if ka is NodeKind.SOURCE and kb is NodeKind.SOURCE:
            raise ConfigError(f"edge {a}-{b} joins two sources")
        touches_sink = NodeKind.SINK in (ka, kb)
        if touches_sink:
            r = r_line + switch_resistance + load_resistance
        else:
            r = r_line + 2.0 * switch_resistance
        if r <= 0:
            raise ConfigError(f"edge {a}-{b} has non-positive total resistance")
        edges.append(
            Edge(
                a=a,
                b=b,
                line_resistance=r,
                switchable=not touches_sink,
                routed=touches_sink,
            )
        )

    _check_connected(n, edges)

    order = np.array(
        sorted(range(n), key=lambda i: (_LAYER_RANK[kind_of[i]], i)), dtype=int
    )
    return NetworkGraph(nodes=nodes, edges=edges, layer_order=order, name=spec.name)


def _check_connected(n: int, edges: list[Edge]) -> None:
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        adj[e.a].append(e.b)
        adj[e.b].append(e.a)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise ConfigError(f"graph is disconnected; unreachable nodes {missing}")
