"""
Direct embedding of a run into a filtered simplicial complex and a hypergraph.
Vertices are log identifiers that enter when first seen; edges enter with the
event that links them.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Hashable

from topolog.errors import EmptyRun
from topolog.log_model import EventType, LogEvent, NodeKey, Run

logger = logging.getLogger(__name__)


class EdgePolicy(str, Enum):
    """How an event's identifiers are linked by 1-simplices."""
    SEMANTIC_PAIRS = "semantic_pairs"
    CLIQUE_PER_EVENT = "clique_per_event"


# Attribute pairs linked by an edge under SEMANTIC_PAIRS, as indices into
# LogEvent.attribute_keys()
_SEMANTIC_PAIRS = {
    EventType.PROCESS_CREATE: ((0, 1), (1, 2)),          # (parent, child), (child, image)
    EventType.PROCESS_TERMINATE: (),
    EventType.FILE_CREATE: ((0, 1),),                    # (process, file)
    EventType.NETWORK_CONNECT: ((0, 1), (0, 3), (1, 2), (3, 4)),
}


@dataclass(frozen=True)
class Simplex:
    vertices: tuple[int, ...]
    filtration_time: float

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1

    def sort_key(self) -> tuple:
        return (self.filtration_time, self.dim, self.vertices)


@dataclass(frozen=True)
class FilteredComplex:
    """
    Simplices of dimension 0-2 with entry times.

    ``nodes[i]`` labels vertex ``i``: NodeKeys for log complexes, point indices
    for Vietoris-Rips complexes. ``simplices`` is sorted by
    (filtration_time, dim, vertices).
    """
    nodes: tuple[Hashable, ...]
    simplices: tuple[Simplex, ...]

    @property
    def max_dim(self) -> int:
        return max((s.dim for s in self.simplices), default=-1)

    @property
    def max_filtration_value(self) -> float:
        return max((s.filtration_time for s in self.simplices), default=0.0)

    def simplices_of_dim(self, dim: int) -> list[Simplex]:
        return [s for s in self.simplices if s.dim == dim]

    @classmethod
    def from_times(cls, nodes, times: dict) -> "FilteredComplex":
        """
        Build a complex from a {vertex tuple: time} map, sorting simplices.

        Args:
            nodes: Vertex labels
            times: Map from sorted vertex tuples to filtration times
        """
        simplices = sorted(
            (Simplex(tuple(v), float(t)) for v, t in times.items()),
            key=Simplex.sort_key,
        )
        return cls(tuple(nodes), tuple(simplices))


@dataclass(frozen=True)
class Hypergraph:
    nodes: tuple[NodeKey, ...]
    hyperedges: tuple[frozenset, ...]


def event_pairs(event: LogEvent, policy: EdgePolicy) -> list[tuple[NodeKey, NodeKey]]:
    """
    NodeKey pairs an event links under a policy; self-pairs are dropped.

    Args:
        event: Log event
        policy: Edge policy

    Returns:
        List of (NodeKey, NodeKey) pairs in table order
    """
    if policy is EdgePolicy.CLIQUE_PER_EVENT:
        return list(combinations(event.node_keys(), 2))
    raw = event.attribute_keys()
    return [(raw[a], raw[b]) for a, b in _SEMANTIC_PAIRS[event.event_type] if raw[a] != raw[b]]


class _NodeIndex:
    """First-appearance vertex numbering shared by both builders."""

    def __init__(self):
        self.index: dict[NodeKey, int] = {}
        self.nodes: list[NodeKey] = []
        self.first_seen: list[float] = []

    def add(self, key: NodeKey, t: float) -> int:
        i = self.index.get(key)
        if i is None:
            i = len(self.nodes)
            self.index[key] = i
            self.nodes.append(key)
            self.first_seen.append(t)
        return i


def build_complex(
    run: Run,
    policy: EdgePolicy = EdgePolicy.SEMANTIC_PAIRS,
    induced_2simplices: bool = False,
) -> FilteredComplex:
    """
    Embed a run into a filtered simplicial complex.

    Vertices enter at the first event mentioning them, edges at the first
    event linking their endpoints. With ``induced_2simplices`` every triangle
    of the final 1-skeleton enters at the latest of its three edge times.

    Args:
        run: Construction-filtered run
        policy: Edge policy
        induced_2simplices: Whether to add induced 2-simplices

    Returns:
        FilteredComplex satisfying face closure and face monotonicity

    Raises:
        EmptyRun: If the run has no events
    """
    if not run.events:
        raise EmptyRun(f"run '{run.run_id}' has no events")

    index = _NodeIndex()
    edge_times: dict[tuple[int, int], float] = {}

    for event in run.events:
        t = event.timestamp
        for key in event.node_keys():
            index.add(key, t)
        for a, b in event_pairs(event, policy):
            edge = tuple(sorted((index.index[a], index.index[b])))
            if edge not in edge_times or t < edge_times[edge]:
                edge_times[edge] = t

    times: dict[tuple, float] = {(i,): t for i, t in enumerate(index.first_seen)}
    times.update(edge_times)

    if induced_2simplices:
        times.update(induced_triangles(edge_times))

    built = FilteredComplex.from_times(index.nodes, times)
    logger.debug(
        "Run %s: %d vertices, %d edges, %d triangles",
        run.run_id, len(index.nodes), len(edge_times), len(times) - len(index.nodes) - len(edge_times),
    )
    return built


def induced_triangles(edge_times: dict[tuple[int, int], float]) -> dict[tuple, float]:
    """Triangles of a 1-skeleton, each entering at the latest of its edge times."""
    neighbours: dict[int, set[int]] = {}
    for u, v in edge_times:
        neighbours.setdefault(u, set()).add(v)
        neighbours.setdefault(v, set()).add(u)

    triangles = {}
    for (u, v), t_uv in edge_times.items():
        for w in neighbours[u] & neighbours[v]:
            if w > v:
                triangles[(u, v, w)] = max(t_uv, edge_times[(u, w)], edge_times[(v, w)])
    return triangles


def build_hypergraph(run: Run) -> Hypergraph:
    """
    Embed a run into a hypergraph with one hyperedge per log entry.

    Args:
        run: Construction-filtered run

    Returns:
        Hypergraph whose hyperedges are the distinct node sets of the events,
        in first-seen order

    Raises:
        EmptyRun: If the run has no events
    """
    if not run.events:
        raise EmptyRun(f"run '{run.run_id}' has no events")

    index = _NodeIndex()
    seen: set[frozenset] = set()
    hyperedges: list[frozenset] = []

    for event in run.events:
        edge = frozenset(index.add(key, event.timestamp) for key in event.node_keys())
        if edge not in seen:
            seen.add(edge)
            hyperedges.append(edge)

    return Hypergraph(tuple(index.nodes), tuple(hyperedges))


def complex_to_dict(built: FilteredComplex) -> dict:
    """
    JSON-ready form of a complex: node table plus simplex list.

    Returns:
        {"nodes": [{index, kind, value}], "simplices": [{vertices, time}]}
    """
    nodes = []
    for i, node in enumerate(built.nodes):
        if isinstance(node, NodeKey):
            nodes.append({"index": i, "kind": node.kind.value, "value": node.value})
        else:
            nodes.append({"index": i, "kind": None, "value": str(node)})
    return {
        "nodes": nodes,
        "simplices": [
            {"vertices": list(s.vertices), "time": s.filtration_time}
            for s in built.simplices
        ],
    }
