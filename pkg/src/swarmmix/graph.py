"""Proximity graph construction, connectivity-aware edge weights, and
constrained minimum spanning trees.

The team's communication graph connects every robot pair within the comm
radius.  Each edge gets a weight measuring how little the pair's nominal
motion threatens that link: w = hdot_connectivity + gamma * h_connectivity
evaluated at the nominal controls.  A spanning tree maximizing total weight,
subject to every subgroup's induced subtree being connected, then picks the
least restrictive links to enforce.  The subgroup constraint is folded into
the edge ordering (weight inflation), so a plain greedy MST over the inflated
order solves the constrained problem.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import Explicit, LambdaMode, Lexicographic, RobotState, WorldConfig

__all__ = [
    "Edge",
    "InfeasibleGraphError",
    "CommGraph",
    "SpanningTreeEdges",
    "h_safety",
    "h_connectivity",
    "edge_weight",
    "build_comm_graph",
    "inflate_weights",
    "kruskal_mccst",
    "brute_force_constrained_mst",
    "algebraic_connectivity",
    "is_connected",
    "induced_subgraph_connected",
    "ensure_feasible",
    "dump_edges",
]

Edge = tuple[int, int]


class InfeasibleGraphError(ValueError):
    """The constrained spanning tree problem has no solution on this graph."""


# --- barrier function values ------------------------------------------------

def h_safety(xi: Sequence[float], xj: Sequence[float], safe_radius: float) -> float:
    """Safety margin for a pair: ||xi - xj||^2 - R_s^2 (non-negative inside the safe set)."""
    dx = xi[0] - xj[0]
    dy = xi[1] - xj[1]
    return dx * dx + dy * dy - safe_radius * safe_radius


def h_connectivity(xi: Sequence[float], xj: Sequence[float], comm_radius: float) -> float:
    """Connectivity margin for a pair: R_c^2 - ||xi - xj||^2 (non-negative inside comm range)."""
    dx = xi[0] - xj[0]
    dy = xi[1] - xj[1]
    return comm_radius * comm_radius - (dx * dx + dy * dy)


def edge_weight(xi: Sequence[float], xj: Sequence[float],
                ui: Sequence[float], uj: Sequence[float],
                gamma: float, comm_radius: float) -> float:
    """Link health under the nominal motion.

    w = d/dt[h_connectivity] + gamma * h_connectivity with single-integrator
    velocities u, i.e. -2 (xi - xj) . (ui - uj) + gamma * (R_c^2 - ||xi - xj||^2).
    Larger is healthier; the constrained MST maximizes total w.
    """
    dx = xi[0] - xj[0]
    dy = xi[1] - xj[1]
    du = ui[0] - uj[0]
    dv = ui[1] - uj[1]
    hdot = -2.0 * (dx * du + dy * dv)
    return hdot + gamma * h_connectivity(xi, xj, comm_radius)


# --- graph types ------------------------------------------------------------

@dataclass(frozen=True)
class CommGraph:
    """Undirected proximity graph with weighted, subgroup-flagged edges.

    ``edges`` are canonical (i < j) and sorted; ``inflated_key`` holds the
    comparator keys produced by :func:`inflate_weights` (smaller key = more
    preferred by the tree builder).  ``subgroups`` maps node id -> subgroup id.
    """

    n: int
    edges: tuple[Edge, ...]
    weight: Mapping[Edge, float]
    intra: Mapping[Edge, bool]
    subgroups: tuple[int, ...]
    inflated_key: Mapping[Edge, tuple] = None  # type: ignore[assignment]
    subgroup_first: bool = False


@dataclass(frozen=True)
class SpanningTreeEdges:
    n: int
    edges: frozenset[Edge]


def build_comm_graph(robots: Sequence[RobotState], config: WorldConfig,
                     u_nominal: Sequence[Sequence[float]]) -> CommGraph:
    """Connect each pair within comm_radius and weight edges at the nominal controls.

    The returned graph already carries inflated comparator keys for
    ``config.lambda_mode``.
    """
    n = len(robots)
    if len(u_nominal) != n:
        raise ValueError(f"expected {n} nominal controls, got {len(u_nominal)}")
    subgroups = tuple(r.subgroup for r in robots)
    edges: list[Edge] = []
    weight: dict[Edge, float] = {}
    intra: dict[Edge, bool] = {}
    rc = config.comm_radius
    for i in range(n):
        xi = robots[i].position
        for j in range(i + 1, n):
            xj = robots[j].position
            if h_connectivity(xi, xj, rc) >= 0.0:
                e = (i, j)
                edges.append(e)
                weight[e] = edge_weight(xi, xj, u_nominal[i], u_nominal[j],
                                        config.gamma, rc)
                intra[e] = subgroups[i] == subgroups[j]
    graph = CommGraph(n=n, edges=tuple(edges), weight=weight, intra=intra,
                      subgroups=subgroups, inflated_key=None)
    return inflate_weights(graph, config.lambda_mode)


def inflate_weights(graph: CommGraph, mode: LambdaMode) -> CommGraph:
    """Attach comparator keys encoding subgroup preference.

    Lexicographic: key = (0 if intra else 1, -w, i, j) — every intra-subgroup
    edge precedes every inter-subgroup edge regardless of weight signs.
    Explicit(lam): key = (-lam*w if intra else -w, i, j) — finite inflation.
    Keys are unique (the (i, j) suffix breaks ties), so the greedy tree and
    the protocol's merge order are deterministic.  ``subgroup_first`` is set
    on the result exactly when the ordering guarantees that subgroups finish
    merging internally before any edge crosses between them (the
    lexicographic mode); the distributed builder uses it to hold back
    cross-subgroup link proposals until both sides have consolidated.
    """
    if isinstance(mode, Lexicographic):
        keys = {e: (0 if graph.intra[e] else 1, -graph.weight[e], e[0], e[1])
                for e in graph.edges}
        return replace(graph, inflated_key=keys, subgroup_first=True)
    if isinstance(mode, Explicit):
        keys = {e: (-mode.lam * graph.weight[e] if graph.intra[e] else -graph.weight[e],
                    e[0], e[1])
                for e in graph.edges}
        return replace(graph, inflated_key=keys, subgroup_first=False)
    raise TypeError(f"unknown inflation mode {mode!r}")


# --- connectivity queries ---------------------------------------------------

def _adjacency_lists(n: int, edges: Iterable[Edge]) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return adj


def _component(start: int, adj: Sequence[Sequence[int]], allowed: Optional[set[int]] = None) -> set[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if (allowed is None or v in allowed) and v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return seen


def is_connected(graph: CommGraph) -> bool:
    if graph.n == 0:
        return True
    adj = _adjacency_lists(graph.n, graph.edges)
    return len(_component(0, adj)) == graph.n


def induced_subgraph_connected(graph: CommGraph, subgroup: int) -> bool:
    """True when the subgroup's members are connected using intra-subgroup edges only."""
    members = {i for i, g in enumerate(graph.subgroups) if g == subgroup}
    if len(members) <= 1:
        return True
    intra_edges = [e for e in graph.edges if graph.intra[e] and e[0] in members]
    adj = _adjacency_lists(graph.n, intra_edges)
    start = min(members)
    return members <= _component(start, adj, allowed=members)


def ensure_feasible(graph: CommGraph) -> None:
    """Raise InfeasibleGraphError naming the culprit unless a constrained tree exists."""
    if not is_connected(graph):
        raise InfeasibleGraphError("graph disconnected")
    for g in sorted(set(graph.subgroups)):
        if not induced_subgraph_connected(graph, g):
            raise InfeasibleGraphError(f"subgroup {g} induced graph disconnected")


# --- spanning trees ---------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def kruskal_mccst(graph: CommGraph) -> SpanningTreeEdges:
    """Greedy spanning tree over the inflated edge order.

    Under the lexicographic mode this maximizes total plain weight among all
    spanning trees whose subgroup-induced subgraphs are connected (the intra
    class is exhausted first, which yields a maximum-weight spanning forest
    inside each subgroup, then inter edges join the contracted subgroups).
    Raises :class:`InfeasibleGraphError` naming the culprit when the graph or
    a subgroup's intra subgraph is disconnected.
    """
    if graph.inflated_key is None:
        raise ValueError("graph has no inflated keys; run inflate_weights first")
    ensure_feasible(graph)
    if graph.n <= 1:
        return SpanningTreeEdges(n=graph.n, edges=frozenset())
    uf = _UnionFind(graph.n)
    chosen: set[Edge] = set()
    for e in sorted(graph.edges, key=graph.inflated_key.__getitem__):
        if uf.union(*e):
            chosen.add(e)
            if len(chosen) == graph.n - 1:
                break
    return SpanningTreeEdges(n=graph.n, edges=frozenset(chosen))


def brute_force_constrained_mst(graph: CommGraph,
                                subgroups: Optional[Sequence[int]] = None) -> SpanningTreeEdges:
    """Enumerate every spanning tree and return the feasible one maximizing total weight.

    Independent oracle for :func:`kruskal_mccst`: candidate edge subsets are
    checked by BFS (no union-find), feasibility means every subgroup's induced
    subtree is connected, and ties in total weight (impossible for generic
    weights) fall back to the smallest sorted comparator-key sequence.
    Exponential; intended for n <= 9.
    """
    if subgroups is None:
        subgroups = graph.subgroups
    if graph.n > 9:
        raise ValueError("brute force oracle is limited to n <= 9")
    ensure_feasible(graph)
    if graph.n <= 1:
        return SpanningTreeEdges(n=graph.n, edges=frozenset())

    groups: dict[int, set[int]] = {}
    for node, g in enumerate(subgroups):
        groups.setdefault(g, set()).add(node)

    best: Optional[tuple] = None
    best_edges: Optional[frozenset[Edge]] = None
    for combo in itertools.combinations(graph.edges, graph.n - 1):
        adj = _adjacency_lists(graph.n, combo)
        if len(_component(0, adj)) != graph.n:
            continue
        feasible = True
        for members in groups.values():
            if len(members) <= 1:
                continue
            sub_edges = [e for e in combo if e[0] in members and e[1] in members]
            sub_adj = _adjacency_lists(graph.n, sub_edges)
            if not members <= _component(min(members), sub_adj, allowed=members):
                feasible = False
                break
        if not feasible:
            continue
        total = sum(graph.weight[e] for e in combo)
        tie_break = (tuple(sorted(graph.inflated_key[e] for e in combo))
                     if graph.inflated_key is not None else tuple(sorted(combo)))
        score = (-total, tie_break)
        if best is None or score < best:
            best = score
            best_edges = frozenset(combo)
    if best_edges is None:
        raise InfeasibleGraphError("no feasible spanning tree")
    return SpanningTreeEdges(n=graph.n, edges=best_edges)


# --- spectral connectivity --------------------------------------------------

def algebraic_connectivity(graph: CommGraph) -> float:
    """Second-smallest eigenvalue of the unweighted graph Laplacian.

    Positive iff the graph is connected; graphs here are at most a few
    hundred vertices, so a dense symmetric eigensolver is fine.
    """
    if graph.n < 2:
        raise ValueError("algebraic connectivity needs at least 2 nodes")
    lap = np.zeros((graph.n, graph.n))
    for i, j in graph.edges:
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
    eigvals = np.linalg.eigvalsh(lap)
    return float(eigvals[1])


# --- serialization ----------------------------------------------------------

def dump_edges(graph: CommGraph, edges: Optional[Iterable[Edge]] = None) -> str:
    """Edge list as text lines ``i j w intra_flag`` (deterministic order)."""
    chosen = sorted(edges) if edges is not None else list(graph.edges)
    lines = []
    for e in chosen:
        lines.append(f"{e[0]} {e[1]} {graph.weight[e]:.17g} {int(graph.intra[e])}")
    return "\n".join(lines) + ("\n" if lines else "")
