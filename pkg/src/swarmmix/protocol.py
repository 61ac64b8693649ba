"""Distributed construction of the constrained spanning tree by message passing.

Fragments grow Boruvka-style: every node starts by linking with its best
incident edge (smallest comparator key), after which quiescence-delimited
rounds repeat: each fragment member asks its best outgoing neighbor for
fragment info (GetInfo/InfoReply), the candidates flow leaderward as an
aggregated convergecast along the fragment tree (Report, one frame per
member per round), the leader picks the fragment-wide minimum and orders the
owning node to link (ConnectCmd, Connect), and the merged fragments flood
their combined adjacency (Update).
Leaders are the minimum id in a fragment; every decision in a round is a
function of the round-start snapshot, so the final tree is independent of
message interleaving as long as each link delivers in FIFO order.  All
accepted edges are minimum outgoing edges of some fragment, hence the union
is exactly the greedy tree over the (unique) comparator keys.

When the edge ordering is subgroup-first (intra-subgroup edges strictly
precede cross-subgroup ones), a fragment whose best outgoing edge crosses
between subgroups holds that proposal back until the target's subgroup has
finished merging internally — the InfoReply already reveals the target
fragment's membership, so readiness is a local test.  The fragment simply
idles for the round and re-proposes on a later snapshot; a Connect that does
get sent is therefore always accepted, and every cross-subgroup link joins
two fragments that each contain their endpoint's whole subgroup.  Held-back
fragments cannot deadlock: while any subgroup is still split, each of its
pieces has an intra-subgroup outgoing edge (induced subgraphs are connected)
whose key beats every crossing edge, so intra merges proceed unimpeded.

Messages travel only along communication links: a frame's (src, dst) must be
a graph edge; Report frames hop between snapshot-tree parent and child, and
multi-hop ConnectCmd frames carry their final destination explicitly while
intermediate members relay them.
"""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence, Union

from .graph import CommGraph, Edge, SpanningTreeEdges, ensure_feasible

__all__ = [
    "ProtocolError",
    "MessageKind",
    "ProtocolMessage",
    "Phase",
    "ProtocolNode",
    "ImmediateFifo",
    "RandomizedDelay",
    "DeliveryPolicy",
    "NetworkHarness",
    "format_trace_line",
    "ProtocolStats",
    "initial_round",
    "process_round",
    "reset_round",
    "drive_until_quiescent",
    "run_protocol",
    "nodes_from_graph",
]


class ProtocolError(RuntimeError):
    """A protocol invariant was violated (bad frame, wrong phase, watchdog)."""


class MessageKind(Enum):
    INIT = "Init"
    GET_INFO = "GetInfo"
    INFO_REPLY = "InfoReply"
    REPORT = "Report"
    CONNECT_CMD = "ConnectCmd"
    CONNECT = "Connect"
    UPDATE = "Update"


Candidate = tuple[tuple, Edge, bool]  # (comparator key, canonical edge, ready)


@dataclass(frozen=True)
class ProtocolMessage:
    """Single-hop frame; (src, dst) must be a communication edge.

    ``edges`` carries fragment adjacency for Init/Connect/Update; InfoReply
    answers with the replier's round-start snapshot (``leader``, ``members``)
    so that decisions stay schedule independent; Report carries the sender's
    aggregated subtree ``candidate`` (a (key, edge, ready) triple, or None
    when the subtree has no outgoing edge — ready is False while the edge's
    target subgroup has not yet consolidated); ConnectCmd is relayed and
    carries ``final_dst``.
    """

    kind: MessageKind
    src: int
    dst: int
    edges: Optional[frozenset[Edge]] = None
    leader: Optional[int] = None
    members: Optional[frozenset[int]] = None
    origin: Optional[int] = None
    final_dst: Optional[int] = None
    candidate: Optional[Candidate] = None
    edge: Optional[Edge] = None


class Phase(Enum):
    INITIALIZING = "Initializing"
    IDLE = "Idle"
    AWAITING_INFO = "AwaitingInfo"
    REPORTED = "Reported"
    DONE = "Done"


def _canon(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


class ProtocolNode:
    """Per-robot protocol state machine.

    Knows its id, the team size n, its incident edges with their comparator
    keys, and (when subgroup-first ordering is active) the team's
    behavior-group assignment; it learns its fragment's full adjacency
    through messages.  Termination is local: a fragment holding n-1 edges
    spans the team.
    """

    def __init__(self, self_id: int, n: int, incident_keys: Mapping[int, tuple],
                 subgroups: Optional[Sequence[int]] = None,
                 defer_inter: bool = False) -> None:
        self.self_id = self_id
        self.n = n
        self.neighbors = dict(incident_keys)       # neighbor id -> comparator key
        self.subgroup_of: Optional[tuple[int, ...]] = (
            tuple(subgroups) if subgroups is not None else None)
        self.defer_inter = defer_inter and self.subgroup_of is not None
        self.adjacency: frozenset[Edge] = frozenset()
        self.members: frozenset[int] = frozenset((self_id,))
        self.leader_id = self_id
        self.phase = Phase.INITIALIZING
        self.round = 0
        self._started = False
        # Merge-event instrument: called as on_adopt(self_id, edge) right
        # before this node links a chosen edge, while both endpoint fragments
        # still hold their pre-merge membership.
        self.on_adopt: Optional[Callable[[int, Edge], None]] = None
        # round-start snapshot
        self.snap_members: frozenset[int] = frozenset((self_id,))
        self.snap_leader = self_id
        self.snap_candidate: Optional[tuple[tuple, Edge]] = None
        self._snap_adj: dict[int, tuple[int, ...]] = {}
        self._routes: dict[int, int] = {}
        # convergecast state along the snapshot tree
        self._parent: Optional[int] = None
        self._children: tuple[int, ...] = ()
        self._child_reports: dict[int, Optional[Candidate]] = {}
        self._own_report: Optional[Candidate] = None
        self._own_ready = False

    def _subgroup_members(self, node: int) -> frozenset[int]:
        g = self.subgroup_of[node]
        return frozenset(i for i, gi in enumerate(self.subgroup_of) if gi == g)

    # -- helpers ------------------------------------------------------------

    def _tree_neighbors(self) -> list[int]:
        out = []
        for (a, b) in self.adjacency:
            if a == self.self_id:
                out.append(b)
            elif b == self.self_id:
                out.append(a)
        return out

    def _check_frame(self, msg: ProtocolMessage) -> None:
        if msg.dst != self.self_id:
            raise ProtocolError(f"node {self.self_id} received frame addressed to {msg.dst}")
        if msg.src not in self.neighbors:
            raise ProtocolError(
                f"node {self.self_id} received {msg.kind.value} from non-adjacent node {msg.src}")

    def _absorb(self, edges: frozenset[Edge], via: Optional[int],
                flood_kind: MessageKind) -> list[ProtocolMessage]:
        """Union incoming adjacency; on growth, re-flood along tree links
        (skipping the sender when it taught us everything we now know)."""
        new = self.adjacency | edges
        if new == self.adjacency:
            return []
        self.adjacency = new
        nodes = {self.self_id}
        for (a, b) in new:
            nodes.add(a)
            nodes.add(b)
        self.members = frozenset(nodes)
        self.leader_id = min(self.members)
        if len(new) == self.n - 1:
            self.phase = Phase.DONE
        out = []
        for t in self._tree_neighbors():
            if t == via and new == edges:
                continue
            out.append(ProtocolMessage(kind=flood_kind, src=self.self_id, dst=t,
                                       edges=self.adjacency, leader=self.leader_id))
        return out

    def _next_hop(self, target: int) -> int:
        if target in self._routes:
            return self._routes[target]
        # BFS over the round-start fragment tree from this node.
        parent: dict[int, int] = {self.self_id: self.self_id}
        frontier = deque([self.self_id])
        while frontier:
            u = frontier.popleft()
            for v in self._snap_adj.get(u, ()):
                if v not in parent:
                    parent[v] = u
                    frontier.append(v)
        if target not in parent:
            raise ProtocolError(
                f"node {self.self_id} cannot route to {target} inside its fragment")
        hop = target
        while parent[hop] != self.self_id:
            hop = parent[hop]
        self._routes[target] = hop
        return hop

    def _route(self, kind: MessageKind, final_dst: int, **payload) -> list[ProtocolMessage]:
        return [ProtocolMessage(kind=kind, src=self.self_id,
                                dst=self._next_hop(final_dst),
                                final_dst=final_dst, **payload)]

    # -- round seeds --------------------------------------------------------

    def start(self) -> list[ProtocolMessage]:
        """Initial linking: adopt the best incident edge and announce it.

        Under subgroup-first ordering the adoption is held back when the best
        edge crosses subgroups and either endpoint's subgroup has more than
        one member (those subgroups have not merged yet at time zero); the
        node stays a singleton fragment and proposes again via the normal
        round machinery once the target has consolidated.
        """
        if self._started or self.phase is not Phase.INITIALIZING:
            raise ProtocolError(f"node {self.self_id} already started")
        self._started = True
        if self.n == 1:
            self.phase = Phase.DONE
            return []
        best = min(self.neighbors, key=lambda j: self.neighbors[j])
        if self.defer_inter and self.subgroup_of[best] != self.subgroup_of[self.self_id]:
            if (len(self._subgroup_members(best)) > 1
                    or len(self._subgroup_members(self.self_id)) > 1):
                return []
        edge = _canon(self.self_id, best)
        if self.on_adopt is not None:
            self.on_adopt(self.self_id, edge)
        out = self._absorb(frozenset((edge,)), via=None, flood_kind=MessageKind.INIT)
        # _absorb floods to every tree neighbor, which here is exactly the pick.
        return out

    def begin_round(self) -> list[ProtocolMessage]:
        """Snapshot the fragment and open candidate discovery for this round."""
        if self.phase is Phase.DONE:
            return []
        self.round += 1
        self.phase = Phase.IDLE
        self.snap_members = self.members
        self.snap_leader = self.leader_id
        adj: dict[int, list[int]] = {}
        for (a, b) in self.adjacency:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        self._snap_adj = {k: tuple(sorted(v)) for k, v in adj.items()}
        self._routes = {}
        mine = self._snap_adj.get(self.self_id, ())
        self._parent = (None if self.self_id == self.snap_leader
                        else self._next_hop(self.snap_leader))
        self._children = tuple(j for j in mine if j != self._parent)
        self._child_reports = {}
        self._own_ready = False
        self._own_report = None
        candidate = None
        for j, key in self.neighbors.items():
            if j not in self.members:
                cand = (key, _canon(self.self_id, j))
                if candidate is None or cand < candidate:
                    candidate = cand
        self.snap_candidate = candidate
        if candidate is not None:
            self.phase = Phase.AWAITING_INFO
            return [ProtocolMessage(kind=MessageKind.GET_INFO, src=self.self_id,
                                    dst=candidate[1][0] + candidate[1][1] - self.self_id)]
        self._own_ready = True
        return self._maybe_report()

    # -- report path --------------------------------------------------------

    def _maybe_report(self) -> list[ProtocolMessage]:
        """Aggregate the subtree minimum once every input has arrived."""
        if not self._own_ready or len(self._child_reports) < len(self._children):
            return []
        best = self._own_report
        for cand in self._child_reports.values():
            if cand is not None and (best is None or cand < best):
                best = cand
        self.phase = Phase.REPORTED
        if self.self_id == self.snap_leader:
            return self._decide(best)
        return [ProtocolMessage(kind=MessageKind.REPORT, src=self.self_id,
                                dst=self._parent, final_dst=self._parent,
                                origin=self.self_id, candidate=best)]

    def _decide(self, best: Optional[Candidate]) -> list[ProtocolMessage]:
        if best is None:
            raise ProtocolError(
                f"leader {self.self_id}: no outgoing edge but fragment does not span the team")
        key, edge, ready = best
        if not ready:
            # The fragment-wide minimum crosses into a subgroup that has not
            # consolidated yet; idle this round and re-propose on the next
            # snapshot.  Substituting a larger ready edge would break the
            # minimum-outgoing-edge guarantee, so waiting is the only safe move.
            return []
        owner = edge[0] if edge[0] in self.snap_members else edge[1]
        if owner not in self.snap_members:
            raise ProtocolError(f"leader {self.self_id}: chosen edge {edge} has no local owner")
        if owner == self.self_id:
            return self._do_connect(edge)
        return self._route(MessageKind.CONNECT_CMD, owner, edge=edge)

    def _do_connect(self, edge: Edge) -> list[ProtocolMessage]:
        if edge in self.adjacency:
            return []  # the other fragment already linked this edge (mutual choice)
        other = edge[0] + edge[1] - self.self_id
        if self.on_adopt is not None:
            self.on_adopt(self.self_id, edge)
        grown = self._absorb(frozenset((edge,)), via=None, flood_kind=MessageKind.UPDATE)
        # Replace the bare flood toward the new neighbor with a proper Connect
        # carrying our merged adjacency; keep floods toward our own fragment.
        out = [m for m in grown if m.dst != other]
        out.append(ProtocolMessage(kind=MessageKind.CONNECT, src=self.self_id, dst=other,
                                   edges=self.adjacency, edge=edge, leader=self.leader_id))
        return out

    # -- message handling ---------------------------------------------------

    def handle(self, msg: ProtocolMessage) -> list[ProtocolMessage]:
        self._check_frame(msg)
        kind = msg.kind
        if kind in (MessageKind.INIT, MessageKind.UPDATE):
            if kind is MessageKind.INIT and self.phase not in (Phase.INITIALIZING, Phase.DONE):
                raise ProtocolError(
                    f"node {self.self_id} received Init in phase {self.phase.value}")
            flood = MessageKind.INIT if self.phase is Phase.INITIALIZING else MessageKind.UPDATE
            return self._absorb(msg.edges or frozenset(), via=msg.src, flood_kind=flood)

        if kind is MessageKind.GET_INFO:
            # Answer from the round-start snapshot: mid-round merges must not
            # leak into this round's decisions (schedule independence).
            return [ProtocolMessage(kind=MessageKind.INFO_REPLY, src=self.self_id, dst=msg.src,
                                    leader=self.snap_leader, members=self.snap_members)]

        if kind is MessageKind.INFO_REPLY:
            if self.phase is Phase.DONE:
                return []
            if self.phase is not Phase.AWAITING_INFO:
                raise ProtocolError(
                    f"node {self.self_id} received InfoReply in phase {self.phase.value}")
            self.phase = Phase.IDLE
            self._own_ready = True
            key, edge = self.snap_candidate
            ready = True
            if self.defer_inter:
                other = edge[0] + edge[1] - self.self_id
                if self.subgroup_of[other] != self.subgroup_of[self.self_id]:
                    ready = self._subgroup_members(other) <= (msg.members or frozenset())
            self._own_report = (key, edge, ready)
            return self._maybe_report()

        if kind is MessageKind.REPORT:
            if self.phase is Phase.DONE:
                return []
            if msg.src not in self._children:
                origin = msg.origin if msg.origin is not None else msg.src
                if origin not in self.snap_members:
                    raise ProtocolError(
                        f"node {self.self_id} received report from node {origin} "
                        "outside its fragment")
                raise ProtocolError(
                    f"node {self.self_id} received report from {msg.src}, "
                    "which is not one of its round children")
            if msg.src in self._child_reports:
                raise ProtocolError(
                    f"node {self.self_id} received a duplicate report from {msg.src}")
            self._child_reports[msg.src] = msg.candidate
            return self._maybe_report()

        if kind is MessageKind.CONNECT_CMD:
            if msg.final_dst != self.self_id:
                if self.phase is Phase.DONE:
                    return []
                return self._route(MessageKind.CONNECT_CMD, msg.final_dst, edge=msg.edge)
            if msg.edge in self.adjacency:
                return []
            if self.snap_candidate is None or msg.edge != self.snap_candidate[1]:
                raise ProtocolError(
                    f"node {self.self_id} ordered to connect non-minimum outgoing "
                    f"edge {msg.edge}")
            return self._do_connect(msg.edge)

        if kind is MessageKind.CONNECT:
            edges = (msg.edges or frozenset()) | frozenset((msg.edge,) if msg.edge else ())
            return self._absorb(edges, via=msg.src, flood_kind=MessageKind.UPDATE)

        raise ProtocolError(f"unknown message kind {kind!r}")


# --- single-frame wrappers --------------------------------------------------

def initial_round(node: ProtocolNode, msg: ProtocolMessage,
                  weights: Optional[Mapping[Edge, tuple]] = None
                  ) -> tuple[ProtocolNode, list[ProtocolMessage]]:
    """Handle one initial-round frame (node must still be initializing)."""
    if weights is not None:
        _apply_weights(node, weights)
    if node.phase not in (Phase.INITIALIZING, Phase.DONE):
        raise ProtocolError(f"initial_round called in phase {node.phase.value}")
    return node, node.handle(msg)


def process_round(node: ProtocolNode, msg: ProtocolMessage,
                  weights: Optional[Mapping[Edge, tuple]] = None
                  ) -> tuple[ProtocolNode, list[ProtocolMessage]]:
    """Handle one processing-round frame (after the initial round finished)."""
    if weights is not None:
        _apply_weights(node, weights)
    if node.phase is Phase.INITIALIZING:
        raise ProtocolError("process_round called before the initial round finished")
    return node, node.handle(msg)


def _apply_weights(node: ProtocolNode, weights: Mapping[Edge, tuple]) -> None:
    for (a, b), key in weights.items():
        if a == node.self_id:
            node.neighbors[b] = key
        elif b == node.self_id:
            node.neighbors[a] = key


# --- delivery ---------------------------------------------------------------

@dataclass(frozen=True)
class ImmediateFifo:
    """Deliver frames in global send order (per-link FIFO trivially holds)."""


@dataclass(frozen=True)
class RandomizedDelay:
    """Deliver the head of a uniformly random non-empty link; per-link FIFO holds."""

    seed: int = 0


DeliveryPolicy = Union[ImmediateFifo, RandomizedDelay]


def format_trace_line(round_index: int, seq: int, msg: "ProtocolMessage") -> str:
    """Render one delivered frame as ``round seq from to kind``.

    Matches the signature of the :class:`NetworkHarness` trace hook, so a log
    is built with ``trace=lambda r, s, m: lines.append(format_trace_line(r, s, m))``.
    """
    return f"{round_index} {seq} {msg.src} {msg.dst} {msg.kind.value}"


class NetworkHarness:
    """Per-link FIFO queues plus a delivery policy and message counters."""

    def __init__(self, graph: CommGraph, policy: DeliveryPolicy = ImmediateFifo(),
                 trace: Optional[Callable[[int, int, ProtocolMessage], None]] = None) -> None:
        self.links: set[tuple[int, int]] = set()
        for (i, j) in graph.edges:
            self.links.add((i, j))
            self.links.add((j, i))
        self.policy = policy
        self.queues: dict[tuple[int, int], deque[ProtocolMessage]] = {}
        self._order: deque[tuple[int, int]] = deque()   # ImmediateFifo bookkeeping
        self._nonempty: list[tuple[int, int]] = []      # RandomizedDelay bookkeeping
        self._rng = random.Random(policy.seed) if isinstance(policy, RandomizedDelay) else None
        self.pending = 0
        self.sent = 0
        self.delivered = 0
        self.round = 0
        self.round_messages = 0
        self.trace = trace

    @property
    def quiescent(self) -> bool:
        return self.pending == 0

    def send(self, msg: ProtocolMessage) -> None:
        link = (msg.src, msg.dst)
        if link not in self.links:
            raise ProtocolError(f"cannot send over non-edge link {link}")
        q = self.queues.get(link)
        if q is None:
            q = self.queues[link] = deque()
        if self._rng is not None and not q:
            self._nonempty.append(link)
        q.append(msg)
        if self._rng is None:
            self._order.append(link)
        self.pending += 1
        self.sent += 1
        self.round_messages += 1

    def deliver_next(self) -> Optional[ProtocolMessage]:
        if self.pending == 0:
            return None
        if self._rng is None:
            link = self._order.popleft()
        else:
            idx = self._rng.randrange(len(self._nonempty))
            link = self._nonempty[idx]
        msg = self.queues[link].popleft()
        if self._rng is not None and not self.queues[link]:
            last = self._nonempty.pop()
            if last != link:
                self._nonempty[idx] = last
        self.pending -= 1
        self.delivered += 1
        if self.trace is not None:
            self.trace(self.round, self.delivered, msg)
        return msg


@dataclass(frozen=True)
class ProtocolStats:
    messages: int
    rounds: int


# --- drivers ----------------------------------------------------------------

def reset_round(nodes: Sequence[ProtocolNode], harness: NetworkHarness,
                on_send: Optional[Callable[[ProtocolMessage, Sequence[ProtocolNode]], None]] = None
                ) -> Sequence[ProtocolNode]:
    """Open the next processing round for every unfinished node.

    Precondition: the harness is quiescent (raises otherwise).  Each node
    snapshots its fragment and emits its GetInfo or no-candidate Report.
    """
    if not harness.quiescent:
        raise ProtocolError("reset_round called on a non-quiescent network")
    harness.round += 1
    harness.round_messages = 0
    for node in nodes:
        for msg in node.begin_round():
            if on_send is not None:
                on_send(msg, nodes)
            harness.send(msg)
    return nodes


def drive_until_quiescent(
        harness: NetworkHarness, nodes: Sequence[ProtocolNode], *,
        watchdog_k: int = 16,
        on_send: Optional[Callable[[ProtocolMessage, Sequence[ProtocolNode]], None]] = None,
) -> ProtocolStats:
    """Deliver frames until every node is Done, inserting round resets at quiescence.

    The watchdog aborts when a round consumes more than ``watchdog_k * n``
    frames or the round count exceeds the Boruvka bound — both indicate a
    livelocked or diverging execution and raise :class:`ProtocolError`.
    """
    n = len(nodes)
    if n == 0:
        return ProtocolStats(messages=0, rounds=0)
    budget = max(1, watchdog_k * n)
    max_rounds = 2 * max(1, math.ceil(math.log2(max(n, 2)))) + 4

    if all(node.phase is Phase.INITIALIZING for node in nodes) and harness.quiescent:
        harness.round = 1
        harness.round_messages = 0
        for node in nodes:
            for msg in node.start():
                if on_send is not None:
                    on_send(msg, nodes)
                harness.send(msg)

    while True:
        while not harness.quiescent:
            if harness.round_messages > budget:
                raise ProtocolError(
                    f"watchdog: round {harness.round} exceeded {budget} messages "
                    f"({n} nodes, k={watchdog_k})")
            msg = harness.deliver_next()
            for out in nodes[msg.dst].handle(msg):
                if on_send is not None:
                    on_send(out, nodes)
                harness.send(out)
        if all(node.phase is Phase.DONE for node in nodes):
            return ProtocolStats(messages=harness.sent, rounds=harness.round)
        if harness.round >= max_rounds:
            raise ProtocolError(f"watchdog: {harness.round} rounds without termination")
        before = harness.sent
        reset_round(nodes, harness, on_send=on_send)
        if harness.sent == before:
            raise ProtocolError("stalled: round reset produced no messages")


def nodes_from_graph(graph: CommGraph) -> list[ProtocolNode]:
    if graph.inflated_key is None:
        raise ValueError("graph has no inflated keys; run inflate_weights first")
    incident: list[dict[int, tuple]] = [dict() for _ in range(graph.n)]
    for e in graph.edges:
        key = graph.inflated_key[e]
        incident[e[0]][e[1]] = key
        incident[e[1]][e[0]] = key
    return [ProtocolNode(i, graph.n, incident[i], subgroups=graph.subgroups,
                         defer_inter=graph.subgroup_first)
            for i in range(graph.n)]


def run_protocol(
        graph: CommGraph, policy: DeliveryPolicy = ImmediateFifo(), *,
        watchdog_k: int = 16,
        on_send: Optional[Callable[[ProtocolMessage, Sequence[ProtocolNode]], None]] = None,
        on_adopt: Optional[Callable[[int, Edge, Sequence[ProtocolNode]], None]] = None,
        trace: Optional[Callable[[int, int, ProtocolMessage], None]] = None,
) -> tuple[SpanningTreeEdges, ProtocolStats]:
    """Run the full distributed construction and return the agreed tree.

    Requires a connected graph whose subgroups' intra subgraphs are connected
    (raises the same infeasibility errors as the centralized builder).  All
    nodes must finish with byte-identical edge sets; the result matches the
    centralized greedy tree exactly.

    ``on_adopt(node_id, edge, nodes)`` observes merge events: it fires when a
    node links its fragment's chosen edge, before either side's membership
    reflects the union.
    """
    ensure_feasible(graph)
    if graph.n <= 1:
        return SpanningTreeEdges(n=graph.n, edges=frozenset()), ProtocolStats(0, 0)
    nodes = nodes_from_graph(graph)
    if on_adopt is not None:
        for node in nodes:
            node.on_adopt = lambda i, e: on_adopt(i, e, nodes)
    harness = NetworkHarness(graph, policy, trace=trace)
    stats = drive_until_quiescent(harness, nodes, watchdog_k=watchdog_k, on_send=on_send)
    trees = {node.adjacency for node in nodes}
    if len(trees) != 1:
        raise ProtocolError("nodes disagree on the final edge set")
    return SpanningTreeEdges(n=graph.n, edges=next(iter(trees))), stats
