"""Message-passing tree construction: merges, rounds, and tamper detection."""
import random
import re
import time

import pytest

from swarmmix.core import Lexicographic
from swarmmix.graph import CommGraph, inflate_weights, kruskal_mccst
from swarmmix.protocol import (
    ImmediateFifo,
    MessageKind,
    NetworkHarness,
    Phase,
    ProtocolError,
    ProtocolMessage,
    RandomizedDelay,
    drive_until_quiescent,
    format_trace_line,
    initial_round,
    nodes_from_graph,
    process_round,
    reset_round,
    run_protocol,
)
from swarmmix.scenariogen import random_graph_instance


def _graph(n, weights, subgroups):
    edges = tuple(sorted(weights))
    intra = {e: subgroups[e[0]] == subgroups[e[1]] for e in edges}
    g = CommGraph(n=n, edges=edges, weight=dict(weights), intra=intra,
                  subgroups=tuple(subgroups))
    return inflate_weights(g, Lexicographic())


def _pump(harness, nodes):
    """Deliver everything currently queued (plus whatever that spawns)."""
    while not harness.quiescent:
        msg = harness.deliver_next()
        for out in nodes[msg.dst].handle(msg):
            harness.send(out)


def _start_all(graph):
    nodes = nodes_from_graph(graph)
    harness = NetworkHarness(graph)
    for node in nodes:
        for m in node.start():
            harness.send(m)
    return nodes, harness


# --- small hand instances ---------------------------------------------------

def test_two_nodes_agree_on_their_only_edge():
    g = _graph(2, {(0, 1): 1.0}, [0, 0])
    tree, stats = run_protocol(g)
    assert tree.edges == frozenset({(0, 1)})
    assert stats.messages > 0
    assert stats.rounds >= 1


def test_two_nodes_share_leader_and_members():
    g = _graph(2, {(0, 1): 1.0}, [0, 0])
    nodes, harness = _start_all(g)
    _pump(harness, nodes)
    for node in nodes:
        assert node.phase is Phase.DONE
        assert node.members == frozenset({0, 1})
        assert node.leader_id == 0


def test_path_graph_converges_to_itself():
    g = _graph(3, {(0, 1): 2.0, (1, 2): 1.0}, [0, 0, 0])
    tree, _ = run_protocol(g)
    assert tree.edges == frozenset({(0, 1), (1, 2)})


def test_star_graph_converges_to_itself():
    g = _graph(5, {(0, i): float(i) for i in range(1, 5)}, [0] * 5)
    tree, _ = run_protocol(g)
    assert tree.edges == frozenset((0, i) for i in range(1, 5))


def test_single_node_needs_no_messages():
    g = _graph(1, {}, [0])
    tree, stats = run_protocol(g)
    assert tree.edges == frozenset()
    assert stats.messages == 0


# --- subgroups merge before crossing ----------------------------------------

def test_inter_subgroup_link_waits_for_the_target_to_consolidate():
    """A lone robot facing a two-robot subgroup must idle one round."""
    g = _graph(3, {(0, 1): 10.0, (1, 2): -1.0}, [0, 1, 1])
    log = []
    tree, stats = run_protocol(g, trace=lambda r, s, m: log.append((r, m)))
    assert tree.edges == frozenset({(0, 1), (1, 2)})
    crossing = [r for r, m in log
                if m.kind is MessageKind.CONNECT and m.edge == (0, 1)]
    assert crossing and min(crossing) >= 2
    assert stats.rounds >= 2


def test_inter_subgroup_merge_sees_two_whole_subgroups():
    g = _graph(4, {(0, 1): -5.0, (2, 3): -5.0, (1, 2): 10.0, (0, 3): 1.0},
               [0, 0, 1, 1])
    seen = []

    def watch(owner, edge, nodes):
        if not g.intra[edge]:
            seen.append((nodes[edge[0]].members, nodes[edge[1]].members))

    tree, _ = run_protocol(g, on_adopt=watch)
    assert tree.edges == frozenset({(0, 1), (2, 3), (1, 2)})
    assert seen
    for left, right in seen:
        assert frozenset({0, 1}) <= left
        assert frozenset({2, 3}) <= right


# --- agreement with the centralized oracle ----------------------------------

def test_matches_centralized_construction():
    rng = random.Random(8)
    for k in range(40):
        n = rng.randint(3, 16)
        m = rng.randint(1, min(4, n))
        g = random_graph_instance(n, m, seed=4000 + k)
        tree, _ = run_protocol(g)
        assert tree.edges == kruskal_mccst(g).edges, f"instance {k}"


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_delivery_order_does_not_change_the_tree(seed):
    g = random_graph_instance(14, 3, seed=777)
    fifo_tree, _ = run_protocol(g, ImmediateFifo())
    delayed_tree, _ = run_protocol(g, RandomizedDelay(seed))
    assert delayed_tree.edges == fifo_tree.edges


def test_forest_grows_without_cycles():
    g = random_graph_instance(18, 4, seed=321)
    parent = list(range(g.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    accepted = set()

    def watch(owner, edge, nodes):
        if edge in accepted:
            return  # the mutual-choice partner linking the same edge
        ra, rb = find(edge[0]), find(edge[1])
        assert ra != rb, f"cycle edge {edge}"
        parent[ra] = rb
        accepted.add(edge)

    tree, _ = run_protocol(g, on_adopt=watch)
    assert accepted == set(tree.edges)


def test_trace_lines_carry_round_seq_src_dst_kind():
    g = _graph(3, {(0, 1): 2.0, (1, 2): 1.0}, [0, 0, 0])
    lines = []
    run_protocol(g, trace=lambda r, s, m: lines.append(format_trace_line(r, s, m)))
    pattern = re.compile(
        r"^\d+ \d+ \d+ \d+ (Init|GetInfo|InfoReply|Report|ConnectCmd|Connect|Update)$")
    assert lines
    assert all(pattern.match(line) for line in lines)
    seqs = [int(line.split()[1]) for line in lines]
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
    rounds = [int(line.split()[0]) for line in lines]
    assert rounds == sorted(rounds)


def test_hundred_robot_construction_is_subsecond():
    g = random_graph_instance(100, 4, seed=0)
    t0 = time.time()
    tree, _ = run_protocol(g)
    assert time.time() - t0 < 1.0
    assert len(tree.edges) == 99


# --- tampered frames and broken states --------------------------------------

def _fresh_path_node():
    g = _graph(3, {(0, 1): 2.0, (1, 2): 1.0}, [0, 0, 0])
    return nodes_from_graph(g)


def test_rejects_frames_from_non_neighbors():
    node = _fresh_path_node()[0]
    node.start()
    bogus = ProtocolMessage(kind=MessageKind.INIT, src=2, dst=0,
                            edges=frozenset())
    with pytest.raises(ProtocolError, match="non-adjacent node 2"):
        node.handle(bogus)


def test_rejects_misaddressed_frames():
    node = _fresh_path_node()[0]
    node.start()
    stray = ProtocolMessage(kind=MessageKind.INIT, src=1, dst=2,
                            edges=frozenset())
    with pytest.raises(ProtocolError, match="addressed to 2"):
        node.handle(stray)


def test_rejects_double_start():
    node = _fresh_path_node()[0]
    node.start()
    with pytest.raises(ProtocolError, match="already started"):
        node.start()


def _two_fragment_state():
    """Path 0-1-2-3 after one round: fragments {0,1} and {2,3}, round 2 begun."""
    g = _graph(4, {(0, 1): 5.0, (1, 2): 1.0, (2, 3): 5.0}, [0] * 4)
    nodes, harness = _start_all(g)
    _pump(harness, nodes)
    assert nodes[0].members == frozenset({0, 1})
    assert nodes[2].members == frozenset({2, 3})
    reset_round(nodes, harness)
    return g, nodes, harness


def test_rejects_reports_from_outside_the_fragment():
    g, nodes, _ = _two_fragment_state()
    forged = ProtocolMessage(kind=MessageKind.REPORT, src=2, dst=1, origin=2,
                             candidate=(g.inflated_key[(1, 2)], (1, 2), True))
    with pytest.raises(ProtocolError, match="outside its fragment"):
        nodes[1].handle(forged)


def test_rejects_reports_from_non_children():
    g, nodes, _ = _two_fragment_state()
    forged = ProtocolMessage(kind=MessageKind.REPORT, src=0, dst=1, origin=0,
                             candidate=(g.inflated_key[(1, 2)], (1, 2), True))
    with pytest.raises(ProtocolError, match="not one of its round children"):
        nodes[1].handle(forged)


def test_rejects_duplicate_reports():
    g, nodes, _ = _two_fragment_state()
    report = ProtocolMessage(kind=MessageKind.REPORT, src=1, dst=0, origin=1,
                             candidate=(g.inflated_key[(1, 2)], (1, 2), True))
    nodes[0].handle(report)
    with pytest.raises(ProtocolError, match="duplicate report"):
        nodes[0].handle(report)


def test_rejects_connect_orders_for_other_edges():
    g, nodes, _ = _two_fragment_state()
    order = ProtocolMessage(kind=MessageKind.CONNECT_CMD, src=0, dst=1,
                            final_dst=1, edge=(1, 3))
    with pytest.raises(ProtocolError, match="non-minimum outgoing"):
        nodes[1].handle(order)


def test_reset_round_requires_quiescence():
    g, nodes, harness = _two_fragment_state()
    assert not harness.quiescent  # round-2 openers still queued
    with pytest.raises(ProtocolError, match="non-quiescent"):
        reset_round(nodes, harness)


def test_watchdog_aborts_chatty_rounds():
    g = _graph(3, {(0, 1): 2.0, (1, 2): 1.0}, [0] * 3)
    with pytest.raises(ProtocolError, match="watchdog"):
        run_protocol(g, watchdog_k=0)


def test_harness_refuses_non_edges():
    g = _graph(3, {(0, 1): 2.0, (1, 2): 1.0}, [0] * 3)
    harness = NetworkHarness(g)
    stray = ProtocolMessage(kind=MessageKind.INIT, src=0, dst=2,
                            edges=frozenset())
    with pytest.raises(ProtocolError, match="non-edge link"):
        harness.send(stray)


def test_round_wrappers_enforce_their_phases():
    nodes = _fresh_path_node()
    msg = ProtocolMessage(kind=MessageKind.INIT, src=1, dst=0, edges=frozenset())
    with pytest.raises(ProtocolError, match="before the initial round"):
        process_round(nodes[0], msg)
    busy = _fresh_path_node()[0]
    busy.start()
    busy.phase = Phase.IDLE  # mid-round state: too late for initial frames
    with pytest.raises(ProtocolError, match="initial_round called in phase"):
        initial_round(busy, msg)


def test_run_protocol_requires_inflated_keys():
    bare = CommGraph(n=2, edges=((0, 1),), weight={(0, 1): 1.0},
                     intra={(0, 1): True}, subgroups=(0, 0))
    with pytest.raises(ValueError, match="inflated keys"):
        run_protocol(bare)
