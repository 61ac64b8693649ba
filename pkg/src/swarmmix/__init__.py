"""Behavior mixing for connected multi-robot teams.

Subgroups of a team pursue different behaviors while the whole team keeps a
connected communication graph and pairwise safety.  Each control period the
team re-selects the least restrictive spanning tree compatible with keeping
every subgroup internally connected — computed either centrally or by a
message-passing protocol over the communication links — and a small QP
minimally revises the nominal controls to certify the selected links and
all pairwise safety margins.
"""

from .core import (BehaviorSpec, CircleFormation, Explicit, Lexicographic,
                   Rendezvous, RobotState, Scenario, ScenarioError,
                   SingleIntegrator, Unicycle, Waypoint, WorldConfig,
                   load_scenario, load_scenario_file, serialize_scenario,
                   validate_world)
from .graph import (CommGraph, InfeasibleGraphError, SpanningTreeEdges,
                    algebraic_connectivity, build_comm_graph,
                    brute_force_constrained_mst, edge_weight, h_connectivity,
                    h_safety, induced_subgraph_connected, inflate_weights,
                    is_connected, kruskal_mccst)
from .protocol import (ImmediateFifo, NetworkHarness, ProtocolError,
                       RandomizedDelay, run_protocol)
from .qp import (QpProblem, QpSolution, QpStatus, assemble_qp, perturbation,
                 reference_solve, solve_qp)
from .sim import ConnectivityMode, RunResult, StepReport, World, run, step, world_from_scenario

__version__ = "0.1.0"
