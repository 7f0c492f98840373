"""Deterministic simulator for decentralized power packet networks.

Autonomous routers negotiate packet transfers over a switched resistive
network; the resulting power flow follows time-varying weighted-Laplacian
consensus dynamics. The package provides the graph and Laplacian
machinery, the voltage integrator, the router automata, a fixed-step
engine with trace recording, post-processing tools, and a CLI.
"""

from .analysis import (
    EndpointDistribution,
    EnergyAudit,
    ProtocolReport,
    charge_balance_residuals,
    endpoint_distribution,
    energy_audit,
    moving_average,
    protocol_report,
)
from .dynamics import (
    ConsensusParams,
    FlowSnapshot,
    VoltageState,
    discrete_consensus_step,
    flow_snapshot,
    stability_epsilon_bound,
    step_voltages,
)
from .engine import SimConfig, Trace, run_ensemble, run_simulation
from .errors import ConfigError, StabilityError
from .graph import (
    Edge,
    LaplacianBlocks,
    NetworkGraph,
    Node,
    NodeKind,
    PowerPhase,
    TopologySpec,
    build_graph,
    edge_weight,
    weighted_laplacian,
)
from .router import (
    ControlMethod,
    Message,
    MessageKind,
    PacketTransmission,
    RouterMode,
    RouterParams,
    RouterState,
    evaluate,
    step_router,
)
from .scenarios import (
    BUILTIN_SCENARIOS,
    TRIMESH9_MIXED_METHODS,
    builtin_scenario,
    chain5_topology,
    trimesh9_topology,
)
from .traceio import read_trace, write_trace

__version__ = "0.1.0"
