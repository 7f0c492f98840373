"""Consensus power dynamics on the layered network.

The storage-layer voltages follow the diffusion-like Kirchhoff dynamics
of the switched network,

    C dv/dt = -L22 v - L21 v_src,

with source and sink voltages clamped. Integration is explicit forward
Euler at the packet bit time; the step factor must respect the usual
consensus stability bound. The discrete consensus reference model
x(k+1) = (I - eps*C^-1*L) x(k) + eps*C^-1*b is provided alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StabilityError
from .graph import LaplacianBlocks, NetworkGraph


@dataclass
class VoltageState:
    """Layered voltage vectors at one instant. Source entries are constant
    over a run and sink entries are identically zero."""

    v_src: np.ndarray
    v: np.ndarray
    v_snk: np.ndarray
    time: float = 0.0


@dataclass
class FlowSnapshot:
    """Currents and powers at one instant.

    ``i_in`` is per-source injection into the network (positive when the
    source supplies); ``i_out`` is per-sink extraction (positive when the
    sink receives). Edge currents are oriented upstream -> downstream;
    edge power is the power delivered into the downstream node,
    w*(v_up - v_down)*v_down.
    """

    i_in: np.ndarray
    i_out: np.ndarray
    edge_current: np.ndarray
    edge_power: np.ndarray
    time: float


@dataclass
class ConsensusParams:
    """Step factor and bias for the discrete consensus reference model."""

    epsilon: float
    bias: np.ndarray | None = None


def stability_epsilon_bound(L: np.ndarray, C: np.ndarray) -> float:
    """Upper bound 1 / max_i(c_i^-1 sum_j w_ij) for the discrete step factor.

    ``C`` may be a diagonal matrix or a vector of node weights. Returns
    +inf for an edgeless graph.
    """
    c = np.diag(C) if C.ndim == 2 else np.asarray(C, dtype=float)
    rates = np.diag(L) / c
    m = rates.max() if rates.size else 0.0
    if m <= 0:
        return np.inf
    return 1.0 / m


def discrete_consensus_step(
    L: np.ndarray, C: np.ndarray, x: np.ndarray, params: ConsensusParams
) -> np.ndarray:
    """One update x <- (I - eps*C^-1*L) x + eps*C^-1*b.

    With b = 0 on a connected graph the iterates contract toward the
    c-weighted average of the initial state. Raises StabilityError if
    epsilon is outside (0, bound).
    """
    c = np.diag(C) if C.ndim == 2 else np.asarray(C, dtype=float)
    bound = stability_epsilon_bound(L, c)
    if not 0.0 < params.epsilon < bound:
        raise StabilityError(
            f"epsilon {params.epsilon} outside (0, {bound}) stability range"
        )
    out = x - params.epsilon * (L @ x) / c
    if params.bias is not None:
        out = out + params.epsilon * params.bias / c
    return out


def check_step_stability(
    blocks: LaplacianBlocks, capacitances: np.ndarray, dt: float
) -> None:
    """Validate dt * max_i(c_i^-1 sum_j w_ij) < 1 for the storage layer.

    Raises StabilityError naming the offending node and the dt bound.
    """
    rates = np.diag(blocks.L22) / capacitances
    worst = int(np.argmax(rates)) if rates.size else 0
    if rates.size and dt * rates[worst] >= 1.0:
        node_id = int(blocks.order[blocks.n_sources + worst])
        raise StabilityError(
            f"dt {dt:g} violates the Euler stability bound at node {node_id}: "
            f"dt must be < {1.0 / rates[worst]:g} s"
        )


def step_voltages(
    blocks: LaplacianBlocks,
    state: VoltageState,
    capacitances: np.ndarray,
    dt: float,
) -> VoltageState:
    """Advance the storage voltages one forward-Euler step of length dt.

    Source and sink voltages are excluded from the integrated state; they
    enter only through the L21 coupling term.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    check_step_stability(blocks, capacitances, dt)
    dv = -(blocks.L22 @ state.v) - (blocks.L21 @ state.v_src)
    v_new = state.v + dt * dv / capacitances
    return VoltageState(
        v_src=state.v_src, v=v_new, v_snk=state.v_snk, time=state.time + dt
    )


def flow_snapshot(
    blocks: LaplacianBlocks, state: VoltageState, graph: NetworkGraph
) -> FlowSnapshot:
    """Currents and powers for the configuration ``blocks`` was built from.

    The per-edge conductances stored on ``blocks`` keep this consistent
    with the matrix by construction.
    """
    i_in = blocks.L11 @ state.v_src + blocks.L12 @ state.v + blocks.L13 @ state.v_snk
    i_out = -(
        blocks.L31 @ state.v_src + blocks.L32 @ state.v + blocks.L33 @ state.v_snk
    )
    u = full_voltage_vector(graph, state)
    cur = blocks.edge_weights * (u[graph.edge_up] - u[graph.edge_down])
    power = cur * u[graph.edge_down]
    return FlowSnapshot(
        i_in=i_in, i_out=i_out, edge_current=cur, edge_power=power, time=state.time
    )


def full_voltage_vector(graph: NetworkGraph, state: VoltageState) -> np.ndarray:
    """All node voltages in node-id order (clamped layers included)."""
    u = np.empty(graph.n_nodes)
    u[graph.source_ids] = state.v_src
    u[graph.storage_ids] = state.v
    u[graph.sink_ids] = state.v_snk
    return u
