"""Fixed-step simulation engine.

One global tick equals one packet bit time. Per tick the engine delivers
the messages sent on the previous tick, steps every router in node-id
order against a frozen voltage snapshot, applies the resulting switch
commands, advances packet phases, rebuilds the Euler update matrices when
the conducting topology changed, and integrates the storage voltages.
A single run is strictly sequential and bit-reproducible; ensemble runs
are independent and may execute on separate workers.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import check_step_stability
from .errors import ConfigError, StabilityError
from .graph import (
    NetworkGraph,
    NodeKind,
    TopologySpec,
    build_graph,
    weighted_laplacian,
)
from .router import (
    ControlMethod,
    Message,
    Port,
    RouterMode,
    RouterParams,
    RouterState,
    step_router,
)


@dataclass
class SimConfig:
    """Full description of one simulation experiment."""

    topology: TopologySpec
    methods: dict[int, ControlMethod]
    v_src: float = 10.0
    initial_voltages: list[float] | None = None  # explicit per-storage values
    capacitance: float = 1e-3  # farads per storage node
    bit_time: float = 3.125e-6  # seconds; also the engine tick
    total_bits: int = 100
    tag_bits: int = 10
    switch_resistance: float = 1.0  # ohms per switching device
    load_resistance: float = 50.0  # ohms on each sink path
    delta_t_u: float = 1e-5  # mode transition dwell, seconds
    end_time: float = 0.1
    seed: int = 42
    n_runs: int = 10
    message_latency_ticks: int = 1
    gate_all_modes: bool = False
    name: str = ""

    def config_hash(self) -> str:
        text = repr(
            (
                sorted((i, k.value) for i, k in self.topology.nodes),
                sorted((a, b, r) for a, b, r in self.topology.edges),
                sorted((i, m.value) for i, m in self.methods.items()),
                self.v_src,
                self.initial_voltages,
                self.capacitance,
                self.bit_time,
                self.total_bits,
                self.tag_bits,
                self.switch_resistance,
                self.load_resistance,
                self.delta_t_u,
                self.end_time,
                self.seed,
                self.n_runs,
                self.message_latency_ticks,
                self.gate_all_modes,
            )
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Trace:
    """Recorded time series and event logs for one run.

    All series share the sample axis ``times`` (length end_time/dt + 1).
    ``voltages[k]`` is the state at t = k*dt. Edge currents/powers/switch
    rows at index k hold the values in effect over [k*dt, (k+1)*dt); the
    final row is the instantaneous reading with the last configuration.
    """

    run_index: int
    config_hash: str
    dt: float
    times: np.ndarray
    voltages: np.ndarray
    edge_currents: np.ndarray
    edge_powers: np.ndarray
    switch_states: np.ndarray
    messages: list[Message]
    dropped_messages: list[tuple[float, Message]]
    violations: int
    truncated_edges: list[int]
    warnings: list[str]
    node_kinds: list[NodeKind]
    capacitances: np.ndarray  # per node; NaN for clamped source/sink
    edge_list: list[tuple[int, int, bool]]  # (upstream, downstream, switchable)
    v_src: float

    @property
    def n_samples(self) -> int:
        return len(self.times)


def initial_storage_voltages(config: SimConfig, run_index: int, n_storage: int):
    """Per-run initial voltages from a counter-based generator.

    Each run draws from an independent Philox stream keyed by
    (seed, run_index); storages are filled in ascending node-id order.
    """
    if config.initial_voltages is not None:
        vals = np.asarray(config.initial_voltages, dtype=float)
        if len(vals) != n_storage:
            raise ConfigError(
                f"expected {n_storage} initial voltages, got {len(vals)}"
            )
        return vals.copy()
    bitgen = np.random.Philox(key=np.array([config.seed, run_index], dtype=np.uint64))
    rng = np.random.Generator(bitgen)
    return rng.uniform(0.0, config.v_src, size=n_storage)


def build_config_graph(config: SimConfig) -> NetworkGraph:
    return build_graph(
        config.topology,
        switch_resistance=config.switch_resistance,
        load_resistance=config.load_resistance,
        capacitance=config.capacitance,
    )


def _resolve_ticks(config: SimConfig) -> tuple[int, list[str]]:
    dt = config.bit_time
    warnings: list[str] = []
    if config.end_time < 0:
        raise ConfigError("end_time must be non-negative")
    k = config.end_time / dt
    n = int(round(k))
    if abs(k - n) > 1e-6:
        n = int(np.ceil(k))
        warnings.append(
            f"end_time {config.end_time:g} s is not a multiple of the bit time; "
            f"rounded up to {n} ticks ({n * dt:g} s)"
        )
    return n, warnings


def run_simulation(config: SimConfig, run_index: int = 0) -> Trace:
    """Execute one deterministic run and record its trace.

    Tick order: deliver messages sent on the previous tick, step routers
    in node-id order, apply switch commands and packet phase changes,
    rebuild the update matrices if needed, then advance the voltages by
    one bit time.
    """
    if run_index < 0 or run_index >= max(config.n_runs, 1):
        raise ConfigError(f"run_index {run_index} outside 0..{config.n_runs - 1}")
    graph = build_config_graph(config)
    dt = config.bit_time
    n_ticks, warnings = _resolve_ticks(config)

    # startup stability check against the densest (all-routed) configuration
    for e in graph.edges:
        if e.switchable:
            e.routed = True
    caps = graph.capacitances()
    check_step_stability(weighted_laplacian(graph), caps, dt)
    for e in graph.edges:
        if e.switchable:
            e.routed = False

    n = graph.n_nodes
    n_edges = graph.n_edges
    sto = graph.storage_ids
    src = graph.source_ids
    snk = graph.sink_ids
    v = initial_storage_voltages(config, run_index, len(sto))
    np.clip(v, 0.0, config.v_src, out=v)

    u = np.empty(n)
    u[src] = config.v_src
    u[snk] = 0.0
    u[sto] = v

    params = RouterParams(
        delta_t_u=config.delta_t_u,
        bit_time=dt,
        total_bits=config.total_bits,
        tag_bits=config.tag_bits,
        gate_all_modes=config.gate_all_modes,
    )

    routers: list[RouterState] = []
    adjacency: dict[int, list[int]] = {}
    for node in graph.nodes:
        if node.kind is NodeKind.SINK:
            continue
        port_edges = graph.switchable_ports(node.id)
        if not port_edges:
            continue
        method = config.methods.get(node.id)
        if method is None:
            raise ConfigError(f"no control method assigned to node {node.id}")
        ports = [
            Port(
                edge_index=ei,
                peer=graph.peer(ei, node.id),
                weight=graph.edges[ei].weight,
            )
            for ei in port_edges
        ]
        routers.append(
            RouterState(
                node_id=node.id,
                method=method,
                ports=ports,
                capacitance=node.capacitance if node.capacitance else config.capacitance,
                clamped_voltage=config.v_src if node.kind is NodeKind.SOURCE else None,
            )
        )
        adjacency[node.id] = [p.peer for p in routers[-1].ports]
    router_by_id = {r.node_id: r for r in routers}

    # preallocated series
    times = np.arange(n_ticks + 1) * dt
    voltages = np.empty((n_ticks + 1, n))
    currents = np.empty((n_ticks + 1, n_edges))
    powers = np.empty((n_ticks + 1, n_edges))
    switches = np.empty((n_ticks + 1, n_edges), dtype=bool)

    # effective conductances; non-switchable edges always conduct
    w_eff = np.array(
        [0.0 if e.switchable else e.weight for e in graph.edges], dtype=float
    )
    w_full = graph.nominal_weights()
    routed = np.array([e.routed for e in graph.edges], dtype=bool)
    up = graph.edge_up
    down = graph.edge_down

    # per-edge active transmission: start tick, or -1
    tx_start = np.full(n_edges, -1, dtype=int)
    tag_bits = config.tag_bits
    total_bits = config.total_bits
    latency = config.message_latency_ticks
    if latency < 1:
        raise ConfigError("message_latency_ticks must be >= 1")
    in_flight: list[list] = [[] for _ in range(latency)]

    # Euler update: v' = A @ v + b, rebuilt when any conductance changes
    A = b = None
    edge_a = np.array([e.a for e in graph.edges], dtype=int)
    edge_b = np.array([e.b for e in graph.edges], dtype=int)
    n_sto = len(sto)
    sto_pos = {int(node): i for i, node in enumerate(sto)}
    src_pos = {int(node): i for i, node in enumerate(src)}
    v_src_vec = np.full(len(src), config.v_src)

    def rebuild():
        nonlocal A, b
        L22 = np.zeros((n_sto, n_sto))
        L21 = np.zeros((n_sto, len(src)))
        for ei in range(n_edges):
            w = w_eff[ei]
            if w == 0.0:
                continue
            ia, ib = int(edge_a[ei]), int(edge_b[ei])
            pa, pb = sto_pos.get(ia), sto_pos.get(ib)
            if pa is not None:
                L22[pa, pa] += w
            if pb is not None:
                L22[pb, pb] += w
            if pa is not None and pb is not None:
                L22[pa, pb] -= w
                L22[pb, pa] -= w
            if pa is not None and ib in src_pos:
                L21[pa, src_pos[ib]] -= w
            if pb is not None and ia in src_pos:
                L21[pb, src_pos[ia]] -= w
        rates = np.diag(L22) / caps
        worst = int(np.argmax(rates)) if rates.size else 0
        if rates.size and dt * rates[worst] >= 1.0:
            raise StabilityError(
                f"bit time {dt:g} unstable at node {int(sto[worst])}: "
                f"needs dt < {1.0 / rates[worst]:g} s"
            )
        A = np.eye(n_sto) - dt * (L22 / caps[:, None])
        b = dt * (-(L21 @ v_src_vec) / caps)

    rebuild()

    messages: list[Message] = []
    truncated: list[int] = []
    active_tx: dict[int, int] = {}  # edge index -> start tick
    empty_view: dict[int, float] = {}
    ua = np.empty(n_edges)
    ub = np.empty(n_edges)
    diff = np.empty(n_edges)
    v_next = np.empty(n_sto)
    init_mode = RouterMode.INITIALIZE
    eval_mode = RouterMode.EVALUATE
    fwd_mode = RouterMode.FORWARDING
    gate_t = params.delta_t_u - params.time_slack

    for k in range(n_ticks):
        now = k * dt

        # (1) deliver messages sent `latency` ticks ago
        arriving = in_flight[k % latency]
        if arriving:
            for msg in arriving:
                router_by_id[msg.receiver].deliver(msg)
            arriving.clear()

        # (2) step routers against the frozen pre-step voltage snapshot
        dirty = False
        outgoing = []
        for r in routers:
            mode = r.mode
            # dwelling in initialize with an empty inbox is a no-op
            if (
                mode is init_mode
                and not r.pending_starts
                and now - r.mode_entry_time < gate_t
            ):
                continue
            # the voltage view is built only when the mode reads it
            if mode is eval_mode or (mode is fwd_mode and not r.holding):
                local = {p: u[p] for p in adjacency[r.node_id]}
            else:
                local = empty_view
            outbox, commands = step_router(
                r, (u[r.node_id], local), now, params
            )
            if outbox:
                outgoing.extend(outbox)
            # (3a) apply switch commands
            for cmd in commands:
                ei = cmd.edge_index
                if cmd.route:
                    if routed[ei]:
                        raise RuntimeError(
                            f"edge {ei} double-routed at t={now:g}"
                        )
                    routed[ei] = True
                    graph.edges[ei].routed = True
                    active_tx[ei] = k
                    # tag phase: no conductance yet, matrices unchanged
                else:
                    if routed[ei] and graph.edges[ei].switchable:
                        routed[ei] = False
                        graph.edges[ei].routed = False
                        active_tx.pop(ei, None)
                        if w_eff[ei] != 0.0:
                            w_eff[ei] = 0.0
                            dirty = True
        if outgoing:
            messages.extend(outgoing)
            in_flight[k % latency].extend(outgoing)

        # (3b) packet phase transitions: payload begins after the tag bits
        for ei, start_tick in active_tx.items():
            if k - start_tick == tag_bits:
                w_eff[ei] = w_full[ei]
                dirty = True

        # (4) refresh the update matrices if the topology changed
        if dirty:
            rebuild()

        # (5) record the interval, then integrate
        voltages[k] = u
        np.take(u, up, out=ua)
        np.take(u, down, out=ub)
        np.subtract(ua, ub, out=diff)
        row = currents[k]
        np.multiply(w_eff, diff, out=row)
        np.multiply(row, ub, out=powers[k])
        switches[k] = routed
        np.matmul(A, v, out=v_next)
        np.add(v_next, b, out=v)
        u[sto] = v

    # final sample: state after the last tick, last prevailing configuration
    voltages[n_ticks] = u
    cur = w_eff * (u[up] - u[down])
    currents[n_ticks] = cur
    powers[n_ticks] = cur * u[down]
    switches[n_ticks] = routed

    truncated.extend(sorted(active_tx))

    violations = sum(r.violations for r in routers)
    dropped: list[tuple[float, Message]] = []
    for r in routers:
        dropped.extend(r.dropped)
    dropped.sort(key=lambda t: (t[0], t[1].sent_at, t[1].sender, t[1].receiver))

    cap_per_node = np.full(n, np.nan)
    cap_per_node[sto] = caps
    return Trace(
        run_index=run_index,
        config_hash=config.config_hash(),
        dt=dt,
        times=times,
        voltages=voltages,
        edge_currents=currents,
        edge_powers=powers,
        switch_states=switches,
        messages=messages,
        dropped_messages=dropped,
        violations=violations,
        truncated_edges=truncated,
        warnings=warnings,
        node_kinds=[nd.kind for nd in graph.nodes],
        capacitances=cap_per_node,
        edge_list=[
            (int(up[i]), int(down[i]), graph.edges[i].switchable)
            for i in range(n_edges)
        ],
        v_src=config.v_src,
    )


def _run_one(args) -> Trace:
    config, idx = args
    return run_simulation(config, idx)


def run_ensemble(config: SimConfig, workers: int = 1) -> list[Trace]:
    """All n_runs traces, differing only in their initial voltages.

    With workers > 1 runs execute on separate processes; results are
    returned in run order either way and are identical to the sequential
    output.
    """
    if config.n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    indices = list(range(config.n_runs))
    if workers <= 1 or config.n_runs == 1:
        return [run_simulation(config, i) for i in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, [(config, i) for i in indices]))
