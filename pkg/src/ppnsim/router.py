"""Decentralized per-node router automata and message protocol.

Each router cycles through initialize -> termination check -> evaluate ->
(storing | forwarding) -> initialize, servicing one port per tick. The
four messages query/acc/start/end negotiate packet transfers on a single
edge; a legal conversation is a prefix of query -> acc -> start ->
(packet) -> end, with demand-driven nodes opening with query and
supply-driven nodes opening with an unsolicited acc toward a
strictly-lower-voltage neighbor.

Routers see only their own state, their inbox, and the voltages of
adjacent nodes; given identical inputs a step is deterministic. Malformed
messages are discarded and counted, never raised.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum


class ControlMethod(Enum):
    BOTTOM_UP = "bottom_up"
    TOP_DOWN = "top_down"


class MessageKind(Enum):
    QUERY = "query"
    ACC = "acc"
    START = "start"
    END = "end"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    receiver: int
    sent_at: float


class RouterMode(Enum):
    INITIALIZE = "initialize"
    TERMINATION_CHECK = "termination_check"
    EVALUATE = "evaluate"
    STORING = "storing"
    FORWARDING = "forwarding"


class PortStatus(Enum):
    IDLE = "idle"
    AWAITING_ACC = "awaiting_acc"
    AWAITING_START = "awaiting_start"
    SENDING = "sending"
    RECEIVING = "receiving"


_FREE = (PortStatus.IDLE, PortStatus.AWAITING_ACC)


@dataclass(frozen=True)
class PacketTransmission:
    """An active packet: 100 bits total, the first 10 a powerless tag."""

    sender: int
    receiver: int
    start_time: float
    bit_time: float
    total_bits: int = 100
    tag_bits: int = 10

    @property
    def duration(self) -> float:
        return self.total_bits * self.bit_time

    @property
    def payload_delay(self) -> float:
        return self.tag_bits * self.bit_time


@dataclass(frozen=True)
class SwitchCommand:
    edge_index: int
    route: bool
    transmission: PacketTransmission | None = None


@dataclass(frozen=True)
class RouterParams:
    """Timing constants shared by every router in a run."""

    delta_t_u: float
    bit_time: float
    total_bits: int = 100
    tag_bits: int = 10
    gate_all_modes: bool = False

    @property
    def packet_duration(self) -> float:
        return self.total_bits * self.bit_time

    @property
    def stale_age(self) -> float:
        # one full automaton cycle; older query/acc messages are dropped
        return 3.0 * self.delta_t_u + self.packet_duration

    def accept_window(self, n_ports: int) -> float:
        # a query is answered, and an acc is acted on, only while younger
        # than one handshake cycle; older ones describe a voltage situation
        # that an intervening packet transfer may have overturned
        return 4.0 * self.delta_t_u + (2 * n_ports + 4) * self.bit_time

    def offer_timeout(self, n_ports: int) -> float:
        # a pending acc outlives the acceptance window (plus transit) so a
        # last-moment start always finds its port still committed
        return self.accept_window(n_ports) + 4.0 * self.bit_time

    def receive_timeout(self, n_ports: int) -> float:
        # safety valve only: a started receive always ends with the
        # sender's end message after exactly one packet
        return self.packet_duration + self.offer_timeout(n_ports) + 8.0 * self.bit_time

    @property
    def time_slack(self) -> float:
        # absorbs float rounding of k*dt differences in >= comparisons
        return self.bit_time * 1e-6


@dataclass
class Port:
    """One switchable edge endpoint with its conversation state."""

    edge_index: int
    peer: int
    weight: float
    status: PortStatus = PortStatus.IDLE
    status_since: float = 0.0
    tx: PacketTransmission | None = None
    queries: deque = field(default_factory=deque)
    accs: deque = field(default_factory=deque)
    ends: deque = field(default_factory=deque)

    def set_status(self, status: PortStatus, now: float) -> None:
        self.status = status
        self.status_since = now
        if status is not PortStatus.SENDING:
            self.tx = None


class RouterState:
    """Mutable automaton state for one source or storage node."""

    def __init__(
        self,
        node_id: int,
        method: ControlMethod,
        ports: list[Port],
        capacitance: float,
        clamped_voltage: float | None = None,
    ):
        self.node_id = node_id
        self.method = method
        self.ports = sorted(ports, key=lambda p: p.peer)
        self.capacitance = capacitance
        self.clamped_voltage = clamped_voltage
        self.mode = RouterMode.INITIALIZE
        self.mode_entry_time = 0.0
        self.cursor = 0
        self.holding = False  # pass is parked at ports[cursor] mid-transfer
        self.eval_target: int | None = None  # port index chosen at evaluate
        self.pending_starts: deque = deque()
        self.violations = 0
        self.dropped: list[tuple[float, Message]] = []
        self._port_by_peer = {p.peer: i for i, p in enumerate(self.ports)}
        self._forward_seq: list[int] | None = None
        self._windows_key: int | None = None  # id of the params they came from
        self._accept_w = self._offer_w = self._receive_w = 0.0

    # -- message intake -------------------------------------------------

    def deliver(self, msg: Message) -> None:
        """Queue one incoming message (engine calls this at delivery time)."""
        i = self._port_by_peer.get(msg.sender)
        if i is None:
            self.violations += 1
            return
        port = self.ports[i]
        if msg.kind is MessageKind.QUERY:
            port.queries.append(msg)
        elif msg.kind is MessageKind.ACC:
            port.accs.append(msg)
        elif msg.kind is MessageKind.END:
            port.ends.append(msg)
        else:  # START acts immediately, outside the port loops
            self.pending_starts.append(msg)

    # -- helpers ---------------------------------------------------------

    def _has_receive(self) -> bool:
        return any(p.status is PortStatus.RECEIVING for p in self.ports)

    def _has_send(self) -> bool:
        return any(
            p.status in (PortStatus.SENDING, PortStatus.AWAITING_START)
            for p in self.ports
        )

    def _purge_stale(self, port: Port, now: float, params: RouterParams) -> None:
        for queue in (port.queries, port.accs):
            while queue and now - queue[0].sent_at > params.stale_age:
                self.dropped.append((now, queue.popleft()))

    @staticmethod
    def _peek_fresh(queue: deque, now: float, window: float) -> int | None:
        """Index of the oldest message younger than ``window``, if any."""
        for i, msg in enumerate(queue):
            if now - msg.sent_at <= window:
                return i
        return None

    def _enter(self, mode: RouterMode, now: float) -> None:
        self.mode = mode
        self.mode_entry_time = now
        self.cursor = 0
        self.holding = False

    def _set_target(self, port_index: int) -> None:
        """Record the evaluate target and the derived forwarding order
        (target first, remaining ports in peer order)."""
        if port_index != self.eval_target or self._forward_seq is None:
            self.eval_target = port_index
            self._forward_seq = [port_index] + [
                i for i in range(len(self.ports)) if i != port_index
            ]

    def _refresh_windows(self, params: RouterParams) -> None:
        if self._windows_key != id(params):
            n = len(self.ports)
            self._accept_w = params.accept_window(n)
            self._offer_w = params.offer_timeout(n)
            self._receive_w = params.receive_timeout(n)
            self._windows_key = id(params)

    def _gate_open(self, now: float, params: RouterParams) -> bool:
        if self.mode is RouterMode.INITIALIZE or params.gate_all_modes:
            return now - self.mode_entry_time >= params.delta_t_u - params.time_slack
        return True


def evaluate(
    node_id: int,
    own_voltage: float,
    neighbor_info: list[tuple[int, float, float]],
    capacitance: float,
) -> tuple[float, int]:
    """Store-or-forward decision value g and its target neighbor.

    The target maximizes w_ij * |v_j - v_i| over the adjacent nodes
    (nominal conductances, regardless of current switch state); ties go to
    the smallest node id. g = C^-1 * w * (v_target - v_own): non-negative
    means the node seeks to receive, negative means it can supply.
    """
    if not neighbor_info:
        raise ValueError(f"node {node_id} has no neighbors to evaluate")
    best = min(neighbor_info, key=lambda t: (-t[2] * abs(t[1] - own_voltage), t[0]))
    peer, v_peer, w = best
    g = w * (v_peer - own_voltage) / capacitance
    return g, peer


def step_router(
    state: RouterState,
    local_view: tuple[float, dict[int, float]],
    now: float,
    params: RouterParams,
) -> tuple[list[Message], list[SwitchCommand]]:
    """Advance one router by one engine tick.

    ``local_view`` is (own voltage, {peer id: voltage}); clamped nodes use
    their fixed voltage regardless of the supplied value. Returns the
    messages to send this tick and the switch commands for the engine.

    Port loops advance one port per tick. A pass that opens a transfer
    parks at that port until the transfer retires (packets are serialized:
    one active transfer per node), then continues with the remaining
    ports, so every requesting port gets its turn within a pass. Packet
    begin/completion and offer timeouts are handled every tick regardless
    of mode.
    """
    own_v, neighbor_v = local_view
    if state.clamped_voltage is not None:
        own_v = state.clamped_voltage
    outbox: list[Message] = []
    commands: list[SwitchCommand] = []
    me = state.node_id
    state._refresh_windows(params)

    # background: start messages begin transmissions immediately
    while state.pending_starts:
        msg = state.pending_starts.popleft()
        port = state.ports[state._port_by_peer[msg.sender]]
        if port.status is PortStatus.AWAITING_START:
            tx = PacketTransmission(
                sender=me,
                receiver=port.peer,
                start_time=now,
                bit_time=params.bit_time,
                total_bits=params.total_bits,
                tag_bits=params.tag_bits,
            )
            port.set_status(PortStatus.SENDING, now)
            port.tx = tx
            commands.append(SwitchCommand(port.edge_index, True, tx))
        else:
            state.violations += 1

    # background: finished packets emit end and unroute exactly on time
    for port in state.ports:
        if port.status is PortStatus.SENDING:
            if now - port.tx.start_time >= port.tx.duration - params.time_slack:
                outbox.append(Message(MessageKind.END, me, port.peer, now))
                commands.append(SwitchCommand(port.edge_index, False))
                port.set_status(PortStatus.IDLE, now)
        elif port.status is PortStatus.AWAITING_START:
            if now - port.status_since > state._offer_w:
                port.set_status(PortStatus.IDLE, now)

    mode = state.mode
    if mode is RouterMode.INITIALIZE:
        if state._gate_open(now, params):
            state._enter(RouterMode.TERMINATION_CHECK, now)

    elif mode is RouterMode.TERMINATION_CHECK:
        if state.cursor < len(state.ports):
            port = state.ports[state.cursor]
            if port.queries or port.accs:
                state._purge_stale(port, now, params)
            while port.ends:
                port.ends.popleft()
                if port.status is PortStatus.RECEIVING:
                    port.set_status(PortStatus.IDLE, now)
                    commands.append(SwitchCommand(port.edge_index, False))
                else:
                    state.violations += 1
            state.cursor += 1
        if state.cursor >= len(state.ports) and state._gate_open(now, params):
            state._enter(RouterMode.EVALUATE, now)

    elif mode is RouterMode.EVALUATE:
        info = [(p.peer, neighbor_v[p.peer], p.weight) for p in state.ports]
        g, target_peer = evaluate(me, own_v, info, state.capacitance)
        state._set_target(state._port_by_peer[target_peer])
        if state._gate_open(now, params):
            if g >= 0.0:
                state._enter(RouterMode.STORING, now)
                if state.method is ControlMethod.BOTTOM_UP:
                    for port in state.ports:
                        if port.status in _FREE:
                            outbox.append(
                                Message(MessageKind.QUERY, me, port.peer, now)
                            )
                            port.set_status(PortStatus.AWAITING_ACC, now)
            else:
                state._enter(RouterMode.FORWARDING, now)

    elif mode is RouterMode.STORING:
        if state.cursor < len(state.ports):
            port = state.ports[state.cursor]
            if port.queries or port.accs:
                state._purge_stale(port, now, params)
            if state.holding:
                # parked at this port until the sender's end message; the
                # pass accepts a single packet, then restarts the cycle
                released = False
                if port.ends:
                    port.ends.popleft()
                    released = True
                elif now - port.status_since > state._receive_w:
                    state.violations += 1  # should be unreachable
                    released = True
                if released:
                    port.set_status(PortStatus.IDLE, now)
                    commands.append(SwitchCommand(port.edge_index, False))
                    state._enter(RouterMode.INITIALIZE, now)
            else:
                hit = None
                if port.accs and port.status in _FREE and not state._has_receive():
                    hit = state._peek_fresh(port.accs, now, state._accept_w)
                if hit is not None:
                    del port.accs[hit]
                    outbox.append(Message(MessageKind.START, me, port.peer, now))
                    port.set_status(PortStatus.RECEIVING, now)
                    state.holding = True  # receive the packet before moving on
                else:
                    state.cursor += 1
        if state.cursor >= len(state.ports) and state._gate_open(now, params):
            state._enter(RouterMode.INITIALIZE, now)

    elif mode is RouterMode.FORWARDING:
        if state.cursor < len(state.ports):
            # the evaluate target (largest weighted voltage gap) is served
            # first; the remaining ports follow in peer order
            port = state.ports[state._forward_seq[state.cursor]]
            if port.queries or port.accs:
                state._purge_stale(port, now, params)
            if state.holding:
                # parked while the offer is pending or the packet is on the
                # wire; the background section retires both states
                if port.status is PortStatus.IDLE:
                    state.holding = False
                    state.cursor += 1
            else:
                offered = False
                if port.status in _FREE and not state._has_send():
                    if state.method is ControlMethod.BOTTOM_UP:
                        # the pass itself certifies g < 0 (chosen at evaluate);
                        # every freshly requesting port gets served in turn
                        hit = (
                            state._peek_fresh(port.queries, now, state._accept_w)
                            if port.queries
                            else None
                        )
                        if hit is not None:
                            del port.queries[hit]
                            offered = True
                    else:
                        # top-down: unsolicited acc to any strictly lower
                        # neighbor
                        offered = neighbor_v[port.peer] < own_v
                if offered:
                    outbox.append(Message(MessageKind.ACC, me, port.peer, now))
                    port.set_status(PortStatus.AWAITING_START, now)
                    state.holding = True  # complete this transfer first
                else:
                    state.cursor += 1
        if state.cursor >= len(state.ports) and state._gate_open(now, params):
            state._enter(RouterMode.INITIALIZE, now)

    return outbox, commands
