"""Post-processing of recorded traces.

Trailing moving averages, end-point distributions over run ensembles,
an energy audit that checks the discrete power bookkeeping of a trace,
and a protocol report used by the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import SimConfig, Trace
from .graph import NetworkGraph, NodeKind
from .router import MessageKind


def moving_average(series: np.ndarray, window: float, dt: float) -> np.ndarray:
    """Trailing mean over ``window`` seconds of a uniformly sampled series.

    Each output sample averages the input samples inside the trailing
    window (the current sample included); partial windows at the start
    average whatever is available. A window shorter than one sample
    interval returns the series unchanged.
    """
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("cannot average an empty series")
    if window <= 0:
        raise ValueError("window must be positive")
    m = int(round(window / dt))
    if m <= 1:
        return x.copy()
    if x.ndim == 1:
        csum = np.concatenate(([0.0], np.cumsum(x)))
    else:
        csum = np.concatenate((np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)))
    n = x.shape[0]
    hi = np.arange(1, n + 1)
    lo = np.maximum(hi - m, 0)
    counts = (hi - lo).astype(float)
    if x.ndim == 1:
        return (csum[hi] - csum[lo]) / counts
    return (csum[hi] - csum[lo]) / counts[:, None]


@dataclass
class EndpointDistribution:
    """Moving-averaged voltages and edge powers at one instant, per run."""

    t_end: float
    window: float
    voltages: np.ndarray  # (n_runs, n_nodes)
    powers: np.ndarray  # (n_runs, n_edges)
    run_indices: list[int]
    edge_list: list[tuple[int, int, bool]]


def endpoint_distribution(
    traces: list[Trace], t_end: float, window: float = 1.25e-3
) -> EndpointDistribution:
    """Extract per-run end points at the sample nearest ``t_end``."""
    if not traces:
        raise ValueError("no traces given")
    volts, pows, runs = [], [], []
    for tr in traces:
        if t_end > tr.times[-1] + tr.dt / 2:
            raise ValueError(
                f"t_end {t_end:g} beyond trace end {tr.times[-1]:g}"
            )
        idx = int(np.argmin(np.abs(tr.times - t_end)))
        volts.append(moving_average(tr.voltages, window, tr.dt)[idx])
        pows.append(moving_average(tr.edge_powers, window, tr.dt)[idx])
        runs.append(tr.run_index)
    return EndpointDistribution(
        t_end=t_end,
        window=window,
        voltages=np.array(volts),
        powers=np.array(pows),
        run_indices=runs,
        edge_list=traces[0].edge_list,
    )


@dataclass
class EnergyAudit:
    """Energy bookkeeping over a full trace, in joules.

    supplied = stored_delta + dissipated + delivered up to ``residual``.
    ``delivered`` is the energy entering the sink paths (their load and
    switch resistance); ``dissipated`` covers all other edges. The
    quadrature matches the integrator (midpoint voltages against the
    per-interval currents), so the residual reflects arithmetic noise
    rather than discretization error.
    """

    supplied: float
    stored_delta: float
    dissipated: float
    delivered: float
    residual: float
    relative_residual: float


def energy_audit(trace: Trace, graph: NetworkGraph, config: SimConfig) -> EnergyAudit:
    """Audit one trace against the conservation identity."""
    n_int = trace.n_samples - 1
    if n_int <= 0:
        return EnergyAudit(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    dt = trace.dt
    volts = trace.voltages
    cur = trace.edge_currents[:n_int]
    mid = 0.5 * (volts[:-1] + volts[1:])

    kinds = trace.node_kinds
    supplied = dissipated = delivered = 0.0
    for ei, (a, b, _sw) in enumerate(trace.edge_list):
        flow = cur[:, ei]
        drop = mid[:, a] - mid[:, b]
        if kinds[a] is NodeKind.SOURCE:
            supplied += dt * float(flow.sum()) * trace.v_src
            dissipated += dt * float((flow * drop).sum())
        elif kinds[b] is NodeKind.SINK:
            delivered += dt * float((flow * mid[:, a]).sum())
        else:
            dissipated += dt * float((flow * drop).sum())

    caps = np.nan_to_num(trace.capacitances)
    stored = 0.5 * float(caps @ (volts[-1] ** 2 - volts[0] ** 2))
    residual = supplied - stored - dissipated - delivered
    scale = max(abs(supplied), abs(stored), abs(dissipated) + abs(delivered), 1e-30)
    return EnergyAudit(
        supplied=supplied,
        stored_delta=stored,
        dissipated=dissipated,
        delivered=delivered,
        residual=residual,
        relative_residual=abs(residual) / scale,
    )


def charge_balance_residuals(trace: Trace) -> np.ndarray:
    """Per-step relative mismatch between storage charging and net inflow.

    For every interval the identity sum(C dv/dt) = i_in_total - i_out_total
    holds exactly for the integrator; the returned residuals are relative
    to the prevailing current scale.
    """
    n_int = trace.n_samples - 1
    if n_int <= 0:
        return np.zeros(0)
    dt = trace.dt
    kinds = trace.node_kinds
    caps = np.nan_to_num(trace.capacitances)
    dv = trace.voltages[1:] - trace.voltages[:-1]
    charge_rate = (dv * caps).sum(axis=1) / dt

    i_in = np.zeros(n_int)
    i_out = np.zeros(n_int)
    cur = trace.edge_currents[:n_int]
    for ei, (a, b, _sw) in enumerate(trace.edge_list):
        if kinds[a] is NodeKind.SOURCE:
            i_in += cur[:, ei]
        elif kinds[b] is NodeKind.SINK:
            i_out += cur[:, ei]
    net = i_in - i_out
    scale = np.maximum.reduce(
        [np.abs(i_in), np.abs(i_out), np.abs(charge_rate), np.full(n_int, 1e-12)]
    )
    return np.abs(charge_rate - net) / scale


@dataclass
class ProtocolReport:
    """Routed-interval accounting for one trace."""

    violations: int
    n_intervals: int
    unbracketed: list[tuple[int, int]]  # (edge, start tick)
    wrong_length: list[tuple[int, int, int]]  # (edge, start tick, ticks)
    truncated: list[tuple[int, int]]


def protocol_report(
    trace: Trace, packet_ticks: int = 100, latency_ticks: int = 1
) -> ProtocolReport:
    """Check that every switchable routed interval is bracketed by a
    start/end message pair and spans exactly ``packet_ticks`` bit times."""
    dt = trace.dt
    total_ticks = trace.n_samples - 1
    starts: dict[frozenset, set[int]] = {}
    ends: dict[frozenset, set[int]] = {}
    for msg in trace.messages:
        key = frozenset((msg.sender, msg.receiver))
        tick = int(round(msg.sent_at / dt))
        if msg.kind is MessageKind.START:
            starts.setdefault(key, set()).add(tick)
        elif msg.kind is MessageKind.END:
            ends.setdefault(key, set()).add(tick)

    n_intervals = 0
    unbracketed: list[tuple[int, int]] = []
    wrong_length: list[tuple[int, int, int]] = []
    truncated: list[tuple[int, int]] = []
    for ei, (a, b, switchable) in enumerate(trace.edge_list):
        if not switchable:
            continue
        col = trace.switch_states[:total_ticks, ei].astype(int)
        if col.size == 0:
            continue
        diff = np.diff(np.concatenate(([0], col, [0])))
        rises = np.nonzero(diff == 1)[0]
        falls = np.nonzero(diff == -1)[0]
        key = frozenset((a, b))
        for rise, fall in zip(rises, falls):
            n_intervals += 1
            # the receiving side's start precedes routing by the
            # message latency; the sender's end coincides with unrouting
            start_ok = (int(rise) - latency_ticks) in starts.get(key, set())
            if fall >= total_ticks and ei in trace.truncated_edges:
                truncated.append((ei, int(rise)))
                continue
            end_ok = int(fall) in ends.get(key, set())
            if not (start_ok and end_ok):
                unbracketed.append((ei, int(rise)))
            if fall - rise != packet_ticks:
                wrong_length.append((ei, int(rise), int(fall - rise)))
    return ProtocolReport(
        violations=trace.violations,
        n_intervals=n_intervals,
        unbracketed=unbracketed,
        wrong_length=wrong_length,
        truncated=truncated,
    )
