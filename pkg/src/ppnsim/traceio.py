"""Columnar plain-text persistence for traces.

One CSV per run with a self-describing comment header (column names,
units, config hash) followed by the sample rows, plus a companion message
log. Floats are written with 17 significant digits so a written trace
reads back bit-exactly.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .engine import Trace
from .graph import NodeKind
from .router import Message, MessageKind

_FMT = "%.17g"


def trace_filename(run_index: int) -> str:
    return f"run_{run_index:03d}.trace.csv"


def message_filename(run_index: int) -> str:
    return f"run_{run_index:03d}.messages.csv"


def write_trace(trace: Trace, directory: str | Path) -> Path:
    """Write one trace and its message log; returns the trace path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / trace_filename(trace.run_index)

    n_nodes = trace.voltages.shape[1]
    edge_names = [f"{a}-{b}" for a, b, _ in trace.edge_list]
    columns = (
        ["time_s"]
        + [f"v{i}_V" for i in range(n_nodes)]
        + [f"i_{e}_A" for e in edge_names]
        + [f"p_{e}_W" for e in edge_names]
        + [f"s_{e}" for e in edge_names]
    )
    header_lines = [
        "ppnsim trace v1",
        f"config_hash={trace.config_hash}",
        f"run_index={trace.run_index}",
        f"dt={_FMT % trace.dt}",
        f"v_src={_FMT % trace.v_src}",
        f"n_samples={trace.n_samples}",
        f"violations={trace.violations}",
        f"stale_drops={len(trace.dropped_messages)}",
        "truncated_edges=" + ",".join(str(e) for e in trace.truncated_edges),
        "node_kinds=" + ",".join(k.value for k in trace.node_kinds),
        "capacitances=" + ",".join(_FMT % c for c in trace.capacitances),
        "edges="
        + ",".join(
            f"{a}-{b}:{'s' if sw else 'f'}" for a, b, sw in trace.edge_list
        ),
    ] + [f"warning={w}" for w in trace.warnings]
    header_lines.append("columns=" + ",".join(columns))

    data = np.hstack(
        [
            trace.times[:, None],
            trace.voltages,
            trace.edge_currents,
            trace.edge_powers,
            trace.switch_states.astype(float),
        ]
    )
    buf = io.StringIO()
    np.savetxt(buf, data, fmt=_FMT, delimiter=",", comments="# ",
               header="\n".join(header_lines))
    path.write_text(buf.getvalue())

    mpath = directory / message_filename(trace.run_index)
    dropped_at = {id(m): t for t, m in trace.dropped_messages}
    lines = ["# ppnsim messages v1", "# columns=kind,sender,receiver,sent_at,dropped_at"]
    for m in trace.messages:
        drop = dropped_at.get(id(m))
        lines.append(
            f"{m.kind.value},{m.sender},{m.receiver},{_FMT % m.sent_at},"
            + (_FMT % drop if drop is not None else "")
        )
    mpath.write_text("\n".join(lines) + "\n")
    return path


def read_trace(path: str | Path) -> Trace:
    """Read a trace written by write_trace (message log included if present)."""
    path = Path(path)
    meta: dict[str, str] = {}
    warnings: list[str] = []
    rows = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("# ").rstrip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    if key == "warning":
                        warnings.append(value)
                    else:
                        meta[key] = value
                continue
            rows.append(line)
    if "columns" not in meta:
        raise ValueError(f"{path} is not a ppnsim trace (missing columns header)")

    data = (
        np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", ndmin=2)
        if rows
        else np.zeros((0, len(meta["columns"].split(","))))
    )
    node_kinds = [NodeKind(k) for k in meta["node_kinds"].split(",")]
    n_nodes = len(node_kinds)
    edge_list = []
    if meta.get("edges"):
        for item in meta["edges"].split(","):
            pair, flag = item.split(":")
            a, b = pair.split("-")
            edge_list.append((int(a), int(b), flag == "s"))
    n_edges = len(edge_list)

    col = 0
    times = data[:, col]
    col += 1
    voltages = data[:, col : col + n_nodes]
    col += n_nodes
    currents = data[:, col : col + n_edges]
    col += n_edges
    powers = data[:, col : col + n_edges]
    col += n_edges
    switches = data[:, col : col + n_edges].astype(bool)

    messages: list[Message] = []
    dropped: list[tuple[float, Message]] = []
    mpath = path.with_name(path.name.replace(".trace.csv", ".messages.csv"))
    if mpath.exists():
        for line in mpath.read_text().splitlines():
            if not line or line.startswith("#"):
                continue
            kind, sender, receiver, sent_at, dropped_at = line.split(",")
            msg = Message(
                MessageKind(kind), int(sender), int(receiver), float(sent_at)
            )
            messages.append(msg)
            if dropped_at:
                dropped.append((float(dropped_at), msg))

    truncated = [
        int(x) for x in meta.get("truncated_edges", "").split(",") if x != ""
    ]
    return Trace(
        run_index=int(meta["run_index"]),
        config_hash=meta["config_hash"],
        dt=float(meta["dt"]),
        times=times,
        voltages=voltages,
        edge_currents=currents,
        edge_powers=powers,
        switch_states=switches,
        messages=messages,
        dropped_messages=dropped,
        violations=int(meta["violations"]),
        truncated_edges=truncated,
        warnings=warnings,
        node_kinds=node_kinds,
        capacitances=np.array([float(c) for c in meta["capacitances"].split(",")]),
        edge_list=edge_list,
        v_src=float(meta["v_src"]),
    )
