"""Command-line entry point: run, analyze, verify.

``run`` executes a scenario (builtin name or INI file) and writes one
trace file per run plus message logs and a summary. ``analyze`` reads a
trace directory back and emits moving-average series, endpoint scatter
files, and optional plots. ``verify`` runs the built-in acceptance
scenarios and prints one pass/fail line per criterion.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from .analysis import endpoint_distribution, energy_audit, moving_average
from .engine import SimConfig, build_config_graph, run_ensemble
from .errors import ConfigError
from .graph import NodeKind, TopologySpec
from .router import ControlMethod
from .scenarios import BUILTIN_SCENARIOS, TOPOLOGIES, builtin_scenario
from .traceio import read_trace, write_trace

_METHOD_NAMES = {
    "bottomup": ControlMethod.BOTTOM_UP,
    "bottom_up": ControlMethod.BOTTOM_UP,
    "topdown": ControlMethod.TOP_DOWN,
    "top_down": ControlMethod.TOP_DOWN,
}

_PARAM_FIELDS = {
    "v_src": float,
    "capacitance": float,
    "bit_time": float,
    "total_bits": int,
    "tag_bits": int,
    "switch_resistance": float,
    "load_resistance": float,
    "delta_t_u": float,
    "message_latency_ticks": int,
    "gate_all_modes": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "initial_voltages": lambda s: [float(x) for x in s.split(",")],
}

_RUN_FIELDS = {"end_time": float, "seed": int, "n_runs": int}


def load_scenario(path: str | Path, notices: list[str] | None = None) -> tuple[SimConfig, dict]:
    """Parse an INI scenario file into a SimConfig plus [output] settings.

    Unknown sections or keys are rejected; parameters missing from the
    file fall back to the standard defaults with a recorded notice.
    """
    notices = notices if notices is not None else []
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"cannot read scenario file {path}")
    known_sections = {"graph", "methods", "params", "run", "output"}
    unknown = set(parser.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown scenario sections {sorted(unknown)}")
    if "graph" not in parser:
        raise ConfigError("scenario file needs a [graph] section")

    graph_sec = parser["graph"]
    unknown = set(graph_sec) - {"builtin", "nodes", "edges"}
    if unknown:
        raise ConfigError(f"unknown [graph] keys {sorted(unknown)}")
    if "builtin" in graph_sec:
        name = graph_sec["builtin"].strip()
        if name not in TOPOLOGIES:
            raise ConfigError(
                f"unknown builtin topology {name!r}; choose from {sorted(TOPOLOGIES)}"
            )
        topology = TOPOLOGIES[name]()
    else:
        topology = _parse_topology(graph_sec)

    methods: dict[int, ControlMethod] = {}
    default_method: ControlMethod | None = None
    if "methods" in parser:
        for key, value in parser["methods"].items():
            method = _METHOD_NAMES.get(value.strip().lower())
            if method is None:
                raise ConfigError(
                    f"unknown control method {value!r} for node {key!r}"
                )
            if key == "default":
                default_method = method
            else:
                methods[int(key)] = method
    router_nodes = [
        i for i, k in topology.nodes if k in (NodeKind.SOURCE, NodeKind.STORAGE)
    ]
    for i in router_nodes:
        if i not in methods:
            if default_method is None:
                raise ConfigError(
                    f"no control method for node {i} and no default given"
                )
            methods[i] = default_method

    config = SimConfig(topology=topology, methods=methods, name=Path(path).stem)
    for section, fields in (("params", _PARAM_FIELDS), ("run", _RUN_FIELDS)):
        if section not in parser:
            notices.append(f"[{section}] missing; using standard defaults")
            continue
        sec = parser[section]
        unknown = set(sec) - set(fields)
        if unknown:
            raise ConfigError(f"unknown [{section}] keys {sorted(unknown)}")
        for key, cast in fields.items():
            if key in sec:
                try:
                    setattr(config, key, cast(sec[key]))
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {sec[key]!r}") from exc
            else:
                notices.append(f"{key} not set; using default {getattr(config, key)}")

    output = {}
    if "output" in parser:
        sec = parser["output"]
        unknown = set(sec) - {"directory", "formats"}
        if unknown:
            raise ConfigError(f"unknown [output] keys {sorted(unknown)}")
        output = dict(sec)
    return config, output


def _parse_topology(section) -> TopologySpec:
    if "nodes" not in section or "edges" not in section:
        raise ConfigError("[graph] needs either builtin= or nodes= and edges=")
    kind_names = {k.value: k for k in NodeKind}
    nodes = []
    for item in section["nodes"].replace(",", " ").split():
        ident, _, kind = item.partition(":")
        if kind not in kind_names:
            raise ConfigError(f"bad node spec {item!r} (want id:kind)")
        nodes.append((int(ident), kind_names[kind]))
    edges = []
    for item in section["edges"].replace(",", " ").split():
        pair, _, res = item.partition(":")
        a, _, b = pair.partition("-")
        try:
            edges.append((int(a), int(b), float(res) if res else 0.0))
        except ValueError as exc:
            raise ConfigError(f"bad edge spec {item!r} (want a-b[:R])") from exc
    return TopologySpec(nodes=nodes, edges=edges)


def _resolve_scenario(arg: str, notices: list[str]) -> tuple[SimConfig, dict]:
    if arg in BUILTIN_SCENARIOS:
        return builtin_scenario(arg), {}
    path = Path(arg)
    if not path.exists():
        raise ConfigError(
            f"{arg!r} is neither a builtin scenario ({sorted(BUILTIN_SCENARIOS)}) "
            "nor a scenario file"
        )
    return load_scenario(path, notices)


def cmd_run(args) -> int:
    notices: list[str] = []
    config, output = _resolve_scenario(args.scenario, notices)
    if args.seed is not None:
        config.seed = args.seed
    if args.runs is not None:
        config.n_runs = args.runs
    if args.end_time is not None:
        config.end_time = args.end_time
    if args.message_latency_ticks is not None:
        config.message_latency_ticks = args.message_latency_ticks
    if args.gate_all_modes:
        config.gate_all_modes = True
    out_dir = Path(args.out or output.get("directory") or f"out/{config.name}")

    for note in notices:
        print(f"notice: {note}")
    graph = build_config_graph(config)
    traces = run_ensemble(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    for trace in traces:
        path = write_trace(trace, out_dir)
        print(f"wrote {path}")

    window = 1.25e-3
    t_end = float(traces[0].times[-1])
    lines = [
        f"scenario: {config.name}",
        f"config_hash: {config.config_hash()}",
        f"runs: {config.n_runs}  end_time: {config.end_time:g} s  seed: {config.seed}",
    ]
    if traces[0].times.size > 1:
        dist = endpoint_distribution(traces, t_end, window)
        mean_v = dist.voltages.mean(axis=0)
        lines.append(f"endpoint (t={t_end:g} s, {window:g} s window):")
        lines.append(
            "  mean voltages: "
            + " ".join(f"v{i}={x:.4f}" for i, x in enumerate(mean_v))
        )
        mean_p = dist.powers.mean(axis=0)
        lines.append(
            "  mean edge powers: "
            + " ".join(
                f"p{a}-{b}={x:.4f}"
                for (a, b, _), x in zip(dist.edge_list, mean_p)
            )
        )
    for trace in traces:
        audit = energy_audit(trace, graph, config)
        lines.append(
            f"run {trace.run_index}: supplied={audit.supplied:.6g} J "
            f"stored={audit.stored_delta:.6g} J dissipated={audit.dissipated:.6g} J "
            f"delivered={audit.delivered:.6g} J rel_residual={audit.relative_residual:.2e} "
            f"violations={trace.violations}"
        )
    summary = out_dir / "summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    print(f"wrote {summary}")
    return 0


def cmd_analyze(args) -> int:
    directory = Path(args.traces)
    trace_paths = sorted(directory.glob("run_*.trace.csv"))
    if not trace_paths:
        print(f"error: no trace files found in {directory}", file=sys.stderr)
        return 1
    traces = [read_trace(p) for p in trace_paths]
    if args.window is not None and args.window <= 0:
        print("error: window must be positive", file=sys.stderr)
        return 1
    window = args.window if args.window is not None else 1.25e-3
    t_last = float(traces[0].times[-1])
    t_end = args.t_end if args.t_end is not None else t_last
    if t_end > t_last + traces[0].dt / 2 or t_end < 0:
        print(
            f"error: t_end {t_end:g} outside available range [0, {t_last:g}]",
            file=sys.stderr,
        )
        return 1
    out_dir = Path(args.out or directory / "analysis")
    out_dir.mkdir(parents=True, exist_ok=True)

    for trace in traces:
        ma_v = moving_average(trace.voltages, window, trace.dt)
        ma_p = moving_average(trace.edge_powers, window, trace.dt)
        data = np.hstack([trace.times[:, None], ma_v, ma_p])
        n_nodes = trace.voltages.shape[1]
        cols = (
            ["time_s"]
            + [f"v{i}_V" for i in range(n_nodes)]
            + [f"p_{a}-{b}_W" for a, b, _ in trace.edge_list]
        )
        path = out_dir / f"ma_run_{trace.run_index:03d}.csv"
        np.savetxt(
            path,
            data,
            fmt="%.10g",
            delimiter=",",
            comments="# ",
            header=f"moving average, window={window:g} s\ncolumns=" + ",".join(cols),
        )
    dist = endpoint_distribution(traces, t_end, window)
    np.savetxt(
        out_dir / "endpoints_voltage.csv",
        dist.voltages,
        fmt="%.10g",
        delimiter=",",
        comments="# ",
        header=f"per-run node voltages at t={t_end:g} s\nrows=runs, cols=nodes",
    )
    np.savetxt(
        out_dir / "endpoints_power.csv",
        dist.powers,
        fmt="%.10g",
        delimiter=",",
        comments="# ",
        header=(
            f"per-run edge powers at t={t_end:g} s\nrows=runs, cols="
            + ",".join(f"{a}-{b}" for a, b, _ in dist.edge_list)
        ),
    )
    print(f"wrote analysis files to {out_dir}")
    if args.format == "plot":
        _emit_plots(traces, dist, window, out_dir)
    return 0


def _emit_plots(traces, dist, window, out_dir: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    trace = traces[0]
    n_nodes = trace.voltages.shape[1]
    fig, (ax_v, ax_p) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    ma_v = moving_average(trace.voltages, window, trace.dt)
    ma_p = moving_average(trace.edge_powers, window, trace.dt)
    for i in range(n_nodes):
        if trace.node_kinds[i] is NodeKind.STORAGE:
            ax_v.plot(trace.times, ma_v[:, i], label=f"v{i}")
    ax_v.set_ylabel("voltage [V]")
    ax_v.legend(fontsize=8)
    for ei, (a, b, sw) in enumerate(trace.edge_list):
        if sw:
            ax_p.plot(trace.times, ma_p[:, ei], label=f"p{a}-{b}")
    ax_p.set_xlabel("time [s]")
    ax_p.set_ylabel("power [W]")
    ax_p.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "timeseries_run_{:03d}.svg".format(trace.run_index))
    plt.close(fig)

    fig, (ax_v, ax_p) = plt.subplots(1, 2, figsize=(10, 4))
    for r in range(dist.voltages.shape[0]):
        ax_v.plot(range(dist.voltages.shape[1]), dist.voltages[r], "o", alpha=0.6)
        ax_p.plot(range(dist.powers.shape[1]), dist.powers[r], "o", alpha=0.6)
    ax_v.set_xlabel("node")
    ax_v.set_ylabel(f"voltage at t={dist.t_end:g} s [V]")
    ax_p.set_xlabel("edge index")
    ax_p.set_ylabel(f"power at t={dist.t_end:g} s [W]")
    fig.tight_layout()
    fig.savefig(out_dir / "endpoints.svg")
    plt.close(fig)
    print(f"wrote plots to {out_dir}")


def cmd_verify(args) -> int:
    from .verify import run_all

    only = None
    if args.only:
        only = {int(x) for x in args.only.split(",")}
    results = run_all(only=only)
    failed = [name for name, ok, _ in results if not ok]
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ppnsim",
        description="Deterministic power packet network simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write traces")
    p_run.add_argument("scenario", nargs="?", help="builtin name or scenario file")
    p_run.add_argument("--scenario", dest="scenario_flag", help=argparse.SUPPRESS)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--runs", type=int)
    p_run.add_argument("--end-time", type=float, dest="end_time")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--format", choices=("csv", "plot"), default="csv")
    p_run.add_argument("--message-latency-ticks", type=int, dest="message_latency_ticks")
    p_run.add_argument("--gate-all-modes", action="store_true", dest="gate_all_modes")

    p_an = sub.add_parser("analyze", help="post-process a trace directory")
    p_an.add_argument("traces", help="directory produced by ppnsim run")
    p_an.add_argument("--t-end", type=float, dest="t_end")
    p_an.add_argument("--window", type=float, default=1.25e-3)
    p_an.add_argument("--out", help="output directory")
    p_an.add_argument("--format", choices=("csv", "plot"), default="csv")

    p_ver = sub.add_parser("verify", help="run the built-in acceptance criteria")
    p_ver.add_argument("--only", help="comma-separated criterion numbers")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            if getattr(args, "scenario_flag", None):
                args.scenario = args.scenario_flag
            if not args.scenario:
                parser.error("run needs a scenario (positional or --scenario)")
            return cmd_run(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        return cmd_verify(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
