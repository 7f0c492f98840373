"""Builtin desk-scale topologies and named experiment presets.

``chain5``: one source feeding three storages in a line, the last storage
draining to a sink. ``trimesh9``: one source at the apex of a subdivided
triangle of six storages, with two corner storages draining to sinks.
"""

from __future__ import annotations

from .engine import SimConfig
from .errors import ConfigError
from .graph import NodeKind, TopologySpec
from .router import ControlMethod


def chain5_topology() -> TopologySpec:
    """Five-node chain: source 0, storages 1-3, sink 4."""
    return TopologySpec(
        name="chain5",
        nodes=[
            (0, NodeKind.SOURCE),
            (1, NodeKind.STORAGE),
            (2, NodeKind.STORAGE),
            (3, NodeKind.STORAGE),
            (4, NodeKind.SINK),
        ],
        edges=[(0, 1, 0.0), (1, 2, 0.0), (2, 3, 0.0), (3, 4, 0.0)],
    )


def trimesh9_topology() -> TopologySpec:
    """Nine-node triangular mesh: source 0, storages 1-6, sinks 7 and 8.

    Storages form a subdivided triangle (corners 1, 4, 6; midpoints
    2, 3, 5); the corner storages 4 and 6 carry the sink paths.
    """
    return TopologySpec(
        name="trimesh9",
        nodes=[
            (0, NodeKind.SOURCE),
            (1, NodeKind.STORAGE),
            (2, NodeKind.STORAGE),
            (3, NodeKind.STORAGE),
            (4, NodeKind.STORAGE),
            (5, NodeKind.STORAGE),
            (6, NodeKind.STORAGE),
            (7, NodeKind.SINK),
            (8, NodeKind.SINK),
        ],
        edges=[
            (0, 1, 0.0),
            (1, 2, 0.0),
            (1, 3, 0.0),
            (2, 3, 0.0),
            (2, 4, 0.0),
            (2, 5, 0.0),
            (3, 5, 0.0),
            (3, 6, 0.0),
            (4, 5, 0.0),
            (5, 6, 0.0),
            (4, 7, 0.0),
            (6, 8, 0.0),
        ],
    )


TOPOLOGIES = {
    "chain5": chain5_topology,
    "trimesh9": trimesh9_topology,
}

# mixed assignment: supply-driven control upstream and on storage 4,
# demand-driven control on storages 3, 5 and 6
TRIMESH9_MIXED_METHODS = {
    0: ControlMethod.TOP_DOWN,
    1: ControlMethod.TOP_DOWN,
    2: ControlMethod.TOP_DOWN,
    4: ControlMethod.TOP_DOWN,
    3: ControlMethod.BOTTOM_UP,
    5: ControlMethod.BOTTOM_UP,
    6: ControlMethod.BOTTOM_UP,
}


def _uniform_methods(topology: TopologySpec, method: ControlMethod):
    return {
        i: method
        for i, kind in topology.nodes
        if kind in (NodeKind.SOURCE, NodeKind.STORAGE)
    }


def builtin_scenario(name: str, **overrides) -> SimConfig:
    """A ready-to-run SimConfig for one of the named experiments.

    Names: chain5-bottomup, chain5-topdown, trimesh9-bottomup,
    trimesh9-topdown, trimesh9-mixed. Keyword overrides replace any
    SimConfig field.
    """
    key = name.lower()
    if key not in BUILTIN_SCENARIOS:
        raise ConfigError(
            f"unknown scenario {name!r}; choose from {sorted(BUILTIN_SCENARIOS)}"
        )
    config = BUILTIN_SCENARIOS[key]()
    for field_name, value in overrides.items():
        if not hasattr(config, field_name):
            raise ConfigError(f"unknown SimConfig field {field_name!r}")
        setattr(config, field_name, value)
    return config


def _chain5(method: ControlMethod) -> SimConfig:
    topo = chain5_topology()
    return SimConfig(
        topology=topo,
        methods=_uniform_methods(topo, method),
        end_time=0.1,
        name=f"chain5-{'bottomup' if method is ControlMethod.BOTTOM_UP else 'topdown'}",
    )


def _trimesh9(methods, label: str) -> SimConfig:
    topo = trimesh9_topology()
    if isinstance(methods, ControlMethod):
        methods = _uniform_methods(topo, methods)
    return SimConfig(
        topology=topo, methods=dict(methods), end_time=0.2, name=f"trimesh9-{label}"
    )


BUILTIN_SCENARIOS = {
    "chain5-bottomup": lambda: _chain5(ControlMethod.BOTTOM_UP),
    "chain5-topdown": lambda: _chain5(ControlMethod.TOP_DOWN),
    "trimesh9-bottomup": lambda: _trimesh9(ControlMethod.BOTTOM_UP, "bottomup"),
    "trimesh9-topdown": lambda: _trimesh9(ControlMethod.TOP_DOWN, "topdown"),
    "trimesh9-mixed": lambda: _trimesh9(TRIMESH9_MIXED_METHODS, "mixed"),
}
