"""Multi-PoP emulation platform.

Resource models, service chaining and workload simulation backed by the
C++ core.
"""

from ._popnet import (
    Error,
    Platform,
    builtin_scenarios,
    compute_path,
    cpu_limit_model_a,
    cpu_limit_model_b,
    export_sweep,
    isolation_sweep,
    normalize_topology,
    run_scenario,
    topology_graph,
    validate_topology,
)

__version__ = "0.3.0"

__all__ = [
    "Error",
    "Platform",
    "builtin_scenarios",
    "compute_path",
    "cpu_limit_model_a",
    "cpu_limit_model_b",
    "export_sweep",
    "isolation_sweep",
    "normalize_topology",
    "run_scenario",
    "topology_graph",
    "validate_topology",
]
