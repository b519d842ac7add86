"""Memory-planning compiler, verifier and execution simulator for
device-assigned dataflow graphs.

Graphs cross the boundary as JSON strings in the same schemas the command
line tool reads and writes.
"""

from _memplan import (
    MemplanError,
    build_memgraph,
    compare_policies,
    gen_layered,
    gen_matmul,
    gen_random_dag,
    memgraph_to_dot,
    simulate,
    taskgraph_to_dot,
    topological_order,
    validate_taskgraph,
    verify,
)

__all__ = [
    "MemplanError",
    "build_memgraph",
    "compare_policies",
    "gen_layered",
    "gen_matmul",
    "gen_random_dag",
    "memgraph_to_dot",
    "simulate",
    "taskgraph_to_dot",
    "topological_order",
    "validate_taskgraph",
    "verify",
]
