"""Sum-of-squares relaxations and rounding for shortest paths with vector costs.

Set ``SOSPATH_THREADS`` to cap the BLAS thread pools before first import.
"""

import os as _os

_threads = _os.environ.get("SOSPATH_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .combinatorics import approx_factor, bell  # noqa: E402
from .graph import (Block, Graph, LayeredGraph, Path, build_series_parallel,  # noqa: E402
                    graph_from_json, graph_to_json, leaf, parallel,
                    recognize_series_parallel, series, to_layered)
from .poly import Polynomial, flow_constraints, lp_objective, multiply  # noqa: E402
from .pseudoexp import (MomentTable, check_feasibility, check_majorization,  # noqa: E402
                        condition, from_distribution)
from .rounding import (find_path_layered, make_rng, round_group_atsp,  # noqa: E402
                       round_series_parallel, sample_edges, solve_lp_shortest_path,
                       steiner_from_atsp)
from .sdp import build_relaxation, solve  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Graph", "Path", "Block", "LayeredGraph", "build_series_parallel",
    "recognize_series_parallel", "to_layered", "leaf", "series", "parallel",
    "graph_to_json", "graph_from_json", "Polynomial", "multiply", "lp_objective",
    "flow_constraints", "MomentTable", "from_distribution", "condition",
    "check_feasibility", "check_majorization", "build_relaxation", "solve",
    "round_series_parallel", "sample_edges", "find_path_layered",
    "solve_lp_shortest_path", "round_group_atsp", "steiner_from_atsp", "make_rng",
    "bell", "approx_factor",
]
