"""Benchmark harness: problems, random-search-normalized scores, coordinate descent, traces, CLI."""

from .cd import ConfigGrid, CdState, GridParam, run_cd, separable_evaluator
from .harness import run_config, rsns_evaluator
from .problems import BenchProblem, budget_for, builtin_problems, get_problem
from .rsns import ExcludedProblem, RsnsScale, build_scale, rsns, rsns_std, rsns_std_from_pool, scale_from_values
from .traces import TraceRecord, trace_from_archive, traces_from_csv, traces_to_csv

__all__ = [
    "BenchProblem", "CdState", "ConfigGrid", "ExcludedProblem", "GridParam", "RsnsScale", "TraceRecord",
    "budget_for", "build_scale", "builtin_problems", "get_problem", "rsns", "rsns_evaluator", "rsns_std",
    "rsns_std_from_pool", "run_cd", "run_config", "scale_from_values", "separable_evaluator",
    "trace_from_archive", "traces_from_csv", "traces_to_csv",
]
