"""Modular Bayesian optimization: search spaces, surrogates, acquisition functions and loops."""

from .acqopt import AcqOptConfig, Candidate, optimize_acq, optimize_cmaes, optimize_local_search, optimize_random
from .acquisition import AcqContext, make_acquisition
from .config import AcqConfig, LoopConfig, SurrogateConfig, default_config, mixed_default, numeric_default
from .engine import Archive, Objective, OptimInstance, assign_result, oi, pareto_front, trm
from .exceptions import (AcqOptError, ConfigError, EvalFailed, FitFailed, MboError, SurrogateError, Terminated,
                         WorkerCrash)
from .loops import MboOptimizer, run_ego, run_mpcl, run_parego, run_smsego
from .parallel import AsyncConfig, run_async
from .space import ParamSpace, p_dbl, p_fct, p_int, p_lgl

__version__ = "0.1.0"

__all__ = [
    "AcqConfig", "AcqContext", "AcqOptConfig", "AcqOptError", "Archive", "AsyncConfig", "Candidate",
    "ConfigError", "EvalFailed", "FitFailed", "LoopConfig", "MboError", "MboOptimizer", "Objective",
    "OptimInstance", "ParamSpace", "SurrogateConfig", "SurrogateError", "Terminated", "WorkerCrash",
    "assign_result", "default_config", "make_acquisition", "mixed_default", "numeric_default", "oi",
    "optimize_acq", "optimize_cmaes", "optimize_local_search", "optimize_random", "p_dbl", "p_fct", "p_int",
    "p_lgl", "pareto_front", "run_async", "run_ego", "run_mpcl", "run_parego", "run_smsego", "trm",
]
