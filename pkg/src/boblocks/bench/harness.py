"""Run optimizer configurations on benchmark problems."""

import numpy as np

from ..config import LoopConfig, default_config
from ..engine import OptimInstance, trm
from ..loops import mo_default, rng_streams, run_loop
from ..parallel import AsyncConfig, run_async
from .rsns import rsns

RANDOM_SEARCH = "random_search"


def base_config(problem, loop=None):
    if len(problem.codomain) > 1:
        return mo_default(problem.space, loop or "parego")
    return default_config(problem.space)


def resolve_config(problem, config):
    """``LoopConfig`` from a dict (layered on the problem's default) or pass-through.

    The string ``"random_search"`` (or ``{"loop": "random_search"}``) selects
    the random search baseline and is returned unchanged.
    """
    if isinstance(config, LoopConfig) or config == RANDOM_SEARCH:
        return config
    # inactive grid parameters arrive as None and keep their defaults
    config = {k: v for k, v in dict(config or {}).items() if v is not None}
    if config.get("loop") == RANDOM_SEARCH:
        return RANDOM_SEARCH
    return LoopConfig.from_dict(config, base=base_config(problem, config.get("loop")))


def run_random_search(instance, seed):
    """Uniform random points, one per batch, until the terminator is met."""
    _, rng, _ = rng_streams(seed, 0)
    while not instance.is_terminated:
        instance.eval_batch(instance.search_space.sample_random(1, rng))


def run_config(problem, config, seed, budget=None, workers=1, budget_rule="compare"):
    """One optimization run; returns the finished instance."""
    config = resolve_config(problem, config)
    n = problem.budget(budget_rule) if budget is None else int(budget)
    instance = OptimInstance(problem.objective(), trm("evals", n_evals=n))
    if config == RANDOM_SEARCH:
        run_random_search(instance, seed)
    elif workers > 1:
        run_async(instance, AsyncConfig(n_workers=workers, loop=config), seed=seed)
    else:
        instance.result = run_loop(instance, config, seed=seed)
    return instance


def final_best_value(instance):
    """Best raw value of the first objective."""
    return float(instance.archive.signs[0] * instance.archive.best_y())


def rsns_evaluator(scales, budget_rule="compare"):
    """``evaluator(config, problem, seed) -> RSNS`` for coordinate descent."""

    def evaluate(config, problem, seed):
        inst = run_config(problem, config, seed, budget_rule=budget_rule)
        return rsns(final_best_value(inst), scales[problem.name])

    return evaluate


def mean_rsns(problem, config, seeds, scale, budget_rule="compare"):
    """Per-seed RSNS values of one configuration on one problem."""
    return np.array([rsns(final_best_value(run_config(problem, config, s, budget_rule=budget_rule)), scale)
                     for s in seeds])
